"""Square-summable coefficient sequences for causal linear filters."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

__all__ = ["CoefficientKind", "CoefficientSequence", "default_lag"]

# summation cutoff for kinds whose infinite tails have no closed form
_LOG_SUM_CUTOFF = 1 << 20
_MAX_LAG = 1 << 16


class CoefficientKind(str, enum.Enum):
    EXPLICIT = "explicit"
    GEOMETRIC = "geometric"
    POLYNOMIAL = "polynomial"
    LOG_DAMPED = "log-damped"
    DYADIC_SPARSE = "dyadic-sparse"


def _log_damped(i, alpha):
    i = np.asarray(i, dtype=np.float64)
    out = np.zeros_like(i)
    m = i >= 2
    out[m] = 1.0 / (i[m] * np.log(i[m]) ** alpha)
    return out


def _dyadic(i, c):
    i = np.asarray(i, dtype=np.int64)
    out = np.zeros(i.shape, dtype=np.float64)
    m = (i >= 2) & ((i & (i - 1)) == 0)
    k = np.log2(i[m].astype(np.float64)).round()
    out[m] = k ** (-c)
    return out


@dataclass(frozen=True)
class CoefficientSequence:
    """Filter coefficients ``a_0, a_1, ...`` truncated at lag ``lag``.

    Kinds and parameters:

    * ``explicit``: ``values`` (a_0..a_L); ``lag`` is ``len(values) - 1``.
    * ``geometric``: ``a_i = rho**i``, ``|rho| < 1``.
    * ``polynomial``: ``a_i = (1 + i)**-beta``, ``beta > 1/2``.
    * ``log-damped``: ``a_i = 1 / (i (log i)**alpha)`` for ``i >= 2``, else 0; ``alpha > 1/2``.
    * ``dyadic-sparse``: ``a_i = k**-c`` if ``i = 2**k`` with ``k >= 1``, else 0; ``c > 1/2``.

    ``lag=None`` picks the smallest lag whose dropped tail is below ``1e-3`` of
    the retained l2 norm (and, for summable kinds, of ``|A_0|``), capped at 2**16.
    """

    kind: CoefficientKind
    params: tuple = ()
    lag: int | None = None
    values: tuple = field(default=(), repr=False)

    def __post_init__(self):
        kind = CoefficientKind(self.kind)
        object.__setattr__(self, "kind", kind)
        p = tuple(float(x) for x in self.params)
        object.__setattr__(self, "params", p)
        if kind is CoefficientKind.EXPLICIT:
            vals = tuple(float(v) for v in self.values)
            if not vals:
                raise ValueError("explicit coefficients need at least one value")
            object.__setattr__(self, "values", vals)
            object.__setattr__(self, "lag", len(vals) - 1)
            return
        if len(p) != 1:
            raise ValueError(f"{kind.value} coefficients take exactly one parameter")
        (x,) = p
        if kind is CoefficientKind.GEOMETRIC and not abs(x) < 1:
            raise ValueError("geometric coefficients need |rho| < 1")
        if kind is CoefficientKind.POLYNOMIAL and not x > 0.5:
            raise ValueError("polynomial coefficients need beta > 1/2")
        if kind is CoefficientKind.LOG_DAMPED and not x > 0.5:
            raise ValueError("log-damped coefficients need alpha > 1/2")
        if kind is CoefficientKind.DYADIC_SPARSE and not x > 0.5:
            raise ValueError("dyadic-sparse coefficients need c > 1/2")
        if self.lag is None:
            object.__setattr__(self, "lag", default_lag(self))
        elif int(self.lag) < 1:
            raise ValueError("truncation lag must be a positive integer")
        object.__setattr__(self, "lag", int(self.lag))
        object.__setattr__(self, "values", tuple(self.coefficient(np.arange(self.lag + 1))))

    # constructors
    @classmethod
    def explicit(cls, values):
        return cls(CoefficientKind.EXPLICIT, values=tuple(values))

    @classmethod
    def geometric(cls, rho, lag=None):
        return cls(CoefficientKind.GEOMETRIC, (rho,), lag)

    @classmethod
    def polynomial(cls, beta, lag=None):
        return cls(CoefficientKind.POLYNOMIAL, (beta,), lag)

    @classmethod
    def log_damped(cls, alpha, lag=None):
        return cls(CoefficientKind.LOG_DAMPED, (alpha,), lag)

    @classmethod
    def dyadic_sparse(cls, c, lag=None):
        return cls(CoefficientKind.DYADIC_SPARSE, (c,), lag)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.values)

    @property
    def param(self) -> float:
        return self.params[0] if self.params else math.nan

    def coefficient(self, i):
        """Untruncated ``a_i`` (vectorized); explicit lists are zero past their end."""
        i = np.asarray(i)
        k, x = self.kind, self.param
        if k is CoefficientKind.EXPLICIT:
            vals = np.array(self.values)
            out = np.zeros(i.shape)
            m = (i >= 0) & (i < len(vals))
            out[m] = vals[i[m]]
            return out
        if k is CoefficientKind.GEOMETRIC:
            return np.where(i >= 0, x ** np.maximum(i, 0).astype(float), 0.0)
        if k is CoefficientKind.POLYNOMIAL:
            return np.where(i >= 0, (1.0 + np.maximum(i, 0)) ** -x, 0.0)
        if k is CoefficientKind.LOG_DAMPED:
            return _log_damped(i, x)
        return _dyadic(i, x)

    @property
    def summable(self) -> bool:
        """Whether ``sum |a_i|`` converges for the untruncated sequence."""
        k, x = self.kind, self.param
        if k in (CoefficientKind.EXPLICIT, CoefficientKind.GEOMETRIC):
            return True
        return x > 1

    def _power_tail(self, m: int, power: float) -> float:
        """``sum_{i >= m} |a_i|**power`` for the untruncated sequence."""
        m = max(int(m), 0)
        k, x = self.kind, self.param
        if k is CoefficientKind.EXPLICIT:
            return float(np.sum(np.abs(self.values[m:]) ** power)) if m < len(self.values) else 0.0
        if k is CoefficientKind.GEOMETRIC:
            r = abs(x) ** power
            return r**m / (1.0 - r)
        if k is CoefficientKind.POLYNOMIAL:
            e = x * power
            return float(special.zeta(e, m + 1)) if e > 1 else math.inf
        if k is CoefficientKind.DYADIC_SPARSE:
            e = x * power
            if e <= 1:
                return math.inf
            k0 = 1 if m <= 2 else int(math.ceil(math.log2(m)))
            return float(special.zeta(e, k0))
        # log-damped: explicit sum to the cutoff plus an integral remainder
        e = x * power
        if power < 2 and e <= 1:
            return math.inf
        top = max(_LOG_SUM_CUTOFF, m + 1)
        head = float(np.sum(_log_damped(np.arange(m, top), x) ** power))
        z = math.log(top - 0.5)
        if power == 1:
            rem = z ** (1 - x) / (x - 1)
        else:
            # integral of x^-p (log x)^-e over [top - 1/2, inf) is below this bound
            rem = (top - 0.5) ** (1 - power) * z ** (-e) / (power - 1)
        return head + rem

    def tail_sum(self, j: int) -> float:
        """``A_j = sum_{i >= j} a_i`` of the untruncated sequence."""
        if not self.summable:
            raise ValueError(f"{self.kind.value} coefficients with parameter {self.param} are not summable")
        if self.kind is CoefficientKind.GEOMETRIC:
            return self.param ** max(j, 0) / (1.0 - self.param) if j >= 0 else self.tail_sum(0)
        # remaining kinds are nonnegative
        return self._power_tail(j, 1.0)

    def abs_tail_sum(self, m: int) -> float:
        return self._power_tail(m, 1.0)

    def sq_tail_sum(self, m: int) -> float:
        """``sum_{i >= m} a_i**2``; past the lag this is the truncation tail bound."""
        return self._power_tail(m, 2.0)

    def truncated_tail_sums(self) -> np.ndarray:
        """``A_j`` of the truncated filter for ``j = 0..lag+1`` (last entry 0)."""
        a = self.array
        return np.concatenate([np.cumsum(a[::-1])[::-1], [0.0]])

    def truncation_tail(self) -> float:
        """l2 norm of the coefficients dropped by truncation."""
        return math.sqrt(self.sq_tail_sum(self.lag + 1))

    def label(self) -> str:
        if self.kind is CoefficientKind.EXPLICIT:
            return "explicit(" + ";".join(f"{v:g}" for v in self.values) + ")"
        return f"{self.kind.value}({self.param:g},L={self.lag})"


def default_lag(seq: CoefficientSequence, tol: float = 1e-3) -> int:
    """Smallest truncation lag meeting the relative tail tolerance."""
    total = seq.sq_tail_sum(0)
    a0 = seq.tail_sum(0) if seq.summable else None
    lo = 1
    while lo < _MAX_LAG:
        ok = seq.sq_tail_sum(lo + 1) <= (tol**2) * total
        if ok and a0 is not None:
            ok = abs(seq.tail_sum(lo + 1)) <= tol * abs(a0)
        if ok:
            break
        lo *= 2
    if lo >= _MAX_LAG:
        return _MAX_LAG
    # bisect inside (lo/2, lo]
    a, b = max(lo // 2, 1), lo
    while a < b:
        mid = (a + b) // 2
        ok = seq.sq_tail_sum(mid + 1) <= (tol**2) * total
        if ok and a0 is not None:
            ok = abs(seq.tail_sum(mid + 1)) <= tol * abs(a0)
        if ok:
            b = mid
        else:
            a = mid + 1
    return a
