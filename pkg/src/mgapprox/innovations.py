"""Counter-addressed i.i.d. innovation streams.

Every value is a pure function of ``(seed, copy tag, replicate key, index)``.
Indices range over all of Z, so the infinite past and single-index
replacement need no state replay. The mixing function is the SplitMix64
finalizer applied twice to a Weyl-sequence counter.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import integrate, special, stats

from .errors import UnsupportedMomentError

__all__ = [
    "Family",
    "CopyTag",
    "InnovationSpec",
    "IndexedInnovationStream",
    "analytic_lq_norm",
    "difference_lq_norm",
    "innovation_at",
    "derive_key",
]

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_key(*parts):
    """Hash a sequence of integers (scalars or broadcastable arrays) to uint64 keys."""
    key = np.uint64(0x6A09E667F3BCC909)
    with np.errstate(over="ignore"):
        for p in parts:
            p = np.asarray(p)
            if p.dtype.kind == "i":
                p = p.astype(np.int64).view(np.uint64)
            else:
                p = p.astype(np.uint64)
            key = _mix(key + _mix(p * _GAMMA + _GAMMA))
    return key


class Family(str, enum.Enum):
    NORMAL = "standard-normal"
    UNIFORM = "centered-uniform"
    STUDENT_T = "student-t"
    EXPONENTIAL = "centered-exponential"


class CopyTag(enum.IntEnum):
    ORIGINAL = 0
    PRIME = 1
    # inner draws used for conditional means; never part of a couple
    FUTURE = 2


@dataclass(frozen=True)
class InnovationSpec:
    """Mean-zero, unit-variance innovation family.

    Student-t draws are divided by sqrt(df / (df - 2)); the exponential family
    is centred by subtracting its unit mean.
    """

    family: Family = Family.NORMAL
    df: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.family is Family.STUDENT_T:
            if self.df is None or not self.df > 4:
                raise ValueError("student-t innovations need df > 4")
        elif self.df is not None:
            raise ValueError("df is only meaningful for student-t innovations")

    @property
    def q_max(self) -> float:
        """Supremum of finite moment orders (exclusive for student-t)."""
        return float(self.df) if self.family is Family.STUDENT_T else math.inf

    @property
    def symmetric(self) -> bool:
        return self.family is not Family.EXPONENTIAL

    def supports(self, q: float) -> bool:
        if self.family is Family.STUDENT_T:
            return q < self.df
        return True

    def check_moment(self, q: float) -> None:
        if not self.supports(q):
            raise UnsupportedMomentError(
                f"moment order q={q} is not finite for {self.family.value} (df={self.df})")

    def quantile(self, u):
        """Map uniforms on (0, 1) to innovations."""
        u = np.asarray(u, dtype=np.float64)
        if self.family is Family.NORMAL:
            return special.ndtri(u)
        if self.family is Family.UNIFORM:
            return math.sqrt(3.0) * (2.0 * u - 1.0)
        if self.family is Family.STUDENT_T:
            return special.stdtrit(self.df, u) * math.sqrt((self.df - 2.0) / self.df)
        return -np.log1p(-u) - 1.0

    def label(self) -> str:
        if self.family is Family.STUDENT_T:
            return f"{self.family.value}({self.df:g})"
        return self.family.value


@dataclass(frozen=True)
class IndexedInnovationStream:
    """Deterministic integer-indexed innovation source.

    ``replicate`` selects an independent substream, used for outer Monte Carlo
    replicates; streams that differ only in ``copy_tag`` are independent copies.
    """

    seed: int
    spec: InnovationSpec = InnovationSpec()
    copy_tag: CopyTag = CopyTag.ORIGINAL
    replicate: int = 0

    def prime(self) -> "IndexedInnovationStream":
        return replace(self, copy_tag=CopyTag.PRIME)

    def with_replicate(self, r: int) -> "IndexedInnovationStream":
        return replace(self, replicate=int(r))

    def with_tag(self, tag: CopyTag) -> "IndexedInnovationStream":
        return replace(self, copy_tag=CopyTag(tag))

    def _keys(self, rows, *extra):
        return derive_key(int(self.seed) & _MASK, int(self.copy_tag), np.asarray(rows), *extra)

    def block(self, rows, indices, *extra):
        """Values for replicate keys ``rows`` (shape ``s``) at ``indices`` (1-D).

        Returns an array of shape ``s + (len(indices),)``. ``extra`` key parts
        broadcast against ``rows`` and address further substreams.
        """
        idx = np.asarray(indices, dtype=np.int64).view(np.uint64)
        keys = np.asarray(self._keys(rows, *extra))[..., None]
        with np.errstate(over="ignore"):
            h = _mix(_mix(idx * _GAMMA + keys) ^ keys)
        u = ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
        return self.spec.quantile(u)

    def take(self, indices):
        return self.block(np.asarray(self.replicate), indices)

    def at(self, i: int) -> float:
        return float(self.take([i])[0])


def innovation_at(stream: IndexedInnovationStream, i: int) -> float:
    return stream.at(i)


def _abs_moment(spec: InnovationSpec, q: float) -> float:
    fam = spec.family
    if fam is Family.NORMAL:
        return 2.0 ** (q / 2) * math.gamma((q + 1) / 2) / math.sqrt(math.pi)
    if fam is Family.UNIFORM:
        return 3.0 ** (q / 2) / (q + 1)
    if fam is Family.STUDENT_T:
        nu = spec.df
        raw = nu ** (q / 2) * math.exp(
            math.lgamma((q + 1) / 2) + math.lgamma((nu - q) / 2)
            - math.lgamma(nu / 2)) / math.sqrt(math.pi)
        return raw * ((nu - 2.0) / nu) ** (q / 2)
    # E|E - 1|^q = e^{-1} [Gamma(q + 1) + sum_k 1 / (k! (q + k + 1))]
    series = sum(1.0 / (math.factorial(k) * (q + k + 1)) for k in range(40))
    return math.exp(-1.0) * (math.gamma(q + 1) + series)


@lru_cache(maxsize=256)
def analytic_lq_norm(spec: InnovationSpec, q: float) -> float:
    """Exact ``||eps_0||_q`` from closed-form absolute moments."""
    if q < 1:
        raise ValueError("q must be >= 1")
    spec.check_moment(q)
    return _abs_moment(spec, q) ** (1.0 / q)


@lru_cache(maxsize=256)
def difference_lq_norm(spec: InnovationSpec, q: float) -> float:
    """``||eps_0 - eps'_0||_q`` for two independent innovations."""
    spec.check_moment(q)
    fam = spec.family
    if fam is Family.NORMAL:
        return math.sqrt(2.0) * analytic_lq_norm(spec, q)
    if fam is Family.UNIFORM:
        w = 2.0 * math.sqrt(3.0)
        m = w ** (q + 2) / (6.0 * (q + 1) * (q + 2))
        return m ** (1.0 / q)
    if fam is Family.EXPONENTIAL:
        # difference of two unit exponentials is standard Laplace
        return math.gamma(q + 1) ** (1.0 / q)
    s = math.sqrt((spec.df - 2.0) / spec.df)

    dens = stats.t(spec.df, scale=s).pdf

    def inner(x):
        return integrate.quad(lambda y: abs(x - y) ** q * dens(y), -np.inf, np.inf,
                              limit=200)[0]

    m = integrate.quad(lambda x: dens(x) * inner(x), -np.inf, np.inf, limit=200)[0]
    return m ** (1.0 / q)
