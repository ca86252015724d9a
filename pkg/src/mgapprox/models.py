"""Stationary causal process models ``X_n = g(..., eps_{n-1}, eps_n)``.

Every model maps a window of innovations to mean-zero outputs through
``transform`` (valid mode: the first ``memory`` columns only feed the
filter or the burn-in) and evaluates future trajectories for conditional
means through ``trajectory``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np
from scipy import signal

from .coefficients import CoefficientSequence
from .innovations import (
    IndexedInnovationStream,
    InnovationSpec,
    analytic_lq_norm,
    difference_lq_norm,
)

__all__ = [
    "ProcessModel",
    "LinearIID",
    "LipschitzTransform",
    "IteratedRandomFunction",
    "LinearDependentInnovations",
    "Transform",
    "Kernel",
    "ThetaValue",
    "generate_path",
    "generate_paths",
    "iter_path_chunks",
    "analytic_theta",
]

CENTERING_SAMPLES = 10**6
CENTERING_SEED = 0x5EED_CE17
# element budget per chunk of generated paths
_PATH_CHUNK_ELEMENTS = 1 << 22
_SPARSE_TAPS = 64


# -- linear filtering helpers -------------------------------------------------

def _filter_valid(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``y_t = sum_j a_j x_{t-j}`` along the last axis, valid part only."""
    L = len(a) - 1
    T = x.shape[-1]
    if T <= L:
        return np.zeros(x.shape[:-1] + (0,))
    nz = np.flatnonzero(a)
    if len(nz) <= _SPARSE_TAPS:
        out = np.zeros(x.shape[:-1] + (T - L,))
        for j in nz:
            out += a[j] * x[..., L - j:T - j]
        return out
    return signal.fftconvolve(x, a.reshape((1,) * (x.ndim - 1) + (-1,)), mode="valid", axes=-1)


def _linear_trajectory(a: np.ndarray, past: np.ndarray, future: np.ndarray) -> np.ndarray:
    """Outputs at the last past index and the ``m`` future indices.

    ``past`` has shape ``(R, P)`` with ``P >= len(a)``; ``future`` has shape
    ``(R, inner, m)``. Returns ``(R, inner, m + 1)``.
    """
    L = len(a) - 1
    m = future.shape[-1]
    window = past[:, ::-1][:, :L + 1]  # window[:, l] = eps_{k-l}
    idx = np.arange(m + 1)[:, None] + np.arange(L + 1)[None, :]
    hank = np.where(idx <= L, a[np.minimum(idx, L)], 0.0)  # hank[s, l] = a_{l+s}
    past_part = window @ hank.T  # (R, m+1)
    s = np.arange(m + 1)[:, None]
    t = np.arange(1, m + 1)[None, :]
    lag = s - t
    toep = np.where((lag >= 0) & (lag <= L), a[np.clip(lag, 0, L)], 0.0)  # (m+1, m)
    fut_part = future @ toep.T  # (R, inner, m+1)
    return past_part[:, None, :] + fut_part


# -- models -------------------------------------------------------------------

class ThetaValue(NamedTuple):
    """Closed-form projection norm ``||P_0 g(xi_n)||_q`` or an upper bound on it."""

    value: float
    exact: bool


class ProcessModel:
    """Common interface; concrete models are frozen dataclasses."""

    innovations: InnovationSpec
    memory: int

    def transform(self, eps: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def trajectory(self, past: np.ndarray, future: np.ndarray) -> np.ndarray:
        """``g`` at the last past index and along each inner future path.

        ``past``: ``(R, P)`` innovations ending at index ``k`` with ``P >= memory + 1``.
        ``future``: ``(R, inner, m)`` innovations at ``k+1..k+m``.
        Returns ``(R, inner, m + 1)``.
        """
        R, P = past.shape
        inner, m = future.shape[1:]
        full = np.concatenate([np.broadcast_to(past[:, None, :], (R, inner, P)), future], axis=-1)
        out = self.transform(full)
        return out[..., P - 1 - self.memory:]

    @property
    def lipschitz(self) -> float | None:
        return None

    @property
    def label(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class LinearIID(ProcessModel):
    """``X_n = sum_{i<=L} a_i eps_{n-i}``."""

    coefficients: CoefficientSequence
    innovations: InnovationSpec = InnovationSpec()

    @property
    def memory(self) -> int:
        return self.coefficients.lag

    @property
    def a(self) -> np.ndarray:
        return self.coefficients.array

    def transform(self, eps):
        return _filter_valid(self.a, eps)

    def trajectory(self, past, future):
        return _linear_trajectory(self.a, past, future)

    @property
    def label(self) -> str:
        return f"linear[{self.coefficients.label()};{self.innovations.label()}]"


class Transform(str, enum.Enum):
    ABS = "absolute-value"
    TANH = "tanh"
    SOFT = "soft-threshold"


def _apply_transform(kind: Transform, x, threshold: float):
    if kind is Transform.ABS:
        return np.abs(x)
    if kind is Transform.TANH:
        return np.tanh(x)
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


@dataclass(frozen=True)
class LipschitzTransform(ProcessModel):
    """``g = K(X_n) - E K(X_n)`` for a linear base process and 1-Lipschitz ``K``.

    ``center=None`` computes the centring constant once: exactly zero when
    ``K`` is odd and the innovations are symmetric, otherwise a Monte Carlo
    mean over ``CENTERING_SAMPLES`` stationary draws, frozen into the model.
    """

    base: LinearIID
    kind: Transform = Transform.TANH
    threshold: float = 0.5
    center: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Transform(self.kind))
        if self.center is None:
            object.__setattr__(self, "center", self._estimate_center())

    def _estimate_center(self) -> float:
        if self.kind is not Transform.ABS and self.base.innovations.symmetric:
            return 0.0
        stream = IndexedInnovationStream(CENTERING_SEED, self.base.innovations)
        L = self.base.memory
        eps = stream.take(np.arange(1 - L, CENTERING_SAMPLES + 1))
        x = self.base.transform(eps)
        return float(np.mean(_apply_transform(self.kind, x, self.threshold)))

    @property
    def innovations(self):
        return self.base.innovations

    @property
    def memory(self) -> int:
        return self.base.memory

    @property
    def lipschitz(self) -> float:
        return 1.0

    def transform(self, eps):
        return _apply_transform(self.kind, self.base.transform(eps), self.threshold) - self.center

    def trajectory(self, past, future):
        raw = self.base.trajectory(past, future)
        return _apply_transform(self.kind, raw, self.threshold) - self.center

    @property
    def label(self) -> str:
        return f"transform[{self.kind.value};{self.base.label}]"


class Kernel(str, enum.Enum):
    AR1 = "ar1"
    SINE = "contracting-sine"


@dataclass(frozen=True)
class IteratedRandomFunction(ProcessModel):
    """``eta_n = R(eta_{n-1}, eps_n)`` started at ``x0`` a burn-in before the window.

    ``ar1``: ``R(x, e) = rho x + e``; ``contracting-sine``: ``R(x, e) = rho sin(x) + e``.
    Both have Lipschitz coefficient ``|rho|``. ``burn_in=None`` uses the
    smallest ``B`` with ``|rho|**B <= 1e-6``.
    """

    kernel: Kernel = Kernel.AR1
    rho: float = 0.5
    burn_in: int | None = None
    innovations: InnovationSpec = InnovationSpec()
    x0: float = 0.0
    mean: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kernel", Kernel(self.kernel))
        if not abs(self.rho) < 1:
            raise ValueError("iterated random functions need |rho| < 1 for contraction")
        if self.burn_in is None:
            b = 1 if self.rho == 0 else math.ceil(math.log(1e-6) / math.log(abs(self.rho)))
            object.__setattr__(self, "burn_in", max(int(b), 1))
        elif int(self.burn_in) < 0:
            raise ValueError("burn-in must be nonnegative")
        object.__setattr__(self, "burn_in", int(self.burn_in))
        if self.mean is None:
            object.__setattr__(self, "mean", self._stationary_mean())

    def _stationary_mean(self) -> float:
        if self.kernel is Kernel.AR1 or self.innovations.symmetric:
            # AR(1) mean is E eps / (1 - rho) = 0; the sine chain is odd-symmetric
            return 0.0
        stream = IndexedInnovationStream(CENTERING_SEED, self.innovations)
        chains, steps = 1000, CENTERING_SAMPLES // 1000
        eps = stream.block(np.arange(chains), np.arange(-self.burn_in, steps))
        eta = self.chain(eps)[:, self.burn_in:]
        return float(np.mean(eta))

    @property
    def memory(self) -> int:
        return self.burn_in

    @property
    def lipschitz(self) -> float:
        return abs(self.rho)

    def step(self, x, e):
        if self.kernel is Kernel.AR1:
            return self.rho * x + e
        return self.rho * np.sin(x) + e

    def chain(self, eps: np.ndarray, x0=None) -> np.ndarray:
        """Raw (uncentred) states for every column of ``eps``."""
        x0 = self.x0 if x0 is None else x0
        if self.kernel is Kernel.AR1:
            zi = np.broadcast_to(np.asarray(self.rho * x0, dtype=float), eps.shape[:-1] + (1,))
            out, _ = signal.lfilter([1.0], [1.0, -self.rho], eps, axis=-1, zi=zi)
            return out
        out = np.empty_like(eps, dtype=float)
        x = np.broadcast_to(np.asarray(x0, dtype=float), eps.shape[:-1])
        for c in range(eps.shape[-1]):
            x = self.rho * np.sin(x) + eps[..., c]
            out[..., c] = x
        return out

    def future_chain(self, past, future) -> np.ndarray:
        """Raw states at the last past index and along each future path, ``(R, inner, m+1)``."""
        start = self.chain(past)[:, -1]
        R, inner, m = future.shape
        out = np.empty((R, inner, m + 1))
        x = np.broadcast_to(start[:, None], (R, inner))
        out[..., 0] = x
        for t in range(m):
            x = self.step(x, future[..., t])
            out[..., t + 1] = x
        return out

    def transform(self, eps):
        return self.chain(eps)[..., self.burn_in:] - self.mean

    def trajectory(self, past, future):
        return self.future_chain(past, future) - self.mean

    @property
    def label(self) -> str:
        return f"irf[{self.kernel.value}({self.rho:g});B={self.burn_in};{self.innovations.label()}]"


@dataclass(frozen=True)
class LinearDependentInnovations(ProcessModel):
    """``X_n = sum_i a_i eta_{n-i}`` with ``eta`` an iterated random function."""

    coefficients: CoefficientSequence
    inner: IteratedRandomFunction = field(default_factory=IteratedRandomFunction)

    @property
    def innovations(self):
        return self.inner.innovations

    @property
    def memory(self) -> int:
        return self.inner.memory + self.coefficients.lag

    @property
    def a(self) -> np.ndarray:
        return self.coefficients.array

    def transform(self, eps):
        return _filter_valid(self.a, self.inner.transform(eps))

    def trajectory(self, past, future):
        eta_past = self.inner.chain(past) - self.inner.mean
        eta_fut = self.inner.future_chain(past, future)[..., 1:] - self.inner.mean
        return _linear_trajectory(self.a, eta_past, eta_fut)

    @property
    def label(self) -> str:
        return f"ldi[{self.coefficients.label()};{self.inner.label}]"


# -- paths --------------------------------------------------------------------

def _path_chunk(model: ProcessModel, n: int) -> int:
    width = n + model.memory
    return max(1, _PATH_CHUNK_ELEMENTS // max(width, 1))


def iter_path_chunks(model: ProcessModel, n: int, stream, paths: int,
                     first: int = 0, chunk: int | None = None) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(rows, X)`` blocks of ``X_1..X_n`` for replicates ``first..first+paths-1``.

    The chunk size depends only on the model and ``n`` so that blocks, and
    anything reduced from them in row order, do not depend on the caller.
    """
    chunk = chunk or _path_chunk(model, n)
    idx = np.arange(1 - model.memory, n + 1)
    for lo in range(first, first + paths, chunk):
        rows = np.arange(lo, min(lo + chunk, first + paths))
        yield rows, model.transform(stream.block(rows, idx))


def _partial_sums(x: np.ndarray) -> np.ndarray:
    s = np.zeros(x.shape[:-1] + (x.shape[-1] + 1,))
    np.cumsum(x, axis=-1, out=s[..., 1:])
    return s


def generate_paths(model: ProcessModel, n: int, stream, paths: int, first: int = 0):
    """``(X, S)`` with shapes ``(paths, n)`` and ``(paths, n + 1)``; ``S[:, 0] = 0``."""
    xs = [x for _, x in iter_path_chunks(model, n, stream, paths, first)]
    x = np.concatenate(xs, axis=0)
    return x, _partial_sums(x)


def generate_path(model: ProcessModel, n: int, stream):
    """Single path ``(X_1..X_n, S_0..S_n)`` from the stream's own replicate."""
    if n < 1:
        raise ValueError("n must be positive")
    idx = np.arange(1 - model.memory, n + 1)
    x = model.transform(stream.take(idx))
    return x, _partial_sums(x)


# -- closed-form projections ---------------------------------------------------

def analytic_theta(model: ProcessModel, n: int, q: float) -> ThetaValue | None:
    """``theta_{n,q}`` when it has a closed form, else a Lipschitz-type upper bound.

    ``None`` for linear processes with dependent innovations.
    """
    if n < 0:
        raise ValueError("lag must be nonnegative")
    spec = model.innovations
    spec.check_moment(q)
    if isinstance(model, LinearIID):
        # the simulated process stops at the truncation lag
        vals = model.coefficients.values
        a_n = vals[n] if n < len(vals) else 0.0
        return ThetaValue(abs(a_n) * analytic_lq_norm(spec, q), True)
    if isinstance(model, LipschitzTransform):
        a_n = float(model.base.coefficients.coefficient(np.array([n]))[0])
        return ThetaValue(model.lipschitz * abs(a_n) * difference_lq_norm(spec, q), False)
    if isinstance(model, IteratedRandomFunction):
        r = abs(model.rho) ** n
        if model.kernel is Kernel.AR1:
            # P_0 eta_n = rho^n eps_0, and the chain forgets eps_0 past the burn-in
            return ThetaValue((r if n <= model.burn_in else 0.0) * analytic_lq_norm(spec, q), True)
        return ThetaValue(r * difference_lq_norm(spec, q), False)
    return None
