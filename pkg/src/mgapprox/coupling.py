"""Coupled trajectories and shared-future conditional means.

A couple evaluates the model on the original innovations and on a copy in
which index 0 (``tilde``) or every index ``<= 0`` (``star``) is taken from
the independent prime stream. Conditional means average ``g`` over inner
draws of the future innovations, and both members of a couple see the same
draws.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .innovations import CopyTag
from .models import LinearIID, LipschitzTransform, ProcessModel

__all__ = [
    "CouplingKind",
    "CoupledWindow",
    "ConditionalMeanEstimate",
    "DoublingDiagnostic",
    "coupled_g_values",
    "coupled_h_values",
    "coupled_h_difference",
    "doubling_diagnostic",
    "past_start",
    "map_chunks",
]

# element budget per worker chunk
CHUNK_ELEMENTS = 1 << 22


class CouplingKind(str, enum.Enum):
    TILDE = "tilde"
    STAR = "star"


@dataclass(frozen=True)
class CoupledWindow:
    """A model together with the base, prime and inner-future streams of a couple.

    ``prime`` defaults to ``stream.prime()`` and ``future`` to the stream's
    future tag; either can be overridden, e.g. by deterministic test doubles.
    """

    model: ProcessModel
    stream: object
    kind: CouplingKind = CouplingKind.TILDE
    prime: object = None
    future: object = None

    def __post_init__(self):
        object.__setattr__(self, "kind", CouplingKind(self.kind))
        if self.prime is None:
            object.__setattr__(self, "prime", self.stream.prime())
        if self.future is None:
            object.__setattr__(self, "future", self.stream.with_tag(CopyTag.FUTURE))

    def with_kind(self, kind) -> "CoupledWindow":
        return CoupledWindow(self.model, self.stream, kind, self.prime, self.future)

    def innovations(self, rows, indices):
        """Original and coupled innovation blocks for replicate ``rows``."""
        indices = np.asarray(indices, dtype=np.int64)
        eps = self.stream.block(rows, indices)
        mask = indices == 0 if self.kind is CouplingKind.TILDE else indices <= 0
        coupled = eps.copy()
        if mask.any():
            coupled[..., mask] = self.prime.block(rows, indices[mask])
        return eps, coupled


class ConditionalMeanEstimate(NamedTuple):
    """Inner-sample average with its standard error (arrays over replicates)."""

    value: np.ndarray
    inner: int
    inner_se: np.ndarray


def past_start(model: ProcessModel, k: int) -> int:
    """First innovation index a coupled evaluation at lag ``k`` needs.

    Filters only look back ``memory`` steps. Chains are always started a full
    burn-in before index 0, so the coupled index sees a stationary state.
    """
    if isinstance(model, (LinearIID, LipschitzTransform)):
        return k - model.memory
    return min(k, 0) - model.memory


def map_chunks(fn: Callable[[np.ndarray], tuple], rows: np.ndarray, chunk: int,
               jobs: int = 1) -> tuple:
    """Apply ``fn`` to fixed-size row chunks and concatenate results in row order."""
    rows = np.asarray(rows)
    parts = [rows[i:i + chunk] for i in range(0, len(rows), max(chunk, 1))]
    if jobs > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            outs = list(ex.map(fn, parts))
    else:
        outs = [fn(p) for p in parts]
    return tuple(np.concatenate(cols, axis=0) for cols in zip(*outs))


def _rows(window: CoupledWindow, rows):
    if rows is None:
        return np.array([getattr(window.stream, "replicate", 0)])
    return np.asarray(rows)


def coupled_g_values(window: CoupledWindow, k: int, rows=None, jobs: int = 1):
    """``(g(xi_k), g(coupled xi_k))`` for each replicate row.

    ``rows`` are replicate keys (default: the stream's own replicate).
    """
    if k < 0:
        raise ValueError("lag k must be nonnegative")
    model = window.model
    idx = np.arange(past_start(model, k), k + 1)
    chunk = max(1, CHUNK_ELEMENTS // (2 * len(idx)))

    def run(r):
        eps, cpl = window.innovations(r, idx)
        return model.transform(eps)[:, -1], model.transform(cpl)[:, -1]

    return map_chunks(run, _rows(window, rows), chunk, jobs)


def _inner_futures(window: CoupledWindow, rows, k: int, m: int, inner: int):
    j = np.arange(inner)
    return window.future.block(np.asarray(rows)[:, None], np.arange(k + 1, k + m + 1), j)


def _h_chunk(window: CoupledWindow, k: int, m: int, inner: int) -> int:
    width = inner * (m + 1) * 3 + (k - past_start(window.model, k) + 1)
    return max(1, CHUNK_ELEMENTS // width)


def _h_pair(window: CoupledWindow, r, k: int, m: int, inner: int):
    model = window.model
    idx = np.arange(past_start(model, k), k + 1)
    eps, cpl = window.innovations(r, idx)
    fut = _inner_futures(window, r, k, m, inner)
    g0 = model.trajectory(eps, fut)[..., m]
    g1 = model.trajectory(cpl, fut)[..., m]
    return g0, g1


def coupled_h_values(window: CoupledWindow, k: int, m: int, inner: int, rows=None,
                     jobs: int = 1):
    """Estimates of ``h_m(xi_k)`` and ``h_m(coupled xi_k)`` with common inner futures."""
    if m < 1:
        raise ValueError("horizon m must be >= 1")
    if inner < 2:
        raise ValueError("inner sample size must be >= 2")

    def run(r):
        g0, g1 = _h_pair(window, r, k, m, inner)
        s = np.sqrt(inner)
        return (g0.mean(axis=1), g0.std(axis=1, ddof=1) / s,
                g1.mean(axis=1), g1.std(axis=1, ddof=1) / s)

    v0, s0, v1, s1 = map_chunks(run, _rows(window, rows), _h_chunk(window, k, m, inner), jobs)
    return ConditionalMeanEstimate(v0, inner, s0), ConditionalMeanEstimate(v1, inner, s1)


def coupled_h_difference(window: CoupledWindow, k: int, m: int, inner: int, rows=None,
                         jobs: int = 1):
    """``h_m(xi_k) - h_m(coupled xi_k)`` per row and the inner SE of the paired difference."""
    if m < 1:
        raise ValueError("horizon m must be >= 1")
    if inner < 2:
        raise ValueError("inner sample size must be >= 2")

    def run(r):
        g0, g1 = _h_pair(window, r, k, m, inner)
        d = g0 - g1
        return d.mean(axis=1), d.std(axis=1, ddof=1) / np.sqrt(inner)

    return map_chunks(run, _rows(window, rows), _h_chunk(window, k, m, inner), jobs)


class DoublingDiagnostic(NamedTuple):
    estimate: float
    estimate_doubled: float
    relative_change: float
    accepted: bool


def doubling_diagnostic(window: CoupledWindow, k: int, m: int, inner: int, q: float,
                        rows, tolerance: float = 0.10, jobs: int = 1) -> DoublingDiagnostic:
    """Compare the ``L^q`` norm of the coupled difference at ``inner`` and ``2 * inner``.

    A run is accepted when the two estimates differ by less than ``tolerance``
    (relative to the larger one; two zeros count as agreement).
    """
    d1, _ = coupled_h_difference(window, k, m, inner, rows, jobs)
    d2, _ = coupled_h_difference(window, k, m, 2 * inner, rows, jobs)
    e1 = float(np.mean(np.abs(d1) ** q) ** (1 / q))
    e2 = float(np.mean(np.abs(d2) ** q) ** (1 / q))
    top = max(e1, e2)
    rel = 0.0 if top == 0 else abs(e1 - e2) / top
    return DoublingDiagnostic(e1, e2, rel, rel < tolerance)
