"""Empirical checks of maximal inequalities, a.s. rates, the LIL and the CLT."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy import stats

from .coupling import map_chunks
from .dependence import lq_norm_from_samples
from .innovations import IndexedInnovationStream
from .martingale import _condition_two, closed_form_sigma, nested_decomposition, theta_tail_bound
from .models import ProcessModel, _partial_sums, iter_path_chunks

__all__ = [
    "RateFunction",
    "RateFitResult",
    "MaximalResult",
    "BorelCantelliResult",
    "LILResult",
    "CLTResult",
    "LIL_INTERVAL",
    "verify_maximal_dyadic",
    "dyadic_block_norms",
    "verify_borel_cantelli_sum",
    "lil_statistic",
    "lil_experiment",
    "calibrate_lil_interval",
    "running_max_ensemble",
    "rate_fit",
    "clt_check",
    "estimate_sigma",
]

# nominal interval for the median LIL statistic at N = 2**20 with 100 paths;
# the statistic's i.i.d. median there is about 1.20, see calibrate_lil_interval
LIL_INTERVAL = (0.65, 1.15)
_DIVERGENT_RATIO = 0.95


# -- rate functions --------------------------------------------------------------

@dataclass(frozen=True)
class RateFunction:
    """Normalising sequences for a.s. rate statements.

    ``id`` is one of ``marcinkiewicz`` (``n^{1/q}``), ``lil``
    (``sqrt(2 n log log n)``), ``chi_q``, ``nu_q``, ``corollary3``
    (``n^gamma log n``) or ``bounded`` (constant). ``exponent`` is the leading
    power of ``n``.
    """

    id: str
    q: float = 2.0
    gamma: float = 0.5

    def __call__(self, n):
        n = np.asarray(n, dtype=float)
        if np.any(n < 16):
            raise ValueError("rate functions are evaluated for n >= 16")
        ln = np.log(n)
        lln = np.log(ln)
        q = self.q
        if self.id == "marcinkiewicz":
            return n ** (1 / q)
        if self.id == "lil":
            return np.sqrt(2 * n * lln)
        if self.id == "chi_q":
            if q >= 4:
                return n**0.25 * ln**0.5 * lln**0.25
            return n ** (1 / q) * ln**0.5
        if self.id == "nu_q":
            return n ** (1 / q) * ln ** (0.5 + 1 / q) * lln ** (2 / q)
        if self.id == "corollary3":
            return n**self.gamma * ln
        if self.id == "bounded":
            return np.ones_like(n)
        raise ValueError(f"unknown rate function {self.id!r}")

    @property
    def exponent(self) -> float:
        q = self.q
        return {
            "marcinkiewicz": 1 / q,
            "lil": 0.5,
            "chi_q": 0.25 if q >= 4 else 1 / q,
            "nu_q": 1 / q,
            "corollary3": self.gamma,
            "bounded": 0.0,
        }[self.id]


# -- maximal inequalities ----------------------------------------------------------

class MaximalResult(NamedTuple):
    rhs: float
    lhs: float
    lhs_se: float
    ratio: float
    passed: bool


def dyadic_block_norms(S: np.ndarray, d: int, q: float):
    """Monte Carlo ``||S_{m 2^r} - S_{(m-1) 2^r}||_q`` for ``r = 0..d``, ``m = 1..2^{d-r}``.

    ``S`` has shape ``(paths, >= 2^d + 1)``. Returns ``{r: (norms, ses)}``.
    """
    out = {}
    for r in range(d + 1):
        step = 2**r
        ends = np.arange(step, 2**d + 1, step)
        blocks = S[:, ends] - S[:, ends - step]
        est = [lq_norm_from_samples(blocks[:, i], q) for i in range(blocks.shape[1])]
        out[r] = (np.array([e.estimate for e in est]), np.array([e.se for e in est]))
    return out


def verify_maximal_dyadic(block_norms: Mapping[int, Sequence[float]], d: int, q: float,
                          lhs: float | None = None, lhs_se: float = 0.0,
                          k: float = 3.0) -> MaximalResult:
    """Chaining bound ``sum_{r=0}^d (sum_m ||block_{r,m}||_q^q)^{1/q}`` against ``||max_{i<=2^d}|S_i| ||_q``.

    ``block_norms[r]`` lists the ``2^{d-r}`` block norms at level ``r`` (or a
    ``(norms, ses)`` pair). Passes when ``lhs <= rhs + k * lhs_se``.
    """
    rhs = 0.0
    for r in range(d + 1):
        if r not in block_norms:
            raise ValueError(f"missing block norms at level r={r}")
        v = block_norms[r]
        v = np.asarray(v[0] if isinstance(v, tuple) else v, dtype=float)
        if v.size != 2 ** (d - r):
            raise ValueError(f"level r={r} needs {2 ** (d - r)} blocks, got {v.size}")
        rhs += float(np.sum(v**q)) ** (1 / q)
    if lhs is None:
        return MaximalResult(rhs, math.nan, math.nan, math.nan, True)
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    return MaximalResult(rhs, lhs, lhs_se, ratio, lhs <= rhs + k * lhs_se)


class BorelCantelliResult(NamedTuple):
    delta_q: float
    divergent: bool
    bound: float
    exceedance_rate: float  # mean number of exceeded scales per path
    exceedance_count: int
    paths: int
    passed: bool | None


def verify_borel_cantelli_sum(norms: Sequence[float], q: float, delta: float,
                              running_max: np.ndarray | None = None) -> BorelCantelliResult:
    """Compare exceedances of ``max_{k<=2^j}|S_k| >= 2^{j/q} delta`` with ``2 delta^{-q} Delta_q^{q+1}``.

    ``norms[j] = ||S_{2^j}||_q`` (or residual norms) for ``j = 0..J``;
    ``Delta_q = sum_j (2^{-j} norms_j^q)^{1/(q+1)}`` with a geometric tail fitted
    to the last half of the terms. A fitted term ratio of 0.95 or more flags
    ``Delta_q`` as divergent and skips the comparison.
    ``running_max[p, j] = max_{k<=2^j} |S_k|`` on path ``p``. The bound limits
    the expected number of exceeded scales per path, so the empirical rate
    ``count / paths`` passes when below ``bound + 3 sqrt(count) / paths``.
    """
    norms = np.asarray(norms, dtype=float)
    j = np.arange(len(norms))
    terms = (2.0**-j * norms**q) ** (1 / (q + 1))
    divergent = False
    if np.all(terms == 0):
        delta_q = 0.0
    else:
        half = j >= len(j) // 2
        t = terms[half]
        if np.any(t <= 0):
            delta_q = float(terms.sum())
        else:
            slope = np.polyfit(j[half], np.log(t), 1)[0]
            ratio = math.exp(slope)
            if ratio >= _DIVERGENT_RATIO:
                divergent, delta_q = True, math.inf
            else:
                delta_q = float(terms.sum() + terms[-1] * ratio / (1 - ratio))
    bound = 2 * delta ** -q * delta_q ** (q + 1) if not divergent else math.inf
    if running_max is None:
        return BorelCantelliResult(delta_q, divergent, bound, math.nan, 0, 0, None)
    rm = np.asarray(running_max, dtype=float)
    thr = 2.0 ** (np.arange(rm.shape[1]) / q) * delta
    count = int(np.sum(rm >= thr[None, :]))
    P = rm.shape[0]
    rate = count / P
    passed = None if divergent else rate <= bound + 3 * math.sqrt(count) / P
    return BorelCantelliResult(delta_q, divergent, bound, rate, count, P, passed)


# -- LIL -----------------------------------------------------------------------------

def lil_statistic(S: np.ndarray, n_min: int = 16, sign: int = 0) -> np.ndarray:
    """``max_{n_min <= n <= N} |S_n| / sqrt(2 n log log n)`` per path.

    ``S`` has shape ``(paths, N + 1)`` with ``S[:, 0] = S_0``. ``sign=+1`` or
    ``-1`` gives the one-sided statistic of ``+S`` or ``-S``.
    """
    N = S.shape[1] - 1
    n = np.arange(n_min, N + 1, dtype=float)
    psi = np.sqrt(2 * n * np.log(np.log(n)))
    seg = S[:, n_min:]
    if sign == 0:
        seg = np.abs(seg)
    elif sign < 0:
        seg = -seg
    return np.max(seg / psi, axis=1)


class LILResult(NamedTuple):
    statistic: np.ndarray
    statistic_plus: np.ndarray
    statistic_minus: np.ndarray
    martingale_statistic: np.ndarray | None
    median: float
    iqr: float
    sigma: float
    normalised_median: float
    in_interval: bool


def lil_experiment(model: ProcessModel, N: int, paths: int, n_min: int = 16, *,
                   stream=None, sigma: float | None = None, jobs: int = 1,
                   interval=LIL_INTERVAL) -> LILResult:
    """Per-path LIL statistics of ``S_n`` and, for closed-form models, of ``M_n``.

    ``sigma`` defaults to its closed form. The median statistic divided by
    ``sigma`` is compared with the calibrated ``interval``.
    """
    if N < 2**16:
        raise ValueError("LIL experiments need N >= 2**16")
    if n_min < 16:
        raise ValueError("n_min must be >= 16")
    stream = stream if stream is not None else IndexedInnovationStream(0, model.innovations)
    if sigma is None:
        sigma = closed_form_sigma(model)
        if sigma is None:
            raise ValueError("sigma has no closed form for this model; pass it explicitly")
    # M_n = sigma_0 (eps_1 + ... + eps_n) for linear and AR(1) models
    sigma_0 = closed_form_sigma(model)
    closed = sigma_0 is not None

    def run(rows):
        idx = np.arange(1 - model.memory, N + 1)
        eps = stream.block(rows, idx)
        S = _partial_sums(model.transform(eps))
        out = [lil_statistic(S, n_min), lil_statistic(S, n_min, 1), lil_statistic(S, n_min, -1)]
        if closed:
            M = sigma_0 * _partial_sums(eps[:, model.memory:])
            out.append(lil_statistic(M, n_min))
        else:
            out.append(np.full(len(rows), np.nan))
        return tuple(out)

    chunk = max(1, (1 << 22) // (N + model.memory))
    st, sp, sm, mm = map_chunks(run, np.arange(paths), chunk, jobs)
    med = float(np.median(st))
    q75, q25 = np.percentile(st, [75, 25])
    norm = med / sigma if sigma > 0 else 0.0
    ok = sigma > 0 and interval[0] <= norm <= interval[1]
    return LILResult(st, sp, sm, mm if closed else None, med, float(q75 - q25), float(sigma),
                     norm, bool(ok))


def _median_se(x: np.ndarray, resamples: int = 2000, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(x), size=(resamples, len(x)))
    return float(np.std(np.median(x[idx], axis=1), ddof=1))


def calibrate_lil_interval(N: int, paths: int, n_min: int = 16, *, seed: int = 0,
                           width: float = 3.0, jobs: int = 1):
    """Self-calibrated acceptance interval from the i.i.d. standard normal oracle.

    Runs ``lil_experiment`` on i.i.d. sums at the same ``N`` and ``paths`` and
    returns ``(interval, calibration)``. The interval is the oracle median
    plus or minus ``width`` bootstrap standard errors of a difference of two
    independent medians.
    """
    from .coefficients import CoefficientSequence
    from .models import LinearIID

    iid = LinearIID(CoefficientSequence.explicit([1.0]))
    cal = lil_experiment(iid, N, paths, n_min, stream=IndexedInnovationStream(seed),
                         jobs=jobs, interval=(-math.inf, math.inf))
    half = width * math.sqrt(2.0) * _median_se(cal.statistic)
    return (cal.median - half, cal.median + half), cal


# -- rates -------------------------------------------------------------------------

class RateFitResult(NamedTuple):
    exponent: float
    intercept: float
    quantile: float
    sample_sizes: dict
    residual: float
    theoretical: float
    passed: bool


def running_max_ensemble(paths: np.ndarray, ns: Sequence[int]) -> dict:
    """``{n: max_{k<=n} |target_k|}`` per path from an array ``(paths, N + 1)``."""
    absmax = np.maximum.accumulate(np.abs(paths), axis=1)
    return {int(n): absmax[:, int(n)] for n in ns}


def rate_fit(ensemble: Mapping[int, np.ndarray], rate: RateFunction, quantile: float = 0.99,
             slack: float = 0.15, min_paths: int = 200) -> RateFitResult:
    """Log-log slope of the ``quantile`` of ``max_{k<=n}|target_k|`` over dyadic ``n``.

    Passes when the slope is at most ``rate.exponent + slack``. All-zero
    ensembles have exponent 0.
    """
    ns = np.array(sorted(ensemble))
    if len(ns) < 5:
        raise ValueError("rate fits need at least 5 scales")
    sizes = {int(n): int(np.size(ensemble[n])) for n in ns}
    if min(sizes.values()) < min_paths:
        raise ValueError(f"rate fits need at least {min_paths} paths per scale")
    qs = np.array([np.quantile(np.asarray(ensemble[n]), quantile) for n in ns])
    if np.all(qs == 0):
        return RateFitResult(0.0, -math.inf, quantile, sizes, 0.0, rate.exponent, True)
    if np.any(qs <= 0):
        raise ValueError("quantiles vanish on some but not all scales")
    x, y = np.log(ns), np.log(qs)
    slope, icpt = np.polyfit(x, y, 1)
    res = float(np.sqrt(np.mean((slope * x + icpt - y) ** 2)))
    return RateFitResult(float(slope), float(icpt), quantile, sizes, res, rate.exponent,
                         bool(slope <= rate.exponent + slack))


# -- CLT ----------------------------------------------------------------------------

class CLTResult(NamedTuple):
    ks: float
    pvalue: float
    passed: bool | None
    sigma: float
    skipped: str = ""


def _sigma_horizon(model: ProcessModel, rel: float = 1e-4, cap: int = 256) -> int:
    """Smallest ``H >= 8`` with ``Theta_{H+1} <= rel * Theta_0`` by the closed-form tail bound."""
    total = theta_tail_bound(model, 0, 2.0)
    if total is None:
        # dependent innovations: geometric inner chain filtered by the outer coefficients
        rho = abs(getattr(getattr(model, "inner", None), "rho", 0.5))
        lag = getattr(getattr(model, "coefficients", None), "lag", 0)
        return min(cap, max(8, lag + int(math.ceil(math.log(rel) / math.log(rho)))))
    for H in range(8, cap + 1):
        if theta_tail_bound(model, H + 1, 2.0) <= rel * total:
            return H
    return cap


def estimate_sigma(model: ProcessModel, q: float = 2.0, *, stream=None, samples: int = 2000,
                   horizon: int | None = None, inner: int = 256, jobs: int = 1):
    """``sigma = ||D_k||_2`` from closed form, else from nested ``D^`` on a separate stream.

    Returns ``(sigma, se)``. The nested estimate subtracts the mean squared
    inner standard error, which is the inner-noise bias of ``mean(D^^2)``.
    """
    sig = closed_form_sigma(model)
    if sig is not None:
        return sig, 0.0
    stream = stream if stream is not None else IndexedInnovationStream(0x51_6A, model.innovations)
    if horizon is None:
        horizon = _sigma_horizon(model)
    dec = nested_decomposition(model, stream, 1, 2.0, horizon, inner, paths=samples, jobs=jobs)
    d = dec.D.ravel()
    m2 = float(np.mean(d**2) - np.mean(dec.D_se.ravel() ** 2))
    sd2 = float(np.std(d**2, ddof=1) / math.sqrt(d.size))
    sigma = math.sqrt(max(m2, 0.0))
    return sigma, (sd2 / (2 * sigma) if sigma > 0 else 0.0)


def clt_check(model: ProcessModel, n: int, paths: int, sigma: float | None = None, *,
              stream=None, threshold: float = 0.05, jobs: int = 1) -> CLTResult:
    """Kolmogorov-Smirnov distance of ``S_n / (sigma sqrt(n))`` to the standard normal.

    Skipped (not failed) when condition (2) does not hold for the model.
    """
    if n < 1024:
        raise ValueError("CLT checks need n >= 1024")
    if paths < 1000:
        raise ValueError("CLT checks need at least 1000 paths")
    if not _condition_two(model):
        return CLTResult(math.nan, math.nan, None, math.nan,
                         "condition (2) fails: Theta_0 is infinite")
    if sigma is None:
        sigma, _ = estimate_sigma(model, jobs=jobs)
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    stream = stream if stream is not None else IndexedInnovationStream(0, model.innovations)
    ends = [x.sum(axis=1) for _, x in iter_path_chunks(model, n, stream, paths)]
    z = np.concatenate(ends) / (sigma * math.sqrt(n))
    res = stats.kstest(z, "norm")
    return CLTResult(float(res.statistic), float(res.pvalue), bool(res.statistic <= threshold),
                     float(sigma))
