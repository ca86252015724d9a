"""Martingale approximation ``S_n = M_n + R_n`` and the moment-bound right-hand sides.

``D_k = sum_{i >= k} P_k g(xi_i)`` is available in closed form for linear
processes (``D_k = A_0 eps_k``) and is otherwise estimated by nested Monte
Carlo: each projection is the difference of two shared-future conditional
means, given ``xi_k`` and given ``xi_{k-1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .coefficients import CoefficientKind, CoefficientSequence
from .coupling import CHUNK_ELEMENTS, map_chunks
from .dependence import DependenceProfile, ProfileKind, check_condition, lq_norm_from_samples
from .errors import ConditionFailure
from .innovations import CopyTag, analytic_lq_norm, difference_lq_norm
from .models import (
    IteratedRandomFunction,
    Kernel,
    LinearDependentInnovations,
    LinearIID,
    LipschitzTransform,
    ProcessModel,
    _filter_valid,
    _partial_sums,
    analytic_theta,
)

__all__ = [
    "b_q",
    "MartingaleDecomposition",
    "BoundEvaluation",
    "linear_decomposition",
    "xi_n",
    "nested_decomposition",
    "rhs_eq1",
    "rhs_eq3",
    "rhs_eq4",
    "prop3_bounds",
    "closed_form_sigma",
    "closed_form_decomposition",
    "linear_residual_closed_form",
    "theta_tail_bound",
]

# extra lags summed explicitly when evaluating series past a profile horizon
_EXTENSION = 1 << 16


def b_q(q: float) -> float:
    """Burkholder-type constant ``18 q^{3/2} (q - 1)^{-1/2}``, exactly 1 at ``q = 2``."""
    q = float(q)
    if not q > 1:
        raise ValueError("b_q is defined for q > 1")
    if q == 2.0:
        return 1.0
    return 18.0 * q**1.5 / math.sqrt(q - 1.0)


@dataclass
class MartingaleDecomposition:
    """Paths ``S``, ``M``, ``R`` of shape ``(paths, n + 1)``, column 0 being time 0.

    ``D`` holds the martingale increments ``D_1..D_n``; ``D_se`` their inner
    Monte Carlo standard errors (zero for the closed form).
    """

    S: np.ndarray
    M: np.ndarray
    R: np.ndarray
    D: np.ndarray
    D_se: np.ndarray
    q: float
    kind: str  # closed-form-linear | nested-mc
    horizon: int | None
    inner: int | None
    truncation_error: float
    sigma: float
    sigma_se: float
    c_q: float
    c_q_se: float

    @property
    def n(self) -> int:
        return self.S.shape[1] - 1

    def rows(self):
        """Per-path columnar rows ``(path, k, S_k, M_k, R_k)``."""
        P, T = self.S.shape
        p, k = np.meshgrid(np.arange(P), np.arange(T), indexing="ij")
        return np.column_stack([p.ravel(), k.ravel(), self.S.ravel(), self.M.ravel(), self.R.ravel()])


class BoundEvaluation(NamedTuple):
    """Right-hand side of a moment bound, on the ``||.||_q`` scale."""

    inequality: str
    n: int
    q: float
    rhs: float
    provenance: str  # theta-exact | theta-sandwich (upper bounds keep the bound valid)
    horizon_limited: bool = False


# -- closed forms ---------------------------------------------------------------

def _require_summable(coefficients: CoefficientSequence):
    if not coefficients.summable:
        raise ConditionFailure(
            f"{coefficients.label()}: coefficients are not absolutely summable, A_j does not exist")


def linear_decomposition(coefficients: CoefficientSequence, stream, n: int, q: float,
                         paths: int = 1, first: int = 0) -> MartingaleDecomposition:
    """Closed-form decomposition of ``X_k = sum_i a_i eps_{k-i}``.

    ``M_k = A_0 (eps_1 + ... + eps_k)`` with ``A_0`` of the truncated filter,
    and ``R = S - M`` equals ``U_0 - U_k`` with ``U_k = sum_j A_{j+1} eps_{k-j}``.
    ``sigma`` and ``c_q`` use the untruncated ``A_0``.
    """
    _require_summable(coefficients)
    spec = stream.spec
    spec.check_moment(q)
    model = LinearIID(coefficients, spec)
    L = coefficients.lag
    idx = np.arange(1 - L, n + 1)
    eps = stream.block(np.arange(first, first + paths), idx)
    X = model.transform(eps)
    S = _partial_sums(X)
    A = coefficients.truncated_tail_sums()
    M = A[0] * _partial_sums(eps[:, L:])
    R = S - M
    D = A[0] * eps[:, L:]
    A0 = coefficients.tail_sum(0)
    sigma = abs(A0) * analytic_lq_norm(spec, 2.0)
    c_q = abs(A0) * analytic_lq_norm(spec, q)
    return MartingaleDecomposition(S, M, R, D, np.zeros_like(D), float(q), "closed-form-linear",
                                   None, None, 0.0, sigma, 0.0, c_q, 0.0)


def linear_residual_closed_form(coefficients: CoefficientSequence, eps: np.ndarray) -> np.ndarray:
    """``R_k = U_0 - U_k``, ``k = 0..n``, from innovations at indices ``1 - L..n``."""
    A = coefficients.truncated_tail_sums()[1:]  # A_1..A_{L+1}, last is 0
    if coefficients.lag == 0:
        return np.zeros(eps.shape[:-1] + (eps.shape[-1],))
    U = _filter_valid(A[:-1], eps)  # U_0..U_n
    return U[..., :1] - U


def xi_n(coefficients: CoefficientSequence, n: int, truncated: bool = False) -> float:
    """``Xi_n = sqrt(sum_{i=1}^n A_i^2 + sum_{i>n} (A_i - A_{i-n})^2)``.

    ``truncated=True`` evaluates it for the lag-``L`` filter that is simulated.
    Otherwise the sum runs explicitly over ``L + n`` plus ``2**16`` lags with
    untruncated coefficients; the geometric kind uses its closed-form tail.
    """
    _require_summable(coefficients)
    if n < 1:
        raise ValueError("n must be >= 1")
    if truncated or coefficients.kind is CoefficientKind.EXPLICIT:
        A = np.concatenate([coefficients.truncated_tail_sums(), np.zeros(n)])
        top = len(A) - 1
        extra = 0.0
    else:
        top = coefficients.lag + n + (0 if coefficients.kind is CoefficientKind.GEOMETRIC else _EXTENSION)
        a = coefficients.coefficient(np.arange(top + 1))
        A = np.cumsum(a[::-1])[::-1] + coefficients.tail_sum(top + 1)
        extra = 0.0
        if coefficients.kind is CoefficientKind.GEOMETRIC:
            # (A_i - A_{i-n})^2 = A_{i-n}^2 (1 - rho^n)^2 with A_j = rho^j / (1 - rho)
            rho = coefficients.param
            j0 = top + 1 - n
            extra = (1 - rho**n) ** 2 * rho ** (2 * j0) / ((1 - rho) ** 2 * (1 - rho**2))
    i = np.arange(1, len(A))
    first = np.sum(A[1:min(n, len(A) - 1) + 1] ** 2)
    later = i[i > n]
    second = np.sum((A[later] - A[later - n]) ** 2)
    return float(math.sqrt(first + second + extra))


def closed_form_decomposition(model: ProcessModel, stream, n: int, q: float, paths: int = 1,
                              first: int = 0) -> MartingaleDecomposition | None:
    """Exact decomposition for linear models and AR(1) chains, else ``None``.

    For AR(1), ``D_k = eps_k / (1 - rho)``.
    """
    if isinstance(model, LinearIID):
        if not model.coefficients.summable:
            return None
        return linear_decomposition(model.coefficients, stream, n, q, paths, first)
    if not (isinstance(model, IteratedRandomFunction) and model.kernel is Kernel.AR1):
        return None
    model.innovations.check_moment(q)
    B = model.memory
    eps = stream.block(np.arange(first, first + paths), np.arange(1 - B, n + 1))
    S = _partial_sums(model.transform(eps))
    D = eps[:, B:] / (1.0 - model.rho)
    M = _partial_sums(D)
    sigma = analytic_lq_norm(model.innovations, 2.0) / (1.0 - model.rho)
    c_q = analytic_lq_norm(model.innovations, q) / (1.0 - model.rho)
    return MartingaleDecomposition(S, M, S - M, D, np.zeros_like(D), float(q), "closed-form-ar1",
                                   None, None, 0.0, sigma, 0.0, c_q, 0.0)


def closed_form_sigma(model: ProcessModel) -> float | None:
    """``||D_k||_2`` when the model gives it in closed form."""
    spec = model.innovations
    if isinstance(model, LinearIID):
        if not model.coefficients.summable:
            return None
        return abs(model.coefficients.tail_sum(0)) * analytic_lq_norm(spec, 2.0)
    if isinstance(model, IteratedRandomFunction) and model.kernel is Kernel.AR1:
        return analytic_lq_norm(spec, 2.0) / (1.0 - model.rho)
    return None


def theta_tail_bound(model: ProcessModel, m: int, q: float) -> float | None:
    """Upper bound on ``Theta_{m,q}`` from closed-form ``theta`` or its Lipschitz bound."""
    spec = model.innovations
    if isinstance(model, LinearIID):
        return analytic_lq_norm(spec, q) * model.coefficients.abs_tail_sum(m)
    if isinstance(model, LipschitzTransform):
        unit = model.lipschitz * difference_lq_norm(spec, q)
        return unit * model.base.coefficients.abs_tail_sum(m)
    if isinstance(model, IteratedRandomFunction):
        return analytic_theta(model, m, q).value / (1.0 - abs(model.rho))
    return None


def _condition_two(model: ProcessModel) -> bool:
    if isinstance(model, LinearIID):
        return model.coefficients.summable
    if isinstance(model, LipschitzTransform):
        return model.base.coefficients.summable
    if isinstance(model, LinearDependentInnovations):
        return model.coefficients.summable
    return True


# -- nested construction ---------------------------------------------------------

def _inner_draws(stream, rows, offsets, inner, *extra):
    """Inner draws ``(rows, inner, len(offsets))``, antithetic pairs for symmetric families."""
    rows = np.asarray(rows)[:, None]
    extra = tuple(np.asarray(e)[:, None] if np.ndim(e) else e for e in extra)
    if stream.spec.symmetric and inner % 2 == 0:
        half = stream.block(rows, offsets, np.arange(inner // 2), *extra)
        return np.concatenate([half, -half], axis=1)
    return stream.block(rows, offsets, np.arange(inner), *extra)


def nested_decomposition(model: ProcessModel, stream, n: int, q: float, horizon: int = 20,
                         inner: int = 512, paths: int = 1, first: int = 0, jobs: int = 1,
                         profile: DependenceProfile | None = None) -> MartingaleDecomposition:
    """Estimate ``D_k``, ``k = 1..n``, by differencing conditional means.

    ``D^_k = mean_j sum_{s=0}^{H} [g(xi_k, fut_j)_{k+s} - g(xi_{k-1}, eps'_j, fut_j)_{k+s}]``
    where ``fut_j`` are shared inner futures at ``k+1..k+H`` and ``eps'_j``
    replaces ``eps_k``. Inner draws are antithetic pairs for symmetric
    families, which makes the estimate exact for linear ``g``. The omitted
    tail ``sum_{i > k+H}`` is bounded by ``Theta_{H+1,q}`` and reported as
    ``truncation_error`` (NaN when no bound is available).

    Raises ``ConditionFailure`` if ``Theta_{0,q}`` is infinite for the model
    (or, when ``profile`` is given, condition (2) is violated on it).
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if inner < 2:
        raise ValueError("inner must be >= 2")
    spec = model.innovations
    spec.check_moment(q)
    if not _condition_two(model):
        raise ConditionFailure(f"{model.label}: condition (2) fails, Theta_0 is infinite")
    if profile is not None and check_condition(profile, "2").verdict == "violated":
        raise ConditionFailure(f"{model.label}: condition (2) violated on the dependence profile")
    H = int(horizon)
    mem = model.memory
    rows_all = np.arange(first, first + paths)
    eps = stream.block(rows_all, np.arange(-mem, n + 1))  # column c holds index c - mem
    S = _partial_sums(model.transform(eps[:, 1:]))
    future = stream.with_tag(CopyTag.FUTURE)
    chunk = max(1, CHUNK_ELEMENTS // (inner * (H + 2) * 3 + mem + 2))
    pairs = np.stack(np.meshgrid(np.arange(paths), np.arange(1, n + 1), indexing="ij"), -1).reshape(-1, 2)
    offsets = np.arange(1, H + 1)

    def run(pr):
        p, k = pr[:, 0], pr[:, 1]
        # innovations at k-mem-1..k; dropping the last column gives the past of xi_{k-1}
        window = eps[p[:, None], (k + mem)[:, None] + np.arange(-mem - 1, 1)[None, :]]
        r = rows_all[p]
        fut = _inner_draws(future, r, offsets, inner, k, 0)
        alt = _inner_draws(future, r, [0], inner, k, 1)
        g_k = model.trajectory(window, fut)
        g_prev = model.trajectory(window[:, :-1], np.concatenate([alt, fut], axis=-1))[..., 1:]
        diff = (g_k - g_prev).sum(axis=-1)
        if spec.symmetric and inner % 2 == 0:
            # antithetic pairs are the independent units
            h = inner // 2
            diff = 0.5 * (diff[:, :h] + diff[:, h:])
        return diff.mean(axis=1), diff.std(axis=1, ddof=1) / math.sqrt(diff.shape[1])

    d, dse = map_chunks(run, pairs, chunk, jobs)
    D = d.reshape(paths, n)
    D_se = dse.reshape(paths, n)
    M = _partial_sums(D)
    R = S - M
    trunc = theta_tail_bound(model, H + 1, q)
    sig = closed_form_sigma(model)
    if sig is None:
        est = lq_norm_from_samples(D, 2.0)
        sigma, sigma_se = est.estimate, est.se
    else:
        sigma, sigma_se = sig, 0.0
    cq = lq_norm_from_samples(D, q)
    return MartingaleDecomposition(S, M, R, D, D_se, float(q), "nested-mc", H, inner,
                                   math.nan if trunc is None else trunc, sigma, sigma_se,
                                   cq.estimate, cq.se)


# -- moment-bound right-hand sides --------------------------------------------------

def _theta_array(theta, need: int):
    """``(values at 0..need, tail power-sum callable or None, provenance, limited)``."""
    if isinstance(theta, DependenceProfile):
        s = theta.theta
        N = int(s.lags[-1])
        tail = s.tail if s.tail.available else None
        top = max(N, need)
        vals = np.zeros(top + 1)
        vals[:N + 1] = s.estimate
        limited = False
        if top > N:
            if tail is None:
                limited = True
            else:
                vals[N + 1:] = tail.value(np.arange(N + 1, top + 1))
        return vals, tail, theta.provenance, limited
    vals = np.asarray(theta, dtype=float)
    if need >= len(vals):
        vals = np.concatenate([vals, np.zeros(need + 1 - len(vals))])
    return vals, None, "theta-exact", False


def rhs_eq1(theta, n: int, q: float) -> BoundEvaluation:
    """``B_q (sum_{i >= -n} (Lambda_{i+n} - Lambda_i)^{q'})^{1/q'}`` with ``q' = min(2, q)``.

    ``theta`` is an array (zero past its end) or a profile whose tail model
    extends it; the tail past the explicit range is bounded by
    ``n^{q'} sum theta_i^{q'}``.
    """
    qp = min(2.0, float(q))
    vals, tail, prov, limited = _theta_array(theta, 0)
    N = len(vals) - 1
    top = N + (_EXTENSION if tail is not None else 0)
    if tail is not None:
        vals = np.concatenate([vals, tail.value(np.arange(N + 1, top + 1))])
    lam = np.concatenate([[0.0], np.cumsum(vals)])  # lam[m + 1] = Lambda_m
    i = np.arange(-n, top + 1)
    hi = np.minimum(i + n, top)
    diff = lam[hi + 1] - lam[np.maximum(i, -1) + 1]
    total = float(np.sum(diff ** qp))
    if tail is not None:
        total += n ** qp * tail.power_sum(top + 1, qp)
    return BoundEvaluation("eq1", n, float(q), b_q(q) * total ** (1 / qp), prov, limited)


def _Theta_values(source, js):
    """``Theta_j`` for each ``j`` in ``js`` from an array ``Theta_0..``, a profile or a callable."""
    if isinstance(source, DependenceProfile):
        from .dependence import tail_sums
        out = [tail_sums(source, int(j)) for j in js]
        return np.array([t.Theta for t in out]), source.provenance, any(t.horizon_limited for t in out)
    if callable(source):
        return np.array([source(int(j)) for j in js], dtype=float), "theta-exact", False
    arr = np.asarray(source, dtype=float)
    vals = np.where(js < len(arr), arr[np.minimum(js, len(arr) - 1)], 0.0)
    return vals, "theta-exact", False


def rhs_eq3(Theta, n: int, q: float) -> BoundEvaluation:
    """``(3 B_q^{q'} sum_{j=1}^n Theta_j^{q'})^{1/q'}``, the bound on ``||S_n - M_n||_q``.

    ``Theta`` is indexed from ``j = 0`` (array), or a profile, or a callable.
    """
    qp = min(2.0, float(q))
    js = np.arange(1, int(n) + 1)
    vals, prov, limited = _Theta_values(Theta, js)
    total = 3.0 * b_q(q) ** qp * float(np.sum(vals ** qp))
    return BoundEvaluation("eq3", int(n), float(q), total ** (1 / qp), prov, limited)


def rhs_eq4(Theta0: float, n: int, q: float) -> BoundEvaluation:
    """``(q B_q / (q - 1)) n^{1/q'} Theta_0``, the bound on ``||max_{k<=n} |S_k| ||_q``."""
    qp = min(2.0, float(q))
    val = q * b_q(q) / (q - 1.0) * n ** (1.0 / qp) * float(Theta0)
    return BoundEvaluation("eq4", int(n), float(q), val, "theta-exact", False)


def _measure(profile: DependenceProfile, kind: ProfileKind, top: int) -> np.ndarray:
    s = profile.measures.get(kind)
    if s is None:
        raise ValueError(f"profile lacks {kind.value} estimates")
    return s.extended(top)


def prop3_bounds(model: ProcessModel | None, q: float, k: int, profile: DependenceProfile,
                 c_q: float | None = None, extension: int = 4096):
    """Right-hand sides bounding ``||E(D_k^2 | xi_0) - sigma^2||_{q/2}`` and ``||P_0 D_k^2||_{q/2}``.

    ``8 c_q beta*_k + 8 c_q sum_{i >= k} min(alpha*_i, alpha~_{i-k})`` and
    ``8 c_q beta~_k + 8 c_q sum_{i >= k} alpha~_i``; measures past the profile
    horizon come from their fitted tails, summed explicitly over ``extension``
    more lags. ``c_q`` defaults to its closed form for linear models.
    """
    if not float(q) > 2:
        raise ValueError("these bounds need q > 2")
    if profile.q != float(q):
        raise ValueError("profile moment order does not match q")
    if c_q is None:
        if isinstance(model, LinearIID) and model.coefficients.summable:
            c_q = abs(model.coefficients.tail_sum(0)) * analytic_lq_norm(model.innovations, q)
        elif isinstance(model, IteratedRandomFunction) and model.kernel is Kernel.AR1:
            c_q = analytic_lq_norm(model.innovations, q) / (1.0 - model.rho)
        else:
            raise ValueError("c_q must be supplied for this model")
    top = profile.horizon + extension + k
    at = _measure(profile, ProfileKind.ALPHA_TILDE, top)
    bt = _measure(profile, ProfileKind.BETA_TILDE, top)
    i = np.arange(k, top + 1)
    if ProfileKind.ALPHA_STAR in profile.measures and ProfileKind.BETA_STAR in profile.measures:
        ast = _measure(profile, ProfileKind.ALPHA_STAR, top)
        bst = _measure(profile, ProfileKind.BETA_STAR, top)
        r28 = 8 * c_q * bst[k] + 8 * c_q * float(np.sum(np.minimum(ast[i], at[i - k])))
    else:
        r28 = math.nan
    r29 = 8 * c_q * bt[k] + 8 * c_q * float(np.sum(at[i]))
    return r28, r29
