"""Monte Carlo dependence measures, tail sums and summability checks.

Dependence measures are ``L^q`` norms of coupled differences (see
``coupling``). ``theta_{n,q} = ||P_0 g(xi_n)||_q`` is taken in closed form
when the model provides one and otherwise bracketed by
``omega_n / 2 <= theta_n <= min(omega_n, alpha~_{n-1})``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize, special

from .coefficients import CoefficientKind, CoefficientSequence
from .coupling import CoupledWindow, CouplingKind, coupled_g_values, coupled_h_difference
from .errors import HorizonLimitedError
from .innovations import IndexedInnovationStream, InnovationSpec, analytic_lq_norm, difference_lq_norm
from .models import (
    IteratedRandomFunction,
    LinearDependentInnovations,
    ProcessModel,
    analytic_theta,
)

__all__ = [
    "LqEstimate",
    "ProfileKind",
    "ProfileEntry",
    "MeasureSeries",
    "TailModel",
    "DependenceProfile",
    "ThetaBracket",
    "TailSums",
    "ConditionVerdict",
    "GMCFit",
    "CONDITIONS",
    "lq_norm_from_samples",
    "estimate_lq_norm",
    "estimate_beta",
    "estimate_alpha",
    "estimate_omega",
    "theta_sandwich",
    "fit_tail",
    "isotonic_nonincreasing",
    "build_profiles",
    "profile_from_coefficients",
    "profile_from_theta",
    "tail_sums",
    "check_condition",
    "fit_gmc",
]

CONDITIONS = ("2", "9", "11", "15", "23", "30", "31")
# fitted decay exponents this close to a convergence threshold are not decisive
_BOUNDARY_SLACK = 0.1


# -- L^q norms ----------------------------------------------------------------

class LqEstimate(NamedTuple):
    estimate: float
    se: float


def lq_norm_from_samples(z, q: float) -> LqEstimate:
    """``(mean |z|^q)^(1/q)`` with a delta-method standard error."""
    if q < 1:
        raise ValueError("q must be >= 1")
    a = np.abs(np.asarray(z, dtype=float)).ravel() ** q
    mu = float(a.mean())
    if mu == 0.0:
        return LqEstimate(0.0, 0.0)
    sd = float(a.std(ddof=1)) if a.size > 1 else 0.0
    est = mu ** (1.0 / q)
    se = est / (q * mu) * sd / math.sqrt(a.size)
    return LqEstimate(est, se)


def estimate_lq_norm(sampler, q: float, replicates: int) -> LqEstimate:
    """``L^q`` norm of the replicate distribution produced by ``sampler``.

    ``sampler`` is called with the replicate count and returns that many
    draws; an array of draws is accepted as well.
    """
    if replicates < 100:
        raise ValueError("at least 100 replicates are required")
    z = sampler(replicates) if callable(sampler) else np.asarray(sampler)
    z = np.asarray(z, dtype=float).ravel()
    if z.size != replicates:
        raise ValueError(f"sampler returned {z.size} draws, expected {replicates}")
    return lq_norm_from_samples(z, q)


# -- per-lag measures ----------------------------------------------------------

class ProfileKind(str, enum.Enum):
    THETA_EXACT = "theta-exact"
    THETA_SANDWICH = "theta-sandwich"
    OMEGA = "omega"
    ALPHA_TILDE = "alpha-tilde"
    ALPHA_STAR = "alpha-star"
    BETA_TILDE = "beta-tilde"
    BETA_STAR = "beta-star"


class ProfileEntry(NamedTuple):
    lag: int
    kind: ProfileKind
    q: float
    estimate: float
    se: float
    replicates: int


def _stream(model: ProcessModel, stream):
    return stream if stream is not None else IndexedInnovationStream(0, model.innovations)


def _beta_samples(model, k, R, kind, stream, jobs=1):
    w = CoupledWindow(model, _stream(model, stream), kind)
    g0, g1 = coupled_g_values(w, k, np.arange(R), jobs)
    return g0 - g1


def _h_samples(model, k, m, R, inner, kind, stream, jobs=1):
    w = CoupledWindow(model, _stream(model, stream), kind)
    d, _ = coupled_h_difference(w, k, m, inner, np.arange(R), jobs)
    return d


def _entry(lag, kind, q, z):
    est = lq_norm_from_samples(z, q)
    return ProfileEntry(int(lag), ProfileKind(kind), float(q), est.estimate, est.se, len(z))


def estimate_beta(model: ProcessModel, q: float, k: int, R: int, kind="tilde", *,
                  stream=None, jobs: int = 1) -> ProfileEntry:
    """Physical dependence ``||g(xi_k) - g(coupled xi_k)||_q``."""
    if k < 0:
        raise ValueError("lag must be nonnegative")
    model.innovations.check_moment(q)
    kind = CouplingKind(kind)
    z = _beta_samples(model, k, R, kind, stream, jobs)
    pk = ProfileKind.BETA_TILDE if kind is CouplingKind.TILDE else ProfileKind.BETA_STAR
    return _entry(k, pk, q, z)


def estimate_alpha(model: ProcessModel, q: float, k: int, R: int, inner: int, kind="tilde", *,
                   stream=None, jobs: int = 1) -> ProfileEntry:
    """One-step predictive dependence ``||h(xi_k) - h(coupled xi_k)||_q``."""
    if k < 0:
        raise ValueError("lag must be nonnegative")
    model.innovations.check_moment(q)
    kind = CouplingKind(kind)
    z = _h_samples(model, k, 1, R, inner, kind, stream, jobs)
    pk = ProfileKind.ALPHA_TILDE if kind is CouplingKind.TILDE else ProfileKind.ALPHA_STAR
    return _entry(k, pk, q, z)


def estimate_omega(model: ProcessModel, q: float, n: int, R: int, inner: int, *,
                   stream=None, jobs: int = 1) -> ProfileEntry:
    """``omega_n = ||h_n(xi_0) - h_n(xi~_0)||_q``."""
    if n < 1:
        raise ValueError("omega needs n >= 1")
    model.innovations.check_moment(q)
    z = _h_samples(model, 0, n, R, inner, CouplingKind.TILDE, stream, jobs)
    return _entry(n, ProfileKind.OMEGA, q, z)


class ThetaBracket(NamedTuple):
    lower: float
    upper: float
    lower_se: float
    upper_se: float

    def contains(self, value: float, k: float = 3.0) -> bool:
        return self.lower - k * self.lower_se <= value <= self.upper + k * self.upper_se


def _val(x):
    if isinstance(x, ProfileEntry):
        return x.estimate, x.se
    if isinstance(x, tuple):
        return float(x[0]), float(x[1])
    return float(x), 0.0


def theta_sandwich(omega_n, alpha_tilde_prev) -> ThetaBracket:
    """Bracket ``[omega_n / 2, min(omega_n, alpha~_{n-1})]`` for ``theta_n``.

    Inputs are profile entries, ``(estimate, se)`` pairs or plain numbers.
    """
    if isinstance(omega_n, ProfileEntry) and isinstance(alpha_tilde_prev, ProfileEntry):
        if omega_n.q != alpha_tilde_prev.q:
            raise ValueError("sandwich inputs must share the moment order")
    w, ws = _val(omega_n)
    a, as_ = _val(alpha_tilde_prev)
    up, up_se = (w, ws) if w <= a else (a, as_)
    return ThetaBracket(w / 2, up, ws / 2, up_se)


# -- tails ---------------------------------------------------------------------

def isotonic_nonincreasing(values) -> np.ndarray:
    """Pool adjacent violators into the closest nonincreasing sequence."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return v.copy()
    return optimize.isotonic_regression(v, increasing=False).x


@dataclass(frozen=True)
class TailModel:
    """Analytic extrapolation of a nonnegative sequence beyond its horizon.

    kinds: ``zero``; ``geometric`` (``scale * rate**i``); ``polynomial``
    (``scale * (1 + i)**-exponent``); ``analytic`` (``scale * |a_i|`` of a
    coefficient sequence); ``none`` (no extrapolation available).
    """

    kind: str
    scale: float = 0.0
    rate: float = math.nan
    exponent: float = math.nan
    residual: float = math.nan
    coefficients: CoefficientSequence | None = None

    @property
    def available(self) -> bool:
        return self.kind != "none"

    def value(self, i):
        i = np.asarray(i, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(i)
        if self.kind == "geometric":
            return self.scale * self.rate ** i
        if self.kind == "polynomial":
            return self.scale * (1.0 + i) ** -self.exponent
        if self.kind == "analytic":
            return self.scale * np.abs(self.coefficients.coefficient(i.astype(np.int64)))
        raise HorizonLimitedError("no tail model available")

    def power_sum(self, m: int, p: float = 1.0) -> float:
        """``sum_{i >= m} value(i)**p``."""
        m = max(int(m), 0)
        if self.kind == "zero" or self.scale == 0.0:
            return 0.0
        if self.kind == "geometric":
            r = self.rate ** p
            return self.scale ** p * r ** m / (1.0 - r)
        if self.kind == "polynomial":
            e = self.exponent * p
            return self.scale ** p * float(special.zeta(e, m + 1)) if e > 1 else math.inf
        if self.kind == "analytic":
            return self.scale ** p * self.coefficients._power_tail(m, p)
        raise HorizonLimitedError("no tail model available")

    def decay(self):
        """``(class, parameter)`` used by the convergence rules."""
        if self.kind in ("zero", "geometric"):
            return "geometric", self.rate
        if self.kind == "polynomial":
            return "polynomial", self.exponent
        if self.kind == "analytic":
            c = self.coefficients
            if c.kind in (CoefficientKind.EXPLICIT, CoefficientKind.GEOMETRIC):
                return "geometric", math.nan
            if c.kind is CoefficientKind.POLYNOMIAL:
                return "polynomial", c.param
            return "log", c.param
        return "none", math.nan


def fit_tail(lags, values, min_points: int = 3) -> TailModel:
    """Fit geometric and polynomial decay on the last half of the lags.

    Values are made nonincreasing first; the decay with the smaller
    least-squares residual on the log scale wins.
    """
    lags = np.asarray(lags, dtype=float)
    v = isotonic_nonincreasing(values)
    if v.size == 0:
        return TailModel("none")
    half = lags >= lags[0] + (lags[-1] - lags[0]) / 2
    x, y = lags[half], v[half]
    if np.all(y <= 0):
        return TailModel("zero", 0.0, 0.0)
    pos = y > 0
    if pos.sum() < min_points:
        return TailModel("none")
    if pos.sum() < y.size:
        # exact zeros after positive values: support ends inside the horizon
        return TailModel("zero", 0.0, 0.0)
    x, ly = x[pos], np.log(y[pos])
    best = None
    for kind, t in (("geometric", x), ("polynomial", np.log1p(x))):
        A = np.vstack([np.ones_like(t), t]).T
        coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
        res = float(np.sqrt(np.mean((A @ coef - ly) ** 2)))
        b0, b1 = coef
        if kind == "geometric":
            rate = math.exp(b1)
            if rate >= 1:
                continue
            cand = TailModel("geometric", math.exp(b0), rate=rate, residual=res)
        else:
            cand = TailModel("polynomial", math.exp(b0), exponent=-b1, residual=res)
        if best is None or res < best.residual:
            best = cand
    return best or TailModel("none")


@dataclass
class MeasureSeries:
    """Per-lag estimates of one measure at one moment order."""

    kind: ProfileKind
    q: float
    lags: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    replicates: int
    tail: TailModel = field(default_factory=lambda: TailModel("none"))

    def entry(self, lag: int) -> ProfileEntry:
        i = int(np.searchsorted(self.lags, lag))
        if i >= len(self.lags) or self.lags[i] != lag:
            raise KeyError(f"lag {lag} not in {self.kind.value} series")
        return ProfileEntry(int(lag), self.kind, self.q, float(self.estimate[i]),
                            float(self.se[i]), self.replicates)

    def extended(self, n: int) -> np.ndarray:
        """Values at lags ``0..n``, past the horizon from the tail model."""
        out = np.zeros(n + 1)
        keep = self.lags <= n
        out[self.lags[keep].astype(int)] = self.estimate[keep]
        top = int(self.lags[-1])
        if n > top:
            out[top + 1:] = self.tail.value(np.arange(top + 1, n + 1))
        return out


@dataclass
class DependenceProfile:
    """Per-lag dependence measures at one moment order with tail extrapolation.

    ``theta`` holds closed-form values (kind theta-exact) or sandwich upper
    bounds (kind theta-sandwich); ``theta_lower`` keeps the sandwich lower
    bounds when they exist.
    """

    q: float
    horizon: int
    theta: MeasureSeries
    theta_lower: np.ndarray | None = None
    measures: dict = field(default_factory=dict)
    coefficients: CoefficientSequence | None = None
    innovations: InnovationSpec | None = None
    label: str = ""

    @property
    def tail(self) -> TailModel:
        return self.theta.tail

    @property
    def provenance(self) -> str:
        return self.theta.kind.value

    def theta_values(self) -> np.ndarray:
        return self.theta.estimate

    def rows(self):
        """Columnar rows ``(lag, kind, q, estimate, se, replicates)``."""
        out = []
        for s in [self.theta, *self.measures.values()]:
            for i, lag in enumerate(s.lags):
                out.append((int(lag), s.kind.value, self.q, float(s.estimate[i]),
                            float(s.se[i]), int(s.replicates)))
        return out


class TailSums(NamedTuple):
    Theta: float
    Lambda: float
    Theta_se: float
    Lambda_se: float
    horizon_limited: bool


def tail_sums(profile: DependenceProfile, m: int) -> TailSums:
    """``Theta_{m,q}`` (horizon sum plus fitted tail) and ``Lambda_{m,q}``.

    ``Lambda_m = 0`` for ``m < 0``. Without a tail model, quantities that need
    it are NaN and ``horizon_limited`` is set. Errors add up the per-lag SEs
    since every lag shares the same replicate rows.
    """
    th = profile.theta
    est, se = th.estimate, th.se
    N = int(th.lags[-1])
    tail = th.tail
    limited = False
    lo = max(m, 0)
    if tail.available:
        Theta = float(np.sum(est[lo:])) + tail.power_sum(max(lo, N + 1))
    else:
        Theta, limited = math.nan, True
    Theta_se = float(np.sum(se[lo:]))
    if m < 0:
        return TailSums(Theta, 0.0, Theta_se, 0.0, limited)
    if m <= N:
        Lam = float(np.sum(est[:m + 1]))
    elif tail.available:
        Lam = float(np.sum(est)) + tail.power_sum(N + 1) - tail.power_sum(m + 1)
    else:
        Lam, limited = math.nan, True
    return TailSums(Theta, Lam, Theta_se, float(np.sum(se[:min(m, N) + 1])), limited)


# -- profile construction -------------------------------------------------------

def _series(kind, q, lags, zs, tail=True):
    est = [lq_norm_from_samples(z, q) for z in zs]
    e = np.array([x.estimate for x in est])
    s = np.array([x.se for x in est])
    lags = np.asarray(lags)
    t = fit_tail(lags, e) if tail else TailModel("none")
    return MeasureSeries(ProfileKind(kind), float(q), lags, e, s, len(zs[0]), t)


def build_profiles(model: ProcessModel, qs: Sequence[float], horizon: int, R: int, inner: int,
                   *, stream=None, jobs: int = 1, star: bool = True) -> dict:
    """Estimate every measure to ``horizon`` and assemble one profile per ``q``.

    Coupled samples are drawn once and shared by all moment orders.
    """
    qs = [float(q) for q in qs]
    for q in qs:
        model.innovations.check_moment(q)
    N = int(horizon)
    lags = np.arange(N + 1)
    kinds = [CouplingKind.TILDE] + ([CouplingKind.STAR] if star else [])
    beta = {k: [_beta_samples(model, i, R, k, stream, jobs) for i in lags] for k in kinds}
    alpha = {k: [_h_samples(model, i, 1, R, inner, k, stream, jobs) for i in lags] for k in kinds}
    omega = [_h_samples(model, 0, n, R, inner, CouplingKind.TILDE, stream, jobs)
             for n in range(1, N + 1)]
    out = {}
    for q in qs:
        measures = {}
        for k in kinds:
            bk = ProfileKind.BETA_TILDE if k is CouplingKind.TILDE else ProfileKind.BETA_STAR
            ak = ProfileKind.ALPHA_TILDE if k is CouplingKind.TILDE else ProfileKind.ALPHA_STAR
            measures[bk] = _series(bk, q, lags, beta[k])
            measures[ak] = _series(ak, q, lags, alpha[k])
        if N >= 1:
            measures[ProfileKind.OMEGA] = _series(ProfileKind.OMEGA, q, lags[1:], omega)
        exact = [analytic_theta(model, int(n), q) for n in lags]
        if all(t is not None and t.exact for t in exact):
            vals = np.array([t.value for t in exact])
            theta = MeasureSeries(ProfileKind.THETA_EXACT, q, lags, vals, np.zeros(N + 1), R,
                                  fit_tail(lags, vals))
            lower = None
        else:
            bt = measures[ProfileKind.BETA_TILDE]
            up, up_se, lo = [bt.estimate[0]], [bt.se[0]], [bt.estimate[0] / 2]
            for n in range(1, N + 1):
                br = theta_sandwich(measures[ProfileKind.OMEGA].entry(n),
                                    measures[ProfileKind.ALPHA_TILDE].entry(n - 1))
                up.append(br.upper)
                up_se.append(br.upper_se)
                lo.append(br.lower)
            up = np.array(up)
            theta = MeasureSeries(ProfileKind.THETA_SANDWICH, q, lags, up, np.array(up_se), R,
                                  fit_tail(lags, up))
            lower = np.array(lo)
        out[q] = DependenceProfile(q, N, theta, lower, measures, label=model.label,
                                   innovations=model.innovations)
    return out


def profile_from_coefficients(coefficients: CoefficientSequence, q: float,
                              innovations: InnovationSpec = InnovationSpec(),
                              horizon: int | None = None) -> DependenceProfile:
    """Closed-form profile of a linear process with i.i.d. innovations.

    ``theta_i = |a_i| ||eps||_q``, ``beta~_k = |a_k| ||eps - eps'||_q`` and
    ``alpha~_k = |a_{k+1}| ||eps - eps'||_q``, all with analytic tails.
    """
    innovations.check_moment(q)
    N = int(horizon if horizon is not None else max(min(coefficients.lag, 1 << 16), 64))
    lags = np.arange(N + 1)
    a = np.abs(coefficients.coefficient(np.arange(N + 2)))
    c, d = analytic_lq_norm(innovations, q), difference_lq_norm(innovations, q)
    zeros = np.zeros(N + 1)

    def series(kind, vals, scale, shift=0):
        tail = TailModel("analytic", scale, coefficients=coefficients)
        if shift:
            tail = TailModel("analytic", scale, coefficients=_Shifted(coefficients, shift))
        return MeasureSeries(kind, q, lags, vals, zeros, 0, tail)

    theta = series(ProfileKind.THETA_EXACT, c * a[:N + 1], c)
    measures = {
        ProfileKind.BETA_TILDE: series(ProfileKind.BETA_TILDE, d * a[:N + 1], d),
        ProfileKind.ALPHA_TILDE: series(ProfileKind.ALPHA_TILDE, d * a[1:N + 2], d, 1),
    }
    return DependenceProfile(q, N, theta, None, measures, coefficients, innovations,
                             label=f"linear[{coefficients.label()};{innovations.label()}]")


class _Shifted:
    """Coefficient view ``i -> a_{i+shift}`` for tails of shifted measures."""

    def __init__(self, base: CoefficientSequence, shift: int):
        self.base, self.shift = base, shift
        self.kind, self.param = base.kind, base.param

    def coefficient(self, i):
        return self.base.coefficient(np.asarray(i) + self.shift)

    def _power_tail(self, m, p):
        return self.base._power_tail(m + self.shift, p)


def profile_from_theta(theta, q: float, tail: str | TailModel = "fit",
                       kind: ProfileKind = ProfileKind.THETA_EXACT) -> DependenceProfile:
    """Profile around a given ``theta_0..theta_N`` sequence.

    ``tail`` is ``"fit"``, ``"none"``, ``"zero"`` or an explicit ``TailModel``.
    """
    vals = np.asarray(theta, dtype=float)
    lags = np.arange(len(vals))
    if isinstance(tail, TailModel):
        t = tail
    elif tail == "fit":
        t = fit_tail(lags, vals)
    else:
        t = TailModel(tail)
    s = MeasureSeries(ProfileKind(kind), float(q), lags, vals, np.zeros(len(vals)), 0, t)
    return DependenceProfile(float(q), len(vals) - 1, s)


# -- summability conditions ------------------------------------------------------

class ConditionVerdict(NamedTuple):
    condition: str
    verdict: str  # holds-at-horizon | violated | inconclusive
    margin: float
    note: str = ""


def _rule(cond: str, cls: str, p: float, q: float):
    """Convergence of a condition's series for a decay class; None if undecidable."""
    if cls == "geometric":
        return True
    if cls == "none":
        return None
    s = min(1.0, (q + 4) / (2 * q + 2))
    if cls == "polynomial":
        thresholds = {"2": 1.0, "11": 1.0, "15": 1.0, "23": 1.5, "30": 2.0, "31": 2.0}
        if cond == "9":
            return p > 1 and s + (p - 1) * q / (q + 1) > 1
        return p > thresholds[cond]
    # logarithmic decay: a_i ~ 1/(i log^p i), or its dyadic-sparse analogue
    if cond in ("2", "11"):
        return p > 1
    if cond == "9":
        return s == 1.0 and p > 1 and (p - 1) * q / (q + 1) > 1
    if cond == "15":
        return p > 1 and (q * (p - 1) > 1 or (q * (p - 1) == 1 and q > 2))
    return False


def _near_boundary(cond: str, p: float, q: float) -> bool:
    s = min(1.0, (q + 4) / (2 * q + 2))
    edges = {"2": [1.0], "11": [1.0], "15": [1.0], "23": [1.5], "30": [2.0], "31": [2.0],
             "9": [1.0, 1 + (1 - s) * (q + 1) / q]}
    return any(abs(p - e) < _BOUNDARY_SLACK for e in edges[cond])


def _sum_series(x: np.ndarray) -> float:
    return float(np.sum(x)) if np.all(np.isfinite(x)) else math.inf


def _margin(cond: str, prof: DependenceProfile) -> float:
    q = prof.q
    th = prof.theta
    N = int(th.lags[-1])
    est = th.estimate
    tail_total = th.tail.power_sum(N + 1) if th.tail.available else math.nan
    if cond == "2":
        return float(np.sum(est)) + tail_total
    Theta = np.cumsum(est[::-1])[::-1] + (tail_total if th.tail.available else 0.0)
    k = np.arange(1, N + 1)
    if cond == "9":
        s = min(1.0, (q + 4) / (2 * q + 2))
        return _sum_series(k ** -s * Theta[1:] ** (q / (q + 1)))
    if cond == "11":
        kk = np.arange(2, max(int(math.log2(max(N, 4))), 2) + 1)
        x = kk * math.log(2)
        return float(np.sum(1.0 / (x * np.log(x) ** 2)))
    if cond == "15":
        i = np.arange(2, int(math.log2(N)) + 1 if N >= 4 else 2)
        return float(np.sum((Theta[2 ** i] / np.sqrt(np.log(i))) ** q))
    if cond == "23":
        c = prof.coefficients
        if c is None:
            return math.nan
        a2 = c.coefficient(np.arange(N + 2)) ** 2
        sq = np.cumsum(a2[::-1])[::-1] + c.sq_tail_sum(N + 2)
        return float(np.sum(np.sqrt(sq[1:N + 1])))
    bt = prof.measures.get(ProfileKind.BETA_TILDE)
    if bt is None:
        return math.nan
    kb = bt.lags[bt.lags >= 1]
    val = float(np.sum(kb * bt.estimate[bt.lags >= 1])) if cond == "31" else float(np.sum(bt.estimate[bt.lags >= 1]))
    if cond == "30":
        at = prof.measures.get(ProfileKind.ALPHA_TILDE)
        if at is None:
            return math.nan
        m = at.lags >= 1
        val += float(np.sum(at.lags[m] * at.estimate[m]))
    return val


def _decay_for(cond: str, prof: DependenceProfile):
    if cond == "23":
        if prof.coefficients is None:
            return "none", math.nan
        return TailModel("analytic", 1.0, coefficients=prof.coefficients).decay()
    if cond in ("30", "31"):
        series = [prof.measures.get(ProfileKind.BETA_TILDE)]
        if cond == "30":
            series.append(prof.measures.get(ProfileKind.ALPHA_TILDE))
        if any(s is None for s in series):
            return "none", math.nan
        decays = [s.tail.decay() for s in series]
        # the slowest-decaying ingredient decides
        for cls in ("none", "log", "polynomial"):
            hits = [d for d in decays if d[0] == cls]
            if hits:
                return cls, min(d[1] for d in hits)
        return "geometric", math.nan
    return prof.tail.decay()


def check_condition(source, condition: str, q: float | None = None,
                    innovations: InnovationSpec = InnovationSpec()) -> ConditionVerdict:
    """Evaluate one summability condition on a profile or a coefficient sequence.

    ``condition`` is one of ``CONDITIONS`` (parentheses optional). Verdicts
    come from the decay class of the tail: exact for coefficient sequences,
    fitted for Monte Carlo profiles. Fitted exponents within 0.1 of a
    threshold give ``inconclusive``. ``margin`` is the series on the horizon.
    """
    cond = str(condition).strip("()")
    if cond not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}")
    if isinstance(source, CoefficientSequence):
        prof = profile_from_coefficients(source, 2.0 if q is None else q, innovations)
    else:
        prof = source
        if q is not None and float(q) != prof.q:
            raise ValueError(f"condition requested at q={q} but profile has q={prof.q}")
    q = prof.q
    cls, p = _decay_for(cond, prof)
    ok = _rule(cond, cls, p, q)
    fitted = prof.coefficients is None and cls == "polynomial"
    margin = _margin(cond, prof)
    note = f"tail {cls}" + ("" if math.isnan(p) else f"({p:.4g})")
    if ok is None or (fitted and _near_boundary(cond, p, q)):
        return ConditionVerdict(cond, "inconclusive", margin, note)
    return ConditionVerdict(cond, "holds-at-horizon" if ok else "violated", margin, note)


# -- geometric-moment contraction --------------------------------------------------

class GMCFit(NamedTuple):
    C: float
    r: float
    residual: float
    moments: np.ndarray


def fit_gmc(model: ProcessModel, q: float, n_max: int, R: int, *, stream=None) -> GMCFit:
    """Least-squares fit of ``log E|G(xi_n) - G(xi*_n)|^q = log C + n log r``, ``n = 1..n_max``.

    ``G`` is the iterated-random-function chain itself, or the inner chain of
    a linear process with dependent innovations.
    """
    if n_max < 4:
        raise ValueError("n_max must be >= 4")
    if isinstance(model, LinearDependentInnovations):
        chain = model.inner
    elif isinstance(model, IteratedRandomFunction):
        chain = model
    else:
        raise TypeError("GMC fits apply to iterated random functions")
    chain.innovations.check_moment(q)
    w = CoupledWindow(chain, _stream(chain, stream), CouplingKind.STAR)
    idx = np.arange(-chain.memory, n_max + 1)
    eps, cpl = w.innovations(np.arange(R), idx)
    d = chain.chain(eps) - chain.chain(cpl)
    mom = np.mean(np.abs(d[:, chain.memory + 1:]) ** q, axis=0)
    n = np.arange(1, n_max + 1)
    pos = mom > 0
    if not pos.any():
        raise ValueError("difference moments vanish at every lag; model is degenerate")
    A = np.vstack([np.ones(pos.sum()), n[pos]]).T
    coef, *_ = np.linalg.lstsq(A, np.log(mom[pos]), rcond=None)
    res = float(np.sqrt(np.mean((A @ coef - np.log(mom[pos])) ** 2)))
    return GMCFit(math.exp(coef[0]), math.exp(coef[1]), res, mom)
