import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgapprox import (
    CoefficientSequence,
    IndexedInnovationStream,
    InnovationSpec,
    IteratedRandomFunction,
    Kernel,
    LinearIID,
    LipschitzTransform,
    build_profiles,
    check_condition,
    estimate_alpha,
    estimate_beta,
    estimate_omega,
    fit_gmc,
    profile_from_coefficients,
    theta_sandwich,
)
from mgapprox.dependence import (
    TailModel,
    estimate_lq_norm,
    fit_tail,
    isotonic_nonincreasing,
    lq_norm_from_samples,
    profile_from_theta,
    tail_sums,
)

from conftest import z_ok

R = 10_000
SQ2 = math.sqrt(2)


def test_constant_sampler():
    e = estimate_lq_norm(lambda r: np.full(r, -2.5), 3.0, 200)
    assert (e.estimate, e.se) == (2.5, 0.0)


@pytest.mark.parametrize("q,target", [(2.0, 1.0), (4.0, 3 ** 0.25)])
def test_normal_sampler(q, target):
    z = IndexedInnovationStream(8).take(np.arange(10**6))
    e = estimate_lq_norm(z, q, 10**6)
    assert z_ok(e.estimate, target, e.se)


def test_replicate_floor():
    with pytest.raises(ValueError):
        estimate_lq_norm(np.zeros(50), 2.0, 50)


def test_se_halves_when_replicates_quadruple():
    z = IndexedInnovationStream(3).take(np.arange(40_000))
    s1 = lq_norm_from_samples(z[:10_000], 2.0).se
    s4 = lq_norm_from_samples(z, 2.0).se
    assert s4 / s1 == pytest.approx(0.5, rel=0.1)


def test_beta_linear_geometric(geometric_model):
    e = estimate_beta(geometric_model, 2.0, 2, R)
    assert z_ok(e.estimate, 0.25 * SQ2, e.se)


def test_beta_dyadic_zero_lag():
    m = LinearIID(CoefficientSequence.dyadic_sparse(1.5, lag=64))
    e = estimate_beta(m, 2.0, 3, 1000)
    assert e.estimate == 0.0


def test_beta_star_ar1():
    m = IteratedRandomFunction(Kernel.AR1, 0.5)
    e = estimate_beta(m, 2.0, 4, R, "star")
    assert z_ok(e.estimate, 0.0625 * math.sqrt(8 / 3), e.se)


def test_alpha_linear_explicit():
    m = LinearIID(CoefficientSequence.explicit([1.0, 0.5, 0.25]))
    e = estimate_alpha(m, 2.0, 1, R, 16)
    assert z_ok(e.estimate, 0.25 * SQ2, e.se)


def test_alpha_ar1():
    m = IteratedRandomFunction(Kernel.AR1, 0.5)
    e = estimate_alpha(m, 2.0, 0, R, 64)
    assert z_ok(e.estimate, 0.5 * SQ2, e.se)


def test_omega_linear_and_beyond_lag():
    m = LinearIID(CoefficientSequence.geometric(0.5, lag=6))
    e = estimate_omega(m, 2.0, 3, R, 16)
    assert z_ok(e.estimate, 0.125 * SQ2, e.se)
    assert estimate_omega(m, 2.0, 7, 1000, 16).estimate == 0.0


def test_omega_transform_below_lipschitz_bound():
    m = LipschitzTransform(LinearIID(CoefficientSequence.explicit([1.0, 0.5])))
    e = estimate_omega(m, 2.0, 1, 4000, 64)
    assert e.estimate <= 0.5 * SQ2 + 3 * e.se


def test_sandwich_brackets():
    br = theta_sandwich(0.5 * SQ2, 10.0)
    assert br.lower <= 0.5 <= br.upper
    br = theta_sandwich(0.0, 1.0)
    assert br.lower == br.upper == 0.0
    m = IteratedRandomFunction(Kernel.AR1, 0.5)
    w = estimate_omega(m, 2.0, 2, R, 64)
    a = estimate_alpha(m, 2.0, 1, R, 64)
    assert theta_sandwich(w, a).contains(0.25)


def test_sandwich_rejects_mixed_q():
    m = IteratedRandomFunction(Kernel.AR1, 0.5)
    with pytest.raises(ValueError):
        theta_sandwich(estimate_omega(m, 2.0, 1, 200, 8), estimate_alpha(m, 4.0, 0, 200, 8))


def test_tail_sums_geometric():
    p = profile_from_theta(2.0 ** -np.arange(12), 2.0)
    for m in (0, 1, 5, 20):
        ts = tail_sums(p, m)
        assert ts.Theta == pytest.approx(2.0 ** (1 - m), rel=1e-6)
    assert tail_sums(p, 3).Lambda == pytest.approx(2 - 2.0**-3)
    assert tail_sums(p, -1).Lambda == 0.0


def test_tail_sums_zero():
    p = profile_from_theta(np.zeros(8), 2.0)
    ts = tail_sums(p, 0)
    assert ts.Theta == 0.0 and ts.Lambda == 0.0


def test_dyadic_theta_sum():
    c = CoefficientSequence.dyadic_sparse(1.5, lag=1 << 16)
    p = profile_from_coefficients(c, 2.0)
    # zeta(3/2) = 2.612...
    assert tail_sums(p, 0).Theta == pytest.approx(2.6124, abs=2e-3)


def test_horizon_limited_without_tail():
    p = profile_from_theta([1.0, 0.5, 0.25], 2.0, tail="none")
    assert tail_sums(p, 0).horizon_limited


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=30))
def test_isotonic_is_nonincreasing(values):
    v = isotonic_nonincreasing(values)
    assert np.all(np.diff(v) <= 1e-9)
    assert v.sum() == pytest.approx(sum(values), abs=1e-6)


def test_fit_tail_recovers_decays():
    lags = np.arange(40)
    g = fit_tail(lags, 3 * 0.7**lags)
    assert g.kind == "geometric" and g.rate == pytest.approx(0.7)
    p = fit_tail(lags, 2 * (1.0 + lags) ** -1.5)
    assert p.kind == "polynomial" and p.exponent == pytest.approx(1.5)
    assert TailModel("geometric", 1.0, rate=0.5).power_sum(1) == pytest.approx(1.0)


def test_condition_two_geometric_margin():
    v = check_condition(CoefficientSequence.geometric(0.5, lag=40), "(2)", 2.0)
    assert v.verdict == "holds-at-horizon"
    assert v.margin == pytest.approx(2.0, rel=1e-9)


def test_condition_two_long_memory():
    v = check_condition(CoefficientSequence.polynomial(0.8, lag=1024), "2", 2.0)
    assert v.verdict == "violated"


def test_condition_31_pair():
    assert check_condition(CoefficientSequence.polynomial(2.0), "31").verdict == "violated"
    assert check_condition(CoefficientSequence.geometric(0.5), "31").verdict == "holds-at-horizon"


def test_condition_dyadic_sparse_summable():
    v = check_condition(CoefficientSequence.dyadic_sparse(1.5, lag=1 << 16), "2", 2.0)
    assert v.verdict == "holds-at-horizon"
    assert v.margin == pytest.approx(2.6124, abs=2e-3)


def test_condition_q_mismatch():
    p = profile_from_coefficients(CoefficientSequence.geometric(0.5), 4.0)
    with pytest.raises(ValueError):
        check_condition(p, "2", 2.0)
    with pytest.raises(ValueError):
        check_condition(p, "77")


def test_fitted_exponent_near_threshold_is_inconclusive():
    p = profile_from_theta((1.0 + np.arange(200)) ** -1.05, 2.0)
    assert check_condition(p, "2").verdict == "inconclusive"


@pytest.mark.parametrize("rho,lo,hi", [(0.5, 0.20, 0.30), (0.9, 0.72, 0.90)])
def test_gmc_ar1(rho, lo, hi):
    fit = fit_gmc(IteratedRandomFunction(Kernel.AR1, rho), 2.0, 10, 4000)
    assert lo <= fit.r <= hi


def test_gmc_sine_below_bound():
    assert fit_gmc(IteratedRandomFunction(Kernel.SINE, 0.5), 2.0, 10, 4000).r <= 0.30


def test_gmc_rejects_linear(geometric_model):
    with pytest.raises(TypeError):
        fit_gmc(geometric_model, 2.0, 8, 100)


def test_profile_shares_samples_across_q(geometric_model):
    prof = build_profiles(geometric_model, [2.0, 4.0], 4, 2000, 16)
    assert set(prof) == {2.0, 4.0}
    assert prof[2.0].provenance == "theta-exact"
    b2 = prof[2.0].measures
    rows = prof[4.0].rows()
    assert rows[0][:3] == (0, "theta-exact", 4.0)
    assert len(b2) == 5


def test_profile_rejects_unsupported_q():
    m = LinearIID(CoefficientSequence.explicit([1.0]), InnovationSpec("student-t", 5.0))
    with pytest.raises(ValueError):
        build_profiles(m, [6.0], 2, 200, 4)
