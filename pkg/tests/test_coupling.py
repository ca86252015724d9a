import numpy as np
import pytest

from mgapprox import (
    CoefficientSequence,
    CoupledWindow,
    IndexedInnovationStream,
    IteratedRandomFunction,
    Kernel,
    LinearIID,
    LipschitzTransform,
    coupled_g_values,
    coupled_h_values,
)
from mgapprox.coupling import coupled_h_difference, doubling_diagnostic

ROWS = np.arange(400)


def _eps(stream, rows, idx):
    return stream.block(rows, idx)


def test_tilde_linear_difference_exact(stream):
    c = CoefficientSequence.explicit([1.0, -0.7, 0.3, 0.2])
    w = CoupledWindow(LinearIID(c), stream, "tilde")
    for k in range(6):
        g0, g1 = coupled_g_values(w, k, ROWS)
        d0 = _eps(stream, ROWS, [0])[:, 0] - _eps(stream.prime(), ROWS, [0])[:, 0]
        a_k = c.coefficient(k)
        assert np.allclose(g0 - g1, a_k * d0, atol=1e-14)


def test_star_linear_difference_matches_convolution(stream):
    a = [1.0, 0.5, -0.25, 0.125]
    w = CoupledWindow(LinearIID(CoefficientSequence.explicit(a)), stream, "star")
    k = 2
    g0, g1 = coupled_g_values(w, k, ROWS)
    idx = np.arange(k - 3, 1)  # indices k-j <= 0 for j >= k
    e = _eps(stream, ROWS, idx)
    ep = _eps(stream.prime(), ROWS, idx)
    oracle = sum(a[j] * (e[:, idx == k - j][:, 0] - ep[:, idx == k - j][:, 0]) for j in range(k, 4))
    assert np.allclose(g0 - g1, oracle, atol=1e-14)


@pytest.mark.parametrize("model", [
    LinearIID(CoefficientSequence.geometric(0.5, lag=20)),
    IteratedRandomFunction(Kernel.SINE, 0.5),
    LipschitzTransform(LinearIID(CoefficientSequence.explicit([1.0, 0.5]))),
])
@pytest.mark.parametrize("kind", ["tilde", "star"])
def test_identical_streams_give_zero_difference(model, kind):
    st = IndexedInnovationStream(5)
    w = CoupledWindow(model, st, kind, prime=st)
    for k in (0, 3):
        g0, g1 = coupled_g_values(w, k, ROWS)
        assert np.array_equal(g0, g1)
        h0, h1 = coupled_h_values(w, k, 2, 8, ROWS)
        assert np.array_equal(h0.value, h1.value)


def test_tilde_agrees_except_at_zero(stream):
    w = CoupledWindow(LinearIID(CoefficientSequence.explicit([1.0])), stream, "tilde")
    e, c = w.innovations(ROWS, np.arange(-3, 4))
    diff = e != c
    assert not diff[:, [0, 1, 2, 4, 5, 6]].any() and diff[:, 3].all()
    w = w.with_kind("star")
    e, c = w.innovations(ROWS, np.arange(-3, 4))
    assert (e != c)[:, :4].all() and not (e != c)[:, 4:].any()


def test_h_difference_linear_exact_any_inner(stream):
    a = CoefficientSequence.geometric(0.5, lag=30)
    w = CoupledWindow(LinearIID(a), stream, "tilde")
    d0 = _eps(stream, ROWS, [0])[:, 0] - _eps(stream.prime(), ROWS, [0])[:, 0]
    for n in (1, 3):
        for inner in (2, 17):
            d, _ = coupled_h_difference(w, 0, n, inner, ROWS)
            assert np.allclose(d, 0.5**n * d0, atol=1e-13)


def test_star_h_linear_matches_closed_form(stream):
    a = [1.0, 0.5, 0.25, -0.5]
    w = CoupledWindow(LinearIID(CoefficientSequence.explicit(a)), stream, "star")
    k, m = 1, 1
    d, _ = coupled_h_difference(w, k, m, 4, ROWS)
    idx = np.arange(-4, 1)
    e = _eps(stream, ROWS, idx) - _eps(stream.prime(), ROWS, idx)
    # h_m(xi_k) keeps a_j eps_{k+m-j} with k+m-j <= 0
    oracle = sum(a[j] * e[:, idx == k + m - j][:, 0] for j in range(k + m, 4))
    assert np.allclose(d, oracle, atol=1e-13)


def test_ar1_one_step_predictor(stream):
    model = IteratedRandomFunction(Kernel.AR1, 0.5)
    w = CoupledWindow(model, stream, "tilde")
    h0, h1 = coupled_h_values(w, 0, 1, 256, ROWS[:50])
    d0 = _eps(stream, ROWS[:50], [0])[:, 0] - _eps(stream.prime(), ROWS[:50], [0])[:, 0]
    se = np.hypot(h0.inner_se, h1.inner_se)
    # eta_0 - eta~_0 = eps_0 - eps'_0
    assert np.all(np.abs((h0.value - h1.value) - 0.5 * d0) <= 3 * se + 1e-12)


def test_inner_doubling_is_consistent(stream):
    model = IteratedRandomFunction(Kernel.SINE, 0.5)
    w = CoupledWindow(model, stream, "tilde")
    d1, s1 = coupled_h_difference(w, 0, 1, 64, ROWS[:100])
    d2, s2 = coupled_h_difference(w, 0, 1, 128, ROWS[:100])
    # common futures: the doubled estimate reuses the first 64 draws
    assert np.mean(np.abs(d1 - d2) <= 3 * s1 + 1e-12) > 0.97
    dd = doubling_diagnostic(w, 0, 1, 64, 2.0, ROWS)
    assert dd.accepted and dd.relative_change < 0.1


def test_inner_se_nonnegative(stream):
    w = CoupledWindow(LipschitzTransform(LinearIID(CoefficientSequence.explicit([1, .5]))),
                      stream, "tilde")
    h0, h1 = coupled_h_values(w, 0, 1, 16, ROWS[:20])
    assert h0.inner == 16 and np.all(h0.inner_se >= 0) and np.all(h1.inner_se >= 0)


def test_jobs_do_not_change_values(stream):
    w = CoupledWindow(IteratedRandomFunction(Kernel.SINE, 0.5), stream, "star")
    a = coupled_h_difference(w, 2, 2, 8, np.arange(3000), jobs=1)
    b = coupled_h_difference(w, 2, 2, 8, np.arange(3000), jobs=4)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_invalid_arguments(stream):
    w = CoupledWindow(LinearIID(CoefficientSequence.explicit([1.0])), stream)
    with pytest.raises(ValueError):
        coupled_g_values(w, -1)
    with pytest.raises(ValueError):
        coupled_h_values(w, 0, 0, 8)
    with pytest.raises(ValueError):
        coupled_h_values(w, 0, 1, 1)
