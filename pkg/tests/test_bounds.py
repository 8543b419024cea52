import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finitekey.bounds import (
    BOUND_METHODS,
    OracleSizeError,
    SamplingTable,
    beta_param,
    correctness_bound,
    delta_param,
    evaluate_bound,
    g_exponent,
    gaussian_integral_i2,
    p_ph_oracle,
    prop1_bound,
    prop2_bound,
    s_av,
    s_av_profile,
    s_pa,
    thm2_bound,
    thm3_bound,
    trace_distance_bound,
    xi_min,
    xi_params,
)
from finitekey.estimation import ProtocolParams, gamma_param, p_hat_sft, sacrifice_bits
from finitekey.mathcore import DomainError, PreconditionError, stirling_mu


def params(n=40, l=40, s=2.0, **kw):
    return ProtocolParams(n=n, l=l, s=s, **kw)


def _h(x):
    if x <= 0 or x >= 1:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def s_av_reference(p, k):
    """Direct sum with exact binomial coefficients."""
    n, l = p.n, p.l
    total = 0.0
    denom = math.comb(n + l, k)
    for c in range(0, min(k, int(p.c_max)) + 1):
        if k - c > n:
            continue
        prob = math.comb(l, c) * math.comb(n, k - c) / denom
        g = n * _h((k - c) / n) - int(sacrifice_bits(p, c))
        total += prob * 2.0 ** (min(g, 0.0) + 1)
    return total


# --- exact oracle -----------------------------------------------------------

@pytest.mark.parametrize("n,l,s,D,c_max", [(20, 20, 2.0, 1, 20), (30, 12, 1.5, 3, 6),
                                           (40, 40, 3.0, 2, 10)])
def test_s_av_profile_matches_direct_sum(n, l, s, D, c_max):
    p = params(n, l, s, D=D, c_max=c_max)
    prof = s_av_profile(p)
    ref = np.array([s_av_reference(p, k) for k in range(n + l + 1)])
    np.testing.assert_allclose(prof, ref, rtol=1e-11, atol=1e-300)
    for k in (0, 3, n, n + l):
        assert s_av(p, k) == pytest.approx(ref[k], rel=1e-11)


def test_oracle_trivial_cases():
    # k = 0 leaves g = -alpha(0); a huge D makes every S_pa equal 2^{1-alpha}.
    p = params(10, 10, 2.0, D=1)
    assert s_pa(p, 0, 0) == 2.0 ** (1 - sacrifice_bits(p, 0))
    assert s_av(p, 0) == s_pa(p, 0, 0)
    p_big = params(10, 10, 2.0, D=200)
    val, k = p_ph_oracle(p_big)
    assert val == pytest.approx(2.0 ** (-199), rel=1e-12)
    assert 0 <= k <= 20


def test_s_pa_range_and_cap():
    p = params(60, 60, 2.0, D=1)
    for k in range(0, 121, 7):
        for c in range(0, min(k, 60) + 1):
            if k - c > 60:
                continue
            v = s_pa(p, k, c)
            assert 0 < v <= 2
            assert s_pa(p, k, c, cap=True) == min(v, 1.0)
            assert g_exponent(p, k, c) == pytest.approx(
                60 * _h((k - c) / 60) - sacrifice_bits(p, c))


def test_oracle_decreases_with_D():
    vals = [p_ph_oracle(params(200, 200, 2.5, D=D, c_max=24))[0] for D in (1, 2, 4, 8)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_oracle_cap_never_larger():
    p = params(200, 200, 2.5, D=1, c_max=24)
    assert p_ph_oracle(p, cap=True)[0] <= p_ph_oracle(p)[0]


def test_oracle_size_guard():
    with pytest.raises(OracleSizeError):
        p_ph_oracle(params(6000, 6000, 2.0))
    with pytest.raises(OracleSizeError):
        SamplingTable(100, 100, 10, max_size=150)


def test_table_reuse_across_s_and_D():
    tab = SamplingTable(150, 100, 12)
    for s, D in ((2.0, 1), (3.0, 5)):
        p = params(150, 100, s, D=D, c_max=12)
        np.testing.assert_array_equal(tab.s_av(p), s_av_profile(p))
    with pytest.raises(DomainError):
        tab.s_av(params(150, 100, 2.0, c_max=20))


# --- closed-form bounds -----------------------------------------------------

def test_prop1_value():
    p = params(1000, 1000, 3.0, D=4)
    assert prop1_bound(p).p_ph_bound == pytest.approx(p.eps + 2 ** -3, rel=1e-15)
    assert prop1_bound(p).rigor == "approximation"


def test_prop2_value_and_preconditions():
    p = params(1000, 800, 3.0, D=2, c_max=90)
    rep = prop2_bound(p)
    mu = stirling_mu(1000)
    expect = math.sqrt((9 + 2 * math.pi) / 2) * math.sqrt(1.8) * math.exp(mu) * p.eps + 0.5
    assert rep.p_ph_bound == pytest.approx(expect, rel=1e-14)
    assert rep.feasible and rep.rigor == "exact"
    assert rep.trace_distance_bound == pytest.approx(2 * math.sqrt(2) * math.sqrt(expect))
    bad = p.replace(c_max=200)
    with pytest.raises(PreconditionError) as exc:
        prop2_bound(bad)
    assert "c_max <= 0.12 l" in str(exc.value)
    soft = prop2_bound(bad, strict=False)
    assert math.isnan(soft.p_ph_bound) and soft.failed == ("c_max <= 0.12 l",)


def test_prop2_is_at_least_prop1_shape():
    for s in (2.0, 4.0, 8.0):
        p = params(5000, 5000, s, D=1, c_max=600)
        assert prop2_bound(p).p_ph_bound > prop1_bound(p).p_ph_bound


def _thm_params():
    return params(10**4, 10**4, 3.0, D=1, c_min=400, c_max=1200)


def test_beta_xi_delta_by_hand():
    p = _thm_params()
    g = gamma_param(p)
    ps = p_hat_sft(p, 1200)
    beta = 2e4 / (1e4 * (1 + 4 * g)) * math.log2((1 - ps) / ps)
    assert beta_param(p) == pytest.approx(beta, rel=1e-13)
    k = 1e4 * 400 / 1e4
    var = k * (2e4 - k) * 1e4 * 1e4 / (2e4**2 * (2e4 - 1))
    xi = math.log(2) * beta * math.sqrt(var) / 3.0
    assert xi_min(p) == pytest.approx(xi, rel=1e-13)
    assert delta_param(p) == pytest.approx(math.sqrt(1 + 2 * math.pi / 9) / (xi - 1), rel=1e-12)
    fn, xm = xi_params(p)
    assert fn(k) == pytest.approx(xm)


def test_thm2_value():
    p = _thm_params()
    rep = thm2_bound(p)
    assert rep.feasible
    assert rep.p_ph_bound == pytest.approx((1 + delta_param(p)) * p.eps, rel=1e-14)


def test_thm3_value():
    p = _thm_params()
    rep = thm3_bound(p)
    assert rep.feasible
    mu = stirling_mu(p.n)
    nu = 1 / (12 * p.l) + 1 / (2 * (p.n + p.l - 1))
    first = math.sqrt((9 + 2 * math.pi) / 2) * math.sqrt(2) * math.exp(mu)
    second = delta_param(p) * math.exp(mu + nu) / math.sqrt(1 - 3 / math.sqrt(400))
    assert rep.p_ph_bound == pytest.approx(first * p.eps + (second + p.eps) * p.eps, rel=1e-13)
    assert rep.p_ph_bound > first * p.eps


@pytest.mark.parametrize("field,value,name", [
    ("D", 2, "D = 1"),
    ("c_min", 5, "s^2 <= c_min"),
    ("c_max", 1500, "c_max <= 0.12 l"),
])
def test_thm3_names_failed_hypothesis(field, value, name):
    p = _thm_params().replace(**{field: value})
    with pytest.raises(PreconditionError) as exc:
        thm3_bound(p)
    assert name in str(exc.value)
    assert name in thm3_bound(p, strict=False).failed


def test_thm2_warns_outside_hypotheses():
    p = _thm_params().replace(D=3)
    with pytest.warns(RuntimeWarning, match="D = 1"):
        rep = thm2_bound(p)
    assert not rep.feasible
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        evaluate_bound("thm2", p)


def test_evaluate_bound_dispatch():
    p = _thm_params()
    for m in BOUND_METHODS:
        assert evaluate_bound(m, p).method == m
    with pytest.raises(DomainError):
        evaluate_bound("nope", p)


def test_vacuous_flag():
    p = params(100, 100, 0.5, D=1, c_max=10)
    assert prop1_bound(p).vacuous


@given(st.floats(1.01, 6.0), st.floats(0.5, 10.0))
def test_gaussian_integral_matches_quadrature(xi, s):
    # substitute x = u - s so the integrand peaks at the left end
    with mpmath.workdps(40):
        f = lambda u: mpmath.exp(-(u - s) ** 2 / 2 - s * u * xi)
        ref = mpmath.quad(f, [0, 1 / (s * xi), 1, mpmath.inf]) / mpmath.sqrt(2 * mpmath.pi)
    assert gaussian_integral_i2(xi, s) == pytest.approx(float(ref), rel=1e-9, abs=1e-300)


def test_trace_distance_and_correctness():
    assert trace_distance_bound(0.125) == pytest.approx(1.0)
    extra = trace_distance_bound(0.0, surjective=False, alpha_probs=[(0.5, 2), (0.5, 4)])
    assert extra == pytest.approx(0.5 * 0.5 + 0.5 * 0.25)
    with pytest.raises(DomainError):
        trace_distance_bound(-1)
    with pytest.raises(DomainError):
        trace_distance_bound(0.1, surjective=False)
    assert correctness_bound(10) == 2.0 ** -10
    with pytest.raises(DomainError):
        correctness_bound(-1)
