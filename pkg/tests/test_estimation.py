import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from finitekey.estimation import (
    KeyAccounting,
    ProtocolAbort,
    ProtocolParams,
    alpha_second_order,
    check_counts,
    ec_leakage,
    final_key_length,
    gamma_param,
    key_accounting,
    key_rate,
    p_hat,
    p_hat_binomial_approx,
    p_hat_sft,
    sacrifice_bits,
    second_order_coefficient,
    secret_fraction,
)
from finitekey.mathcore import DomainError, binary_entropy, phi_upper_tail


def params(n=500, l=500, s=2.0, **kw):
    return ProtocolParams(n=n, l=l, s=s, **kw)


# --- ProtocolParams --------------------------------------------------------

def test_eps_and_s_are_linked():
    p = ProtocolParams(n=10, l=10, s=2.0)
    assert p.eps == pytest.approx(phi_upper_tail(2.0))
    q = ProtocolParams(n=10, l=10, eps=p.eps)
    assert q.s == pytest.approx(2.0, rel=1e-9)
    r = p.replace(s=3.0)
    assert r.eps == pytest.approx(phi_upper_tail(3.0))
    assert p.replace(eps=0.01).s == pytest.approx(2.3263478740, rel=1e-9)


def test_params_defaults_and_validation():
    p = params()
    assert p.c_max == p.l and p.c_min == 0 and p.D == 1
    for bad in (dict(n=0), dict(c_min=10, c_max=5), dict(f=0.9), dict(D=-1), dict(n=2.5)):
        with pytest.raises(DomainError):
            params(**bad)
    with pytest.raises(DomainError):
        ProtocolParams(n=5, l=5)


def test_from_basis_choice_uses_documented_split():
    p = ProtocolParams.from_basis_choice(10**6, 0.1, s=10.0)
    assert p.n == math.floor(0.81 * 10**6) and p.l == math.floor(0.01 * 10**6)
    assert p.N == 10**6 and p.q == 0.1


def test_check_counts():
    p = params(n=10, l=5)
    check_counts(p, 7, 2)
    for k, c in ((7, 6), (20, 2), (1, 2), (3.5, 1)):
        with pytest.raises(DomainError):
            check_counts(p, k, c)


# --- gamma and interval estimate -----------------------------------------

def test_gamma_spot_value():
    assert gamma_param(params(100, 100, 2.0)) == pytest.approx(1 / 199)


def test_gamma_decreasing_in_l():
    vals = [gamma_param(params(1000, l, 3.0)) for l in (10**2, 10**3, 10**4)]
    assert vals[0] > vals[1] > vals[2] > 0


def test_gamma_vanishes_with_s():
    p = params(100, 100, 1e-9)
    assert gamma_param(p) < 1e-20
    assert p_hat(p, 17) == pytest.approx(17 / 100, abs=1e-9)
    assert p_hat_sft(p, 17) == pytest.approx(17 / 100, abs=1e-9)


def test_p_hat_at_zero():
    p = params(300, 200, 3.0)
    g = gamma_param(p)
    assert p_hat(p, 0) == pytest.approx(4 * g / (1 + 4 * g), rel=1e-14)


@pytest.mark.parametrize("s", [2.0, 5.0, 10.0])
def test_p_hat_solves_quadratic(s):
    p = params(500, 500, s)
    g = gamma_param(p)
    c = np.arange(0, 501)
    ph = p_hat(p, c)
    ps = c / 500
    assert np.max(np.abs((ps - ph) ** 2 - 4 * g * ph * (1 - ph))) <= 1e-12
    assert np.all(ph >= ps)


def test_p_hat_sft_monotone_and_step():
    for s in range(2, 12):
        p = params(1000, 1000, float(s))
        # monotone over the range where a key is possible
        vals = p_hat_sft(p, np.arange(0, 501))
        assert np.all(np.diff(vals) > 0)
        g = gamma_param(p)
        step = (1 / (1 + 4 * g)) * 2000 / (1000 * 1000) - 1 / 1000
        assert np.all(np.diff(vals) >= step - 1e-15)


def test_p_hat_sft_is_nonnegative():
    p = params(400, 100, 5.0)
    assert np.all(p_hat_sft(p, np.arange(0, 101)) >= 0)


def test_binomial_approx():
    p = params(10**5, 10**5, 10.0)
    assert p_hat_binomial_approx(p, 0) == 0.0
    c = 0.05 * p.l
    exact, approx = p_hat(p, c), p_hat_binomial_approx(p, c)
    ps = c / p.l
    sig = math.sqrt(p.l * ps * (1 - ps))
    # with the finite-population factor the first-order term matches to 1%
    first = ps + p.s / p.l * math.sqrt(p.n / (p.n + p.l - 1)) * sig
    assert abs(exact - first) <= 0.01 * exact
    assert first <= approx and exact <= approx


def test_interval_exact_coverage_against_scipy():
    # Exact probability that the estimate fails for fixed k, computed two ways.
    n = l = 2000
    p = params(n, l, 2.0)
    for k in (80, 200, 400):
        cs = np.arange(0, min(k, l) + 1)
        bad = (k - cs) / n > p_hat_sft(p, cs)
        ours = float(np.sum(stats.hypergeom.pmf(cs[bad], n + l, l, k)))
        c_star = cs[bad].max()
        assert ours == pytest.approx(stats.hypergeom.cdf(c_star, n + l, l, k), rel=1e-12)
        # The interval is built on a normal approximation; its exact failure
        # probability at s = 2 sits a little above eps (see the acceptance suite).
        assert p.eps < ours < 1.25 * p.eps


# --- sacrifice bits and key accounting --------------------------------------

def test_sacrifice_bits_clamp_and_monotone():
    p = params(10**4, 10**4, 9.9, D=79, c_min=100, c_max=1200)
    assert sacrifice_bits(p, 0) == sacrifice_bits(p, 100)
    cs = np.arange(0, 1201)
    a = sacrifice_bits(p, cs)
    assert a.dtype.kind == "i"
    assert np.all(np.diff(a) >= 0)
    assert np.all(a >= p.D)


def test_sacrifice_bits_dual_path():
    n = l = 2500
    s, D, c = 9.9, 79, 125
    p = params(n, l, s, D=D)
    gamma = s * s * n / (4 * l * (n + l - 1))
    x = (c + 2) / l
    ph = (x + 2 * gamma + 2 * math.sqrt(gamma * (x * (1 - x) + gamma))) / (1 + 4 * gamma)
    psft = ((n + l) * ph - (c + 2)) / n
    h = -psft * math.log2(psft) - (1 - psft) * math.log2(1 - psft)
    assert sacrifice_bits(p, c) == math.ceil(n * h) + D


def test_sacrifice_bits_saturates():
    p = params(100, 100, 10.0, D=3)
    assert p_hat_sft(p, 60) >= 0.5
    assert sacrifice_bits(p, 60) == 103
    acc = key_accounting(p, 60)
    assert acc.G == 0 and acc.no_key


def test_accounting_identity():
    p = params(2000, 2000, 3.0, D=5, c_max=240, r=40)
    for c in (0, 10, 100, 240):
        for pb in (0.0, 0.01, 0.05):
            acc = key_accounting(p, c, p_bit=pb)
            assert acc.raw_length + acc.alpha + acc.ec_bits == p.n
            assert acc.ec_bits == ec_leakage(p.n, p.f, pb)
            assert acc.G == max(acc.raw_length, 0)


def test_zero_error_channel():
    p = params(1000, 1000, 2.0, D=7)
    acc = key_accounting(p, 0, p_bit=0.0)
    assert acc.ec_bits == 0
    assert acc.G == p.n - sacrifice_bits(p, 0)


def test_abort_above_c_max():
    p = params(1000, 1000, 2.0, c_max=120)
    assert key_accounting(p, 121).aborted
    for fn in (final_key_length, key_rate, secret_fraction):
        with pytest.raises(ProtocolAbort):
            fn(p, 121)


def test_rate_and_fraction():
    p = ProtocolParams(n=810, l=10, s=2.0, N=1000, r=20)
    acc = key_accounting(p, 0, p_bit=0.0)
    assert isinstance(acc, KeyAccounting)
    assert acc.R == pytest.approx(max((acc.G - 20) / 810, 0.0))
    assert acc.F == pytest.approx(max((acc.G - 20) / 1000, 0.0))
    assert acc.F <= acc.R * p.n / p.N
    big = ProtocolParams(n=8100, l=900, s=2.0, N=10**4, r=20)
    acc = key_accounting(big, 0, p_bit=0.0)
    assert acc.G > 20
    assert acc.R == pytest.approx((acc.G - 20) / 8100)
    assert acc.F == pytest.approx((acc.G - 20) / 10**4)
    p = big
    q = p.replace(r=acc.G)
    assert key_rate(q, 0, 0.0) == 0.0


def test_asymptotic_rate_limit():
    n = l = 10**10
    p = params(n, l, 9.9)
    R = key_accounting(p, 0.05 * l, p_bit=0.05).G / n
    assert R == pytest.approx(1 - 2.1 * binary_entropy(0.05), abs=1e-3)
    assert 1 - 2.1 * binary_entropy(0.05) == pytest.approx(0.3986, abs=1e-3)


@given(st.integers(1, 3000), st.integers(1, 3000), st.floats(0.5, 12.0), st.data())
def test_alpha_between_D_and_n_plus_D(n, l, s, data):
    D = data.draw(st.integers(1, 80))
    c = data.draw(st.integers(0, l))
    p = params(n, l, s, D=D)
    a = sacrifice_bits(p, c)
    assert D <= a <= n + D


# --- second-order expansion -------------------------------------------------

def test_second_order_values():
    assert alpha_second_order(10**6, 1.0, 0.5 - 1e-15, 0.01) == pytest.approx(10**6, rel=1e-9)
    p, t, s = 0.05, 1.0, 10.0
    direct = math.log2(0.95 / 0.05) * math.sqrt(0.05 * 0.95 * 2 / 4) * 10
    assert second_order_coefficient(p, t, s) == pytest.approx(direct, rel=1e-14)
    with pytest.raises(DomainError):
        second_order_coefficient(0.6, 1.0, 2.0)
    with pytest.raises(DomainError):
        second_order_coefficient(0.1, 0.0, 2.0)


def test_exact_alpha_second_order_limit_is_twice_g_t():
    # Expanding p_hat_sft gives the sqrt(n) coefficient h'(p) s sqrt(p(1-p)(1+t)/t),
    # which is exactly 2 g_t(p). The acceptance suite checks convergence to g_t.
    p_smp, t, s = 0.05, 1.0, 10.0
    g = second_order_coefficient(p_smp, t, s)
    ratios = []
    for n in (10**6, 10**8, 10**10):
        l = int(t * n)
        par = params(n, l, s, D=1, c_min=p_smp * l)
        ratio = (sacrifice_bits(par, p_smp * l) - n * binary_entropy(p_smp)) / math.sqrt(n) / g
        ratios.append(ratio)
    assert abs(ratios[-1] - 2.0) < 1e-3
    assert abs(ratios[0] - 2) > abs(ratios[1] - 2) > abs(ratios[2] - 2)
