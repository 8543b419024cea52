"""Special functions and hypergeometric tail machinery.

Everything here is evaluated in double precision. Logarithms of binomial
coefficients never go through factorial tables: the hypergeometric mass
function is assembled from Loader's saddle-point decomposition
(``stirlerr`` and ``bd0``), which stays accurate for populations of
several million.

Entropies are in bits. ``phi_upper_tail`` is the Gaussian upper tail
``Phi(x) = int_x^inf exp(-t^2/2) dt / sqrt(2 pi)``, which is the tail
convention used throughout the package (``Phi(0) = 1/2``, decreasing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)
LOG_2PI = math.log(2.0 * math.pi)

__all__ = [
    "LN2",
    "DomainError",
    "PreconditionError",
    "HypergeomCtx",
    "binary_entropy",
    "binary_entropy_d1",
    "binary_entropy_deriv",
    "binary_entropy_d2",
    "binary_entropy_d3",
    "phi_upper_tail",
    "log_phi_upper_tail",
    "phi_inverse",
    "phi_bounds",
    "phi_bounds_scaled",
    "stirlerr",
    "hypergeom_logpmf",
    "hypergeom_logpmf_table",
    "hypergeom_pmf",
    "hypergeom_lower_tail",
    "hypergeom_moments",
    "hypergeom_mean_var",
    "stirling_mu",
    "entropy_gap",
    "tail_bound_stirling",
    "tail_bound_gauss",
    "tail_bound_chvatal",
    "exp_s_squared_check",
    "exp_s_squared_threshold",
    "logsumexp",
]


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a function."""


class PreconditionError(ValueError):
    """Raised when the hypotheses of an inequality are not met.

    Attributes
    ----------
    conditions : tuple of str
        Human-readable names of every violated condition.
    """

    def __init__(self, conditions):
        if isinstance(conditions, str):
            conditions = (conditions,)
        self.conditions = tuple(conditions)
        super().__init__("violated: " + "; ".join(self.conditions))


def _require(checks):
    failed = [name for name, ok in checks if not ok]
    if failed:
        raise PreconditionError(failed)


# ---------------------------------------------------------------------------
# Binary entropy and derivatives
# ---------------------------------------------------------------------------

def _as_unit_interval(x, open_interval):
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)):
        raise DomainError("binary entropy family is undefined for NaN")
    if open_interval:
        bad = (arr <= 0.0) | (arr >= 1.0)
    else:
        bad = (arr < 0.0) | (arr > 1.0)
    if np.any(bad):
        raise DomainError("argument outside the unit interval: %r" % (arr[bad].flat[0],))
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def binary_entropy(x):
    """Binary entropy ``h(x) = -x log2 x - (1-x) log2 (1-x)``.

    Parameters
    ----------
    x : float or array_like
        Values in ``[0, 1]``. ``h(0) = h(1) = 0``.

    Returns
    -------
    float or ndarray
    """
    arr = _as_unit_interval(x, open_interval=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(arr > 0.0, arr * np.log2(np.where(arr > 0.0, arr, 1.0)), 0.0)
        b1 = 1.0 - arr
        b = np.where(b1 > 0.0, b1 * np.log2(np.where(b1 > 0.0, b1, 1.0)), 0.0)
    return _out(-(a + b), x)


def binary_entropy_d1(x):
    """First derivative ``h'(x) = log2((1-x)/x)`` on ``(0, 1)``."""
    arr = _as_unit_interval(x, open_interval=True)
    return _out((np.log1p(-arr) - np.log(arr)) / LN2, x)


def binary_entropy_deriv(x):
    """``h'(x)``; alias of :func:`binary_entropy_d1` (``h''`` is :func:`binary_entropy_d2`)."""
    return binary_entropy_d1(x)


def binary_entropy_d2(x):
    """Second derivative ``h''(x) = -1 / (ln 2 * x (1-x))`` on ``(0, 1)``."""
    arr = _as_unit_interval(x, open_interval=True)
    return _out(-1.0 / (LN2 * arr * (1.0 - arr)), x)


def binary_entropy_d3(x):
    """Third derivative ``h'''(x) = (1 - 2x) / (ln 2 * x^2 (1-x)^2)``."""
    arr = _as_unit_interval(x, open_interval=True)
    return _out((1.0 - 2.0 * arr) / (LN2 * arr**2 * (1.0 - arr) ** 2), x)


# ---------------------------------------------------------------------------
# Gaussian upper tail
# ---------------------------------------------------------------------------

_CF_SWITCH = 5.0


def _mills_ratio(x):
    # Phi(x) / phi(x) by backward evaluation of the Laplace continued fraction
    # x + 1/(x + 2/(x + 3/(x + ...))). Used only for x >= 5, where 120 terms
    # are far past convergence in double precision.
    t = x
    for k in range(120, 0, -1):
        t = x + k / t
    return 1.0 / t


def log_phi_upper_tail(x):
    """Natural log of the Gaussian upper tail, finite for every real ``x``.

    For ``x < 5`` this is ``log(erfc(x / sqrt 2) / 2)``; beyond that it uses
    the continued fraction for the Mills ratio, so values such as
    ``log Phi(60)`` that would underflow as a plain float remain accurate.
    """
    x = float(x)
    if math.isnan(x):
        raise DomainError("Phi is undefined for NaN")
    if x < _CF_SWITCH:
        return math.log(0.5 * math.erfc(x / math.sqrt(2.0)))
    return -0.5 * x * x - 0.5 * LOG_2PI + math.log(_mills_ratio(x))


def phi_upper_tail(x):
    """Gaussian upper tail ``Phi(x)``; relative accuracy ~1e-15 up to ``x = 37``.

    Past ``x ~ 38.5`` the value is below the smallest double and the result
    degrades gracefully to subnormals and then zero; use
    :func:`log_phi_upper_tail` there.
    """
    x = float(x)
    if math.isnan(x):
        raise DomainError("Phi is undefined for NaN")
    if x < _CF_SWITCH:
        return 0.5 * math.erfc(x / math.sqrt(2.0))
    return math.exp(log_phi_upper_tail(x))


def phi_inverse(eps):
    """Return ``s`` with ``Phi(s) = eps`` for ``eps`` in ``(0, 1/2)``.

    Bisection on ``log Phi`` brackets the root and Newton steps polish it to
    a relative tolerance of 1e-12. Works for ``eps`` as small as the
    smallest positive double.
    """
    eps = float(eps)
    if not (0.0 < eps < 0.5):
        raise DomainError("phi_inverse needs 0 < eps < 1/2, got %r" % eps)
    target = math.log(eps)
    lo, hi = 0.0, math.sqrt(-2.0 * target) + 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if log_phi_upper_tail(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-6 * max(1.0, mid):
            break
    s = 0.5 * (lo + hi)
    for _ in range(50):
        # d/ds log Phi(s) = -phi(s)/Phi(s)
        lphi = log_phi_upper_tail(s)
        dens = math.exp(-0.5 * s * s - 0.5 * LOG_2PI - lphi)
        step = (lphi - target) / dens
        s_new = min(max(s + step, lo), hi)
        if abs(s_new - s) <= 1e-13 * max(1.0, abs(s)):
            s = s_new
            break
        s = s_new
    return s


def phi_bounds(x):
    """Elementary bounds ``(lower, upper)`` enclosing ``Phi(x)`` for ``x > 0``.

    ``lower = e^{-x^2/2} / sqrt(2 pi (x^2 + 2 pi))`` and
    ``upper = e^{-x^2/2} / (x sqrt(2 pi))``. Both are the Mills-ratio bounds
    ``1/sqrt(x^2 + 2 pi) <= Phi(x)/phi(x) <= 1/x``. Multiplying both sides by
    ``2 sqrt(pi)`` gives the pair ``sqrt(2/(x^2 + 2 pi)) e^{-x^2/2}`` and
    ``sqrt(2)/x e^{-x^2/2}``; only the upper member of that scaled pair is
    still a bound on ``Phi``, see :func:`phi_bounds_scaled`.
    """
    x = float(x)
    if not x > 0.0:
        raise DomainError("phi_bounds needs x > 0")
    g = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return g / math.sqrt(x * x + 2.0 * math.pi), g / x


def phi_bounds_scaled(x):
    """The pair ``(sqrt(2/(x^2+2 pi)) e^{-x^2/2}, sqrt(2)/x e^{-x^2/2})``.

    This is :func:`phi_bounds` times ``2 sqrt(pi)``. The upper value bounds
    ``Phi(x)``; the lower value exceeds ``Phi(x)`` for every ``x > 0`` and is
    kept only so that the key-length constant built from it can be audited.
    """
    lo, hi = phi_bounds(x)
    k = 2.0 * math.sqrt(math.pi)
    return k * lo, k * hi


# ---------------------------------------------------------------------------
# Hypergeometric mass function (Loader's saddle-point form)
# ---------------------------------------------------------------------------

_SERIES = (1.0 / 12, 1.0 / 360, 1.0 / 1260, 1.0 / 1680, 1.0 / 1188)
_STIRLERR_SMALL = np.array(
    [math.lgamma(k + 1.0) - (k + 0.5) * math.log(k) + k - 0.5 * LOG_2PI if k else 0.0
     for k in range(16)]
)


def stirlerr(x):
    """Stirling remainder ``log(x!) - [(x + 1/2) log x - x + log sqrt(2 pi)]``.

    Integer arguments only (the mass function never needs anything else).
    ``stirlerr(0)`` is defined as 0 for convenience; callers treat the
    endpoints separately.
    """
    arr = np.asarray(x, dtype=float)
    out = np.empty_like(arr)
    small = arr <= 15
    if np.any(small):
        idx = arr[small].astype(np.int64)
        out[small] = _STIRLERR_SMALL[idx]
    big = ~small
    if np.any(big):
        v = arr[big]
        v2 = v * v
        s0, s1, s2, s3, s4 = _SERIES
        out[big] = (s0 - (s1 - (s2 - (s3 - s4 / v2) / v2) / v2) / v2) / v
    return _out(out, x)


def _bd0(x, npr):
    # x log(x/np) + np - x, computed without cancellation near x = np.
    x = np.asarray(x, dtype=float)
    npr = np.asarray(npr, dtype=float)
    diff = x - npr
    tot = x + npr
    near = np.abs(diff) < 0.1 * tot
    out = np.empty(np.broadcast(x, npr).shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        far_val = x * np.log(x / npr) + npr - x
        v = np.where(near, diff / np.where(tot > 0, tot, 1.0), 0.0)
        s = diff * v
        ej = 2.0 * x * v
        v2 = v * v
        for j in range(1, 12):
            ej = ej * v2
            s = s + ej / (2 * j + 1)
    out[...] = np.where(near, s, far_val)
    return out


def _log_dbinom_raw(x, n, p, q):
    # log C(n, x) p^x q^(n-x), vectorized over x and n with fixed p, q.
    x = np.asarray(x, dtype=float)
    n = np.asarray(n, dtype=float)
    x, n = np.broadcast_arrays(x, n)
    out = np.full(x.shape, -np.inf)
    inside = (x >= 0) & (x <= n)

    zero = inside & (x == 0)
    full = inside & (x == n) & ~zero
    mid = inside & ~zero & ~full

    if np.any(zero):
        nz = n[zero]
        if p < 0.1:
            out[zero] = -_bd0(nz, nz * q) - nz * p
        else:
            out[zero] = nz * math.log(q)
    if np.any(full):
        nf = n[full]
        if q < 0.1:
            out[full] = -_bd0(nf, nf * p) - nf * q
        else:
            out[full] = nf * math.log(p)
    if np.any(mid):
        xm, nm = x[mid], n[mid]
        lc = (stirlerr(nm) - stirlerr(xm) - stirlerr(nm - xm)
              - _bd0(xm, nm * p) - _bd0(nm - xm, nm * q))
        lf = LOG_2PI + np.log(xm) + np.log1p(-xm / nm)
        out[mid] = lc - 0.5 * lf
    return out


@dataclass(frozen=True)
class HypergeomCtx:
    """Sampling context: ``k`` errors spread over ``n + l`` positions.

    ``l`` positions are revealed as the sample, the other ``n`` form the key.
    The observed count ``c`` in the sample is hypergeometric.
    """

    n: int
    l: int
    k: int

    def __post_init__(self):
        for name in ("n", "l", "k"):
            v = getattr(self, name)
            if int(v) != v:
                raise DomainError("%s must be an integer" % name)
            object.__setattr__(self, name, int(v))
        if self.n < 1 or self.l < 1:
            raise DomainError("need n >= 1 and l >= 1")
        if not 0 <= self.k <= self.n + self.l:
            raise DomainError("need 0 <= k <= n + l")

    @property
    def mean(self):
        return hypergeom_moments(self)[0]

    @property
    def sigma(self):
        return hypergeom_moments(self)[1]

    @property
    def support(self):
        """Inclusive range ``(c_lo, c_hi)`` of possible sample counts."""
        return max(0, self.k - self.n), min(self.k, self.l)


def hypergeom_logpmf(ctx, c):
    """``log P(c | k)`` with ``P = C(n, k-c) C(l, c) / C(n+l, k)``.

    ``c`` may be an array; values outside the support give ``-inf``.
    """
    c_arr = np.asarray(c, dtype=float)
    total = ctx.n + ctx.l
    if ctx.k == 0 or ctx.k == total:
        val = np.where(c_arr == (0 if ctx.k == 0 else ctx.l), 0.0, -np.inf)
        return _out(val, c)
    p = ctx.l / total
    q = ctx.n / total
    p1 = _log_dbinom_raw(c_arr, ctx.k, p, q)
    p2 = _log_dbinom_raw(ctx.l - c_arr, total - ctx.k, p, q)
    p3 = float(_log_dbinom_raw(ctx.l, total, p, q))
    return _out(p1 + p2 - p3, c)


def hypergeom_logpmf_table(n, l, ks, cs):
    """Matrix of ``log P(c | k)`` for every ``k`` in ``ks`` and ``c`` in ``cs``.

    Rows follow ``ks`` and columns follow ``cs``. Used by the exact security
    oracle, which sums over thousands of ``(k, c)`` pairs at once.
    """
    n = int(n)
    l = int(l)
    total = n + l
    ks = np.asarray(ks, dtype=float)[:, None]
    cs = np.asarray(cs, dtype=float)[None, :]
    p = l / total
    q = n / total
    kk, cc = np.broadcast_arrays(ks, cs)
    p1 = _log_dbinom_raw(cc, kk, p, q)
    p2 = _log_dbinom_raw(l - cc, total - kk, p, q)
    p3 = float(_log_dbinom_raw(l, total, p, q))
    out = p1 + p2 - p3
    # k = 0 and k = n + l are degenerate in the saddle-point form.
    edge0 = kk == 0
    out[edge0] = np.where(cc[edge0] == 0, 0.0, -np.inf)
    edge1 = kk == total
    out[edge1] = np.where(cc[edge1] == l, 0.0, -np.inf)
    return out


def hypergeom_pmf(ctx, c):
    """Hypergeometric mass ``P(c | k)``; zero outside the support."""
    val = np.exp(hypergeom_logpmf(ctx, c))
    return _out(val, c)


def logsumexp(a, axis=None):
    """Stable ``log(sum(exp(a)))``; all ``-inf`` inputs give ``-inf``."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        s = np.log(np.sum(np.exp(a - m_safe), axis=axis, keepdims=True)) + m_safe
    if axis is None:
        return float(s.reshape(()))
    return np.squeeze(s, axis=axis)


def hypergeom_lower_tail(ctx, c):
    """``P(C <= c | k)`` summed in log space from the left end of the support."""
    lo, hi = ctx.support
    c = math.floor(c)
    if c < lo:
        return 0.0
    top = min(c, hi)
    terms = hypergeom_logpmf(ctx, np.arange(lo, top + 1))
    return min(1.0, math.exp(logsumexp(terms)))


def hypergeom_mean_var(n, l, k):
    """Mean ``l k/(n+l)`` and variance ``k n l (n+l-k) / ((n+l)^2 (n+l-1))``.

    ``k`` may be real-valued; the formulas are evaluated as written.
    """
    total = n + l
    mean = l * k / total
    if total == 1:
        return mean, 0.0
    var = k * n * l * (total - k) / (total**2 * (total - 1))
    return mean, var


def hypergeom_moments(ctx):
    """Mean and standard deviation ``(c_bar, sigma)`` of the sample count."""
    mean, var = hypergeom_mean_var(ctx.n, ctx.l, ctx.k)
    return mean, math.sqrt(max(var, 0.0))


# ---------------------------------------------------------------------------
# Tail bounds for the sampling distribution
# ---------------------------------------------------------------------------

def stirling_mu(n):
    """Default Stirling slack ``mu = 1/(6n) + 1/12``."""
    return 1.0 / (6.0 * n) + 1.0 / 12.0


def _kl_nats(a, p):
    # Bernoulli relative entropy D(a || p) in nats, exact zero at a == p.
    out = 0.0
    if a > 0.0:
        out += a * math.log(a / p)
    if a < 1.0:
        out += (1.0 - a) * math.log((1.0 - a) / (1.0 - p))
    return out


def entropy_gap(ctx, c):
    """Exponent ``n h((k-c)/n) + l h(c/l) - (n+l) h(k/(n+l))`` in bits.

    Written as a sum of two relative entropies, so the result is never
    positive and equals zero exactly when ``(k-c)/n = c/l``.
    """
    c = float(c)
    n, l, k = ctx.n, ctx.l, ctx.k
    if not (0 <= c <= l and 0 <= k - c <= n):
        raise DomainError("c outside the support")
    p = k / (n + l)
    if p in (0.0, 1.0):
        return 0.0
    return -(n * _kl_nats((k - c) / n, p) + l * _kl_nats(c / l, p)) / LN2


def tail_bound_stirling(ctx, c, mu=None):
    """Left-tail bound ``sum_{i<=c} P(i|k) <= D_{n,l,k}(c)``.

    ``D = sqrt(n (n+l-k) k / ((n+l)(n-k+c)(k-c))) e^mu 2^{gap}`` where ``gap``
    is :func:`entropy_gap`. Hypotheses: ``l <= n``, ``c <= l k/(n+l)``,
    ``k/(n+l) <= 1/2``, ``0 <= c`` and ``0 < k - c < n`` (the Stirling
    estimate needs every factorial argument to be positive).
    """
    n, l, k = ctx.n, ctx.l, ctx.k
    total = n + l
    _require([
        ("l <= n", l <= n),
        ("c <= l k/(n+l)", c <= l * k / total + 1e-12),
        ("k/(n+l) <= 1/2", 2 * k <= total),
        ("0 <= c", 0 <= c),
        ("0 < k - c < n", 0 < k - c < n),
    ])
    if mu is None:
        mu = stirling_mu(n)
    pref = math.sqrt(n * (total - k) * k / (total * (n - k + c) * (k - c)))
    return pref * math.exp(mu) * 2.0 ** entropy_gap(ctx, c)


def tail_bound_gauss(ctx, c, mu=None):
    """Gaussian-shaped left-tail bound ``e^mu sqrt((n+l)/n) exp(-z^2/2)``.

    ``z = (c - mean)/sigma``. Same hypotheses as :func:`tail_bound_stirling`.
    """
    n, l, k = ctx.n, ctx.l, ctx.k
    total = n + l
    _require([
        ("l <= n", l <= n),
        ("c <= l k/(n+l)", c <= l * k / total + 1e-12),
        ("k/(n+l) <= 1/2", 2 * k <= total),
        ("0 <= c < k", 0 <= c < k),
    ])
    if mu is None:
        mu = stirling_mu(n)
    mean, var = hypergeom_mean_var(n, l, k)
    z = (c - mean) / math.sqrt(var)
    return math.exp(mu) * math.sqrt(total / n) * math.exp(-0.5 * z * z)


def tail_bound_chvatal(ctx, t):
    """Chvatal-type bound ``sum_{i <= mean - l t} P(i|k) <= exp(l t^2 h''(p) / 2)``.

    ``p = k/(n+l)`` and ``h''`` is the bit-valued second derivative of the
    binary entropy. Hypotheses: ``t >= 0``, ``mean - l t <= l/2``,
    ``0 < k/(n+l) <= 1/2``.
    """
    n, l, k = ctx.n, ctx.l, ctx.k
    total = n + l
    p = k / total
    _require([
        ("t >= 0", t >= 0),
        ("mean - l t <= l/2", l * k / total - l * t <= l / 2 + 1e-12),
        ("0 < k/(n+l) <= 1/2", 0 < 2 * k <= total),
    ])
    if p == 0.5:
        h2 = -4.0 / LN2
    else:
        h2 = binary_entropy_d2(p)
    return math.exp(0.5 * l * t * t * h2)


def exp_s_squared_check(s):
    """Test ``e^{-s^2} <= Phi(s)/2`` at ``s >= 2``.

    Returns ``(holds, lhs, rhs)``. The inequality is false at ``s = 2`` and
    true from ``s ~ 2.268`` on; see :func:`exp_s_squared_threshold`.
    """
    s = float(s)
    if s < 2:
        raise DomainError("exp_s_squared_check needs s >= 2")
    lhs = math.exp(-s * s)
    rhs = 0.5 * phi_upper_tail(s)
    return lhs <= rhs, lhs, rhs


def exp_s_squared_threshold():
    """Smallest ``s > 0`` from which ``e^{-s^2} <= Phi(s)/2`` holds."""
    f = lambda s: -s * s - math.log(0.5) - log_phi_upper_tail(s)
    lo, hi = 1.0, 4.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi
