"""Upper bounds on the phase-error probability and the resulting secrecy.

Two families live here:

* the exact oracle, which sums the hypergeometric sampling distribution
  against the privacy-amplification success term ``S_pa`` for every error
  total ``k`` and returns ``max_k S_av(k)``;
* closed-form bounds, two that lean on a normal approximation
  (``prop1_bound``, ``thm2_bound``) and two that are meant to be rigorous
  (``prop2_bound``, ``thm3_bound``).

Every closed-form bound returns a :class:`BoundReport` listing its
hypotheses by name. Rigorous bounds refuse to report a value when a
hypothesis fails (unless ``strict=False``), approximate bounds only warn.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .estimation import ProtocolParams, check_counts, gamma_param, p_hat_sft, sacrifice_bits
from .mathcore import (
    LN2,
    DomainError,
    PreconditionError,
    binary_entropy,
    binary_entropy_d1,
    hypergeom_logpmf_table,
    hypergeom_mean_var,
    log_phi_upper_tail,
    logsumexp,
    phi_upper_tail,
    stirling_mu,
)

__all__ = [
    "BoundReport",
    "OracleSizeError",
    "SamplingTable",
    "g_exponent",
    "s_pa",
    "s_av",
    "s_av_profile",
    "p_ph_oracle",
    "prop1_bound",
    "prop2_bound",
    "beta_param",
    "xi_of_k",
    "xi_min",
    "xi_params",
    "delta_param",
    "thm2_bound",
    "thm3_bound",
    "gaussian_integral_i2",
    "trace_distance_bound",
    "correctness_bound",
    "BOUND_METHODS",
    "evaluate_bound",
]

DEFAULT_MAX_ORACLE_SIZE = 10_000


class OracleSizeError(ValueError):
    """Raised when the exact oracle is asked for ``n + l`` above its size guard."""


@dataclass(frozen=True)
class BoundReport:
    """Outcome of evaluating one phase-error bound.

    Attributes
    ----------
    method : str
        ``"prop1"``, ``"prop2"``, ``"thm2"``, ``"thm3"`` or ``"oracle"``.
    p_ph_bound : float
        Upper bound on the phase-error probability (``nan`` if a rigorous
        bound was evaluated with failing hypotheses and ``strict=False``).
    trace_distance_bound : float
        ``2 sqrt(2) sqrt(p_ph_bound)``.
    rigor : str
        ``"exact"`` or ``"approximation"``.
    preconditions : dict
        Hypothesis name to boolean, in the order they were checked.
    intermediates : dict
        Named quantities used on the way (``beta``, ``xi_min``, ``delta``...).
    vacuous : bool
        True when the bound exceeds 1 and therefore says nothing.
    """

    method: str
    p_ph_bound: float
    trace_distance_bound: float
    rigor: str
    preconditions: dict = field(default_factory=dict)
    intermediates: dict = field(default_factory=dict)
    vacuous: bool = False

    @property
    def feasible(self):
        """All hypotheses hold and the bound is finite."""
        return all(self.preconditions.values()) and math.isfinite(self.p_ph_bound)

    @property
    def failed(self):
        return tuple(k for k, v in self.preconditions.items() if not v)


# ---------------------------------------------------------------------------
# Exact oracle
# ---------------------------------------------------------------------------

def g_exponent(params, k, c):
    """Exponent ``g(k, c) = n h((k - c)/n) - alpha(c)`` (bits)."""
    check_counts(params, k, c)
    return params.n * binary_entropy((k - c) / params.n) - sacrifice_bits(params, c)


def s_pa(params, k, c, cap=False):
    """Privacy-amplification term ``2^{min(g(k, c), 0) + 1}``.

    This lies in ``(0, 2]``. With ``cap=True`` it is clipped at 1, matching
    the trivial bound on a conditional error probability.
    """
    val = 2.0 ** (min(g_exponent(params, k, c), 0.0) + 1.0)
    return min(val, 1.0) if cap else val


class SamplingTable:
    """Cached ``log P(c|k)`` and ``n h((k-c)/n)`` for one ``(n, l, c_hi)``.

    The table is independent of ``s``, ``D`` and ``c_min``, so one instance
    serves every parameter set sharing ``n``, ``l`` and ``c_max``.
    """

    def __init__(self, n, l, c_hi, max_size=DEFAULT_MAX_ORACLE_SIZE, block=2048):
        if n + l > max_size:
            raise OracleSizeError(
                "n + l = %d exceeds the oracle size guard %d" % (n + l, max_size))
        self.n = int(n)
        self.l = int(l)
        self.c_hi = int(min(math.floor(c_hi), l))
        self.ks = np.arange(self.n + self.l + 1)
        self.cs = np.arange(self.c_hi + 1)
        self._blocks = []
        for start in range(0, self.ks.size, block):
            ks = self.ks[start:start + block]
            logp = hypergeom_logpmf_table(self.n, self.l, ks, self.cs)
            frac = (ks[:, None] - self.cs[None, :]) / self.n
            valid = (frac >= 0) & (frac <= 1)
            nh = self.n * binary_entropy(np.clip(frac, 0.0, 1.0))
            logp = np.where(valid, logp, -np.inf)
            self._blocks.append((ks, logp, nh))

    def s_av(self, params, cap=False):
        """``S_av(k)`` for every ``k = 0..n+l`` under the given parameters."""
        if params.n != self.n or params.l != self.l:
            raise DomainError("parameters do not match the table")
        if math.floor(min(params.c_max, params.l)) != self.c_hi:
            raise DomainError("c_max does not match the table")
        alpha = sacrifice_bits(params, self.cs).astype(float)
        out = []
        for _, logp, nh in self._blocks:
            g = nh - alpha[None, :]
            expo = np.minimum(g, 0.0) + 1.0
            if cap:
                expo = np.minimum(expo, 0.0)
            out.append(np.exp(logsumexp(logp + expo * LN2, axis=1)))
        return np.concatenate(out)


def s_av_profile(params, cap=False, max_size=DEFAULT_MAX_ORACLE_SIZE, table=None):
    """``S_av(k) = sum_{c <= c_max} P(c|k) S_pa(k, c)`` for all ``k = 0..n+l``."""
    if table is None:
        table = SamplingTable(params.n, params.l, params.c_max, max_size=max_size)
    return table.s_av(params, cap=cap)


def s_av(params, k, cap=False):
    """``S_av(k)`` for a single ``k``."""
    if not 0 <= k <= params.n + params.l:
        raise DomainError("need 0 <= k <= n + l")
    n, l = params.n, params.l
    cs = np.arange(int(min(math.floor(params.c_max), l)) + 1)
    logp = hypergeom_logpmf_table(n, l, [k], cs)[0]
    frac = (k - cs) / n
    valid = (frac >= 0) & (frac <= 1)
    g = n * binary_entropy(np.clip(frac, 0, 1)) - sacrifice_bits(params, cs)
    expo = np.minimum(g, 0.0) + 1.0
    if cap:
        expo = np.minimum(expo, 0.0)
    terms = np.where(valid, logp + expo * LN2, -np.inf)
    return math.exp(logsumexp(terms))


def p_ph_oracle(params, max_size=DEFAULT_MAX_ORACLE_SIZE, cap=False, table=None):
    """Exact ``max_k S_av(k)`` and the maximizing ``k``.

    Returns
    -------
    (float, int)
    """
    prof = s_av_profile(params, cap=cap, max_size=max_size, table=table)
    k = int(np.argmax(prof))
    return float(prof[k]), k


# ---------------------------------------------------------------------------
# Closed-form bounds
# ---------------------------------------------------------------------------

def trace_distance_bound(p_ph, surjective=True, alpha_probs=None):
    """Secrecy bound ``2 sqrt(2) sqrt(p_ph)``.

    For a non-surjective hash family the extra term
    ``sum_x P(x) 2^{-alpha(x)/2}`` is added; pass it as an iterable of
    ``(probability, alpha)`` pairs.
    """
    if p_ph < 0:
        raise DomainError("p_ph must be non-negative")
    val = 2.0 * math.sqrt(2.0) * math.sqrt(p_ph)
    if not surjective:
        if alpha_probs is None:
            raise DomainError("non-surjective hashing needs alpha_probs")
        val += sum(p * 2.0 ** (-a / 2.0) for p, a in alpha_probs)
    return val


def correctness_bound(r):
    """Failure probability ``2^{-r}`` of the verification step."""
    if r < 0:
        raise DomainError("r must be non-negative")
    return 2.0 ** (-r)


def _report(method, value, rigor, pre, inter):
    vac = bool(math.isfinite(value) and value > 1.0)
    tdb = trace_distance_bound(value) if math.isfinite(value) else math.nan
    return BoundReport(method=method, p_ph_bound=value, trace_distance_bound=tdb,
                       rigor=rigor, preconditions=dict(pre), intermediates=inter,
                       vacuous=vac)


def _enforce(method, pre, strict, rigor):
    failed = [k for k, v in pre if not v]
    if not failed:
        return True
    if rigor == "exact":
        if strict:
            raise PreconditionError(failed)
        return False
    warnings.warn("%s: hypotheses not met: %s" % (method, ", ".join(failed)),
                  RuntimeWarning, stacklevel=3)
    return True


def prop1_bound(params):
    """Normal-approximation bound ``eps + 2^{-D+1}``."""
    pre = [("c_min <= c_max", params.c_min <= params.c_max)]
    _enforce("prop1", pre, False, "approximation")
    val = params.eps + 2.0 ** (-params.D + 1)
    return _report("prop1", val, "approximation", pre, {"eps": params.eps})


def prop2_bound(params, strict=True, mu=None):
    """Rigorous bound ``sqrt((s^2+2 pi)/2) sqrt((n+l)/n) e^mu eps + 2^{-D+1}``.

    Hypotheses: ``(5/4) s^2 <= l <= n`` and ``c_min <= c_max <= 0.12 l``.
    """
    n, l, s = params.n, params.l, params.s
    pre = [
        ("(5/4) s^2 <= l", 1.25 * s * s <= l),
        ("l <= n", l <= n),
        ("c_min <= c_max", params.c_min <= params.c_max),
        ("c_max <= 0.12 l", params.c_max <= 0.12 * l),
    ]
    ok = _enforce("prop2", pre, strict, "exact")
    if mu is None:
        mu = stirling_mu(n)
    factor = math.sqrt((s * s + 2 * math.pi) / 2) * math.sqrt((n + l) / n) * math.exp(mu)
    val = factor * params.eps + 2.0 ** (-params.D + 1)
    inter = {"mu": mu, "prefactor": factor, "eps": params.eps}
    return _report("prop2", val if ok else math.nan, "exact", pre, inter)


def beta_param(params):
    """``beta = (n+l)/(l (1 + 4 gamma)) h'(p_hat_sft(c_max))``."""
    p = p_hat_sft(params, params.c_max)
    if not 0 < p < 0.5:
        raise PreconditionError("0 < p_hat_sft(c_max) < 1/2")
    g = gamma_param(params)
    return (params.n + params.l) / (params.l * (1 + 4 * g)) * binary_entropy_d1(p)


def xi_of_k(params, k, beta=None):
    """``xi(k) = ln 2 * beta * sigma(k) / s`` with real-valued ``k``."""
    if beta is None:
        beta = beta_param(params)
    _, var = hypergeom_mean_var(params.n, params.l, k)
    return LN2 * beta * math.sqrt(var) / params.s


def xi_min(params, beta=None):
    """``xi`` evaluated at ``k = n c_min / l``."""
    return xi_of_k(params, params.n * params.c_min / params.l, beta)


def xi_params(params):
    """``(xi_of_k, xi_min)``: the function ``k -> xi(k)`` and its value at ``n c_min / l``."""
    if params.c_min < 1:
        raise PreconditionError("c_min >= 1")
    beta = beta_param(params)
    return (lambda k: xi_of_k(params, k, beta)), xi_min(params, beta)


def delta_param(params, xi=None):
    """``delta = sqrt(1 + 2 pi / s^2) / (xi_min - 1)``; needs ``xi_min > 1``."""
    if xi is None:
        xi = xi_min(params)
    if not xi > 1:
        raise PreconditionError("xi_min > 1")
    return math.sqrt(1 + 2 * math.pi / params.s**2) / (xi - 1)


def gaussian_integral_i2(xi, s):
    """Closed form ``e^{xi (xi - 2) s^2 / 2} Phi((xi - 1) s)``.

    Equals ``(2 pi)^{-1/2} int_{-s}^inf exp(-x^2/2 - s (x + s) xi) dx``.
    """
    z = (xi - 1) * s
    if z > 5:
        return math.exp(0.5 * xi * (xi - 2) * s * s + log_phi_upper_tail(z))
    return math.exp(0.5 * xi * (xi - 2) * s * s) * phi_upper_tail(z)


def _xi_parts(params):
    try:
        beta = beta_param(params)
    except PreconditionError:
        return math.nan, math.nan
    if params.c_min <= 0:
        return beta, 0.0
    return beta, xi_min(params, beta)


def thm2_bound(params):
    """Normal-approximation bound ``(1 + delta) eps``.

    Hypotheses: ``c_min <= c_max``, ``s >= 2``, ``xi_min > 1``, ``D = 1``.
    """
    beta, xi = _xi_parts(params)
    pre = [
        ("c_min <= c_max", params.c_min <= params.c_max),
        ("s >= 2", params.s >= 2),
        ("xi_min > 1", xi > 1),
        ("D = 1", params.D == 1),
    ]
    _enforce("thm2", pre, False, "approximation")
    if xi > 1:
        delta = delta_param(params, xi)
        val = (1 + delta) * params.eps
    else:
        delta = math.inf
        val = math.inf
    inter = {"beta": beta, "xi_min": xi, "delta": delta, "eps": params.eps}
    return _report("thm2", val, "approximation", pre, inter)


def thm3_bound(params, strict=True, mu=None):
    """Rigorous bound without the normal approximation.

    ``sqrt((s^2+2 pi)/2) sqrt((n+l)/n) e^mu eps
    + (delta e^{mu+nu} / sqrt(1 - s/sqrt(c_min)) + eps) eps`` with
    ``nu = 1/(12 l) + 1/(2 (n + l - 1))``.

    Hypotheses: ``1 <= l <= n``, ``s^2 <= c_min <= c_max <= 0.12 l``,
    ``xi_min > 1``, ``D = 1`` and ``s < sqrt(c_min)``.
    """
    n, l, s = params.n, params.l, params.s
    beta, xi = _xi_parts(params)
    pre = [
        ("1 <= l <= n", 1 <= l <= n),
        ("s^2 <= c_min", s * s <= params.c_min),
        ("c_min <= c_max", params.c_min <= params.c_max),
        ("c_max <= 0.12 l", params.c_max <= 0.12 * l),
        ("xi_min > 1", xi > 1),
        ("D = 1", params.D == 1),
        ("s < sqrt(c_min)", s < math.sqrt(params.c_min)),
    ]
    ok = _enforce("thm3", pre, strict, "exact")
    if mu is None:
        mu = stirling_mu(n)
    nu = 1.0 / (12 * l) + 1.0 / (2 * (n + l - 1))
    inter = {"beta": beta, "xi_min": xi, "mu": mu, "nu": nu, "eps": params.eps}
    if not ok:
        return _report("thm3", math.nan, "exact", pre, inter)
    delta = delta_param(params, xi)
    first = math.sqrt((s * s + 2 * math.pi) / 2) * math.sqrt((n + l) / n) * math.exp(mu)
    second = delta * math.exp(mu + nu) / math.sqrt(1 - s / math.sqrt(params.c_min))
    val = first * params.eps + (second + params.eps) * params.eps
    inter.update(delta=delta, first_coefficient=first, second_coefficient=second)
    return _report("thm3", val, "exact", pre, inter)


BOUND_METHODS = ("prop1", "prop2", "thm2", "thm3")


def evaluate_bound(method, params, strict=False):
    """Dispatch to one of the closed-form bounds by name."""
    if method == "prop1":
        return prop1_bound(params)
    if method == "prop2":
        return prop2_bound(params, strict=strict)
    if method == "thm2":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return thm2_bound(params)
    if method == "thm3":
        return thm3_bound(params, strict=strict)
    raise DomainError("unknown method %r" % (method,))
