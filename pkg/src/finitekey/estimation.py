"""Interval estimation of the key error rate and key-length accounting.

The sample of ``l`` bits reveals ``c`` errors. From that count we build a
conservative estimate of the error rate in the unrevealed ``n`` key bits,
charge the corresponding number of privacy-amplification bits, and subtract
the error-correction leakage to obtain the final key length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mathcore import (
    DomainError,
    binary_entropy,
    binary_entropy_d1,
    phi_inverse,
    phi_upper_tail,
)

__all__ = [
    "ProtocolParams",
    "ProtocolAbort",
    "KeyAccounting",
    "gamma_param",
    "p_hat",
    "p_hat_sft",
    "p_hat_binomial_approx",
    "sacrifice_bits",
    "ec_leakage",
    "key_accounting",
    "final_key_length",
    "key_rate",
    "secret_fraction",
    "second_order_coefficient",
    "alpha_second_order",
    "check_counts",
]


class ProtocolAbort(RuntimeError):
    """Raised when the observed sample error count exceeds ``c_max``."""


@dataclass(frozen=True)
class ProtocolParams:
    """Static parameters of one protocol run.

    Parameters
    ----------
    n, l : int
        Key length and sample length after sifting.
    eps, s : float, optional
        Exactly one is needed; the other follows from ``eps = Phi(s)``.
    D : int
        Extra privacy-amplification bits on top of the entropy estimate.
    c_min, c_max : float
        Floor applied to ``c`` inside the estimate, and the abort threshold.
        ``c_max`` defaults to ``l``.
    f : float
        Error-correction inefficiency (leakage ``ceil(n f h(p))``).
    r : int
        Length of the verification tag.
    N, q : optional
        Number of transmitted qubits and the basis-choice probability, kept
        for reporting. The secret fraction divides by ``N`` when it is set.
    """

    n: int
    l: int
    eps: float | None = None
    s: float | None = None
    D: int = 1
    c_min: float = 0
    c_max: float | None = None
    f: float = 1.1
    r: int = 0
    N: int | None = None
    q: float | None = None

    def __post_init__(self):
        if int(self.n) != self.n or int(self.l) != self.l:
            raise DomainError("n and l must be integers")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "l", int(self.l))
        if self.n < 1 or self.l < 1:
            raise DomainError("need n >= 1 and l >= 1")
        if self.eps is None and self.s is None:
            raise DomainError("one of eps or s is required")
        if self.s is None:
            object.__setattr__(self, "s", phi_inverse(self.eps))
        elif self.eps is None:
            if self.s <= 0:
                raise DomainError("s must be positive")
            object.__setattr__(self, "eps", phi_upper_tail(self.s))
        if self.c_max is None:
            object.__setattr__(self, "c_max", self.l)
        if not 0 <= self.c_min <= self.c_max:
            raise DomainError("need 0 <= c_min <= c_max")
        if self.f < 1:
            raise DomainError("f must be at least 1")
        if self.D < 0 or int(self.D) != self.D:
            raise DomainError("D must be a non-negative integer")
        object.__setattr__(self, "D", int(self.D))

    @classmethod
    def from_basis_choice(cls, N, q, **kwargs):
        """Split ``N`` qubits into ``n = floor((1-q)^2 N)`` and ``l = floor(q^2 N)``."""
        if not 0 < q < 1:
            raise DomainError("q must lie in (0, 1)")
        n = int(math.floor((1 - q) ** 2 * N))
        l = int(math.floor(q * q * N))
        return cls(n=n, l=l, N=int(N), q=float(q), **kwargs)

    def replace(self, **changes):
        """Copy with some fields changed; the ``eps``/``s`` pair is kept consistent."""
        data = {f: getattr(self, f) for f in self.__dataclass_fields__}
        if "s" in changes and "eps" not in changes:
            data["eps"] = None
        if "eps" in changes and "s" not in changes:
            data["s"] = None
        data.update(changes)
        return ProtocolParams(**data)


def check_counts(params, k, c):
    """Validate an error configuration ``(k, c)`` against ``params``."""
    if int(k) != k or int(c) != c:
        raise DomainError("k and c must be integers")
    if not 0 <= c <= params.l:
        raise DomainError("need 0 <= c <= l")
    if not 0 <= k - c <= params.n:
        raise DomainError("need 0 <= k - c <= n")


def gamma_param(params):
    """``gamma = s^2 n / (4 l (n + l - 1))``."""
    n, l = params.n, params.l
    return params.s**2 * n / (4.0 * l * (n + l - 1))


def p_hat(params, c):
    """Upper confidence limit for the error rate given ``c`` sample errors.

    Root of the quadratic interval condition: with ``p = c/l``,
    ``(p + 2 gamma + 2 sqrt(gamma (p (1-p) + gamma))) / (1 + 4 gamma)``.
    Accepts scalar or array ``c``; ``c/l`` is clipped to ``[0, 1]``.
    """
    g = gamma_param(params)
    c_arr = np.asarray(c, dtype=float)
    p = np.clip(c_arr / params.l, 0.0, 1.0)
    val = (p + 2 * g + 2 * np.sqrt(g * (p * (1 - p) + g))) / (1 + 4 * g)
    return float(val) if np.ndim(c) == 0 else val


def p_hat_binomial_approx(params, c):
    """Binomial-style estimate ``c/l + (s/l) sqrt(l p (1-p))``.

    A rough approximation of :func:`p_hat` used only for quick estimates,
    never inside a security bound.
    """
    c_arr = np.asarray(c, dtype=float)
    p = np.clip(c_arr / params.l, 0.0, 1.0)
    val = p + params.s / params.l * np.sqrt(params.l * p * (1 - p))
    return float(val) if np.ndim(c) == 0 else val


def p_hat_sft(params, c):
    """Upper estimate of the error rate inside the key bits.

    ``((n + l) p_hat(c) - c) / n``. The value is returned as is; anything at
    or above 1/2 means no key can be distilled and :func:`sacrifice_bits`
    saturates in that case.
    """
    c_arr = np.asarray(c, dtype=float)
    n, l = params.n, params.l
    val = ((n + l) * p_hat(params, c_arr) - c_arr) / n
    return float(val) if np.ndim(c) == 0 else val


def sacrifice_bits(params, c):
    """Privacy-amplification charge ``alpha(c) = ceil(n h(p_hat_sft(max(c, c_min) + 2))) + D``.

    When the estimate reaches 1/2 the charge saturates at ``n + D``.
    Scalar input gives an ``int``; array input an integer array.
    """
    c_arr = np.asarray(c, dtype=float)
    arg = np.maximum(c_arr, params.c_min) + 2
    p = p_hat_sft(params, arg)
    p = np.atleast_1d(np.asarray(p, dtype=float))
    sat = p >= 0.5
    safe = np.where(sat, 0.25, np.clip(p, 0.0, 0.5))
    bits = np.ceil(params.n * binary_entropy(safe) - 1e-9)
    out = np.where(sat, params.n, bits).astype(np.int64) + params.D
    if np.ndim(c) == 0:
        return int(out[0])
    return out.reshape(np.shape(c))


def ec_leakage(n, f, p_bit):
    """Bits revealed by error correction, ``ceil(n f h(p_bit))``."""
    if not 0 <= p_bit <= 1:
        raise DomainError("p_bit must be a probability")
    return int(math.ceil(n * f * binary_entropy(p_bit) - 1e-9))


@dataclass(frozen=True)
class KeyAccounting:
    """Breakdown of the final key length for one observed count ``c``.

    ``raw_length + alpha + ec_bits == n`` holds exactly; ``G`` is
    ``raw_length`` floored at zero and ``no_key`` flags the floor.
    """

    c: float
    alpha: int
    ec_bits: int
    raw_length: int
    G: int
    R: float
    F: float
    no_key: bool
    aborted: bool = False
    notes: tuple = field(default_factory=tuple)


def key_accounting(params, c, p_bit=None, allow_abort=True):
    """Account for every bit of the ``n`` key bits given ``c`` sample errors.

    Parameters
    ----------
    params : ProtocolParams
    c : float
        Observed sample error count. Planning code passes real values
        ``c = qber * l``.
    p_bit : float, optional
        Error rate used to size the error-correction leakage; defaults to
        ``c / l``.
    allow_abort : bool
        If true, ``c > c_max`` returns an aborted record with ``G = 0``.
        If false it raises :class:`ProtocolAbort`.
    """
    n, l = params.n, params.l
    if p_bit is None:
        p_bit = c / l
    denom = params.N if params.N else n + l
    if c > params.c_max:
        if not allow_abort:
            raise ProtocolAbort("c = %s exceeds c_max = %s" % (c, params.c_max))
        return KeyAccounting(c=c, alpha=0, ec_bits=0, raw_length=0, G=0, R=0.0,
                             F=0.0, no_key=True, aborted=True)
    alpha = sacrifice_bits(params, c)
    leak = ec_leakage(n, params.f, p_bit)
    raw = n - leak - alpha
    G = max(raw, 0)
    R = max((G - params.r) / n, 0.0)
    F = max((G - params.r) / denom, 0.0)
    return KeyAccounting(c=c, alpha=alpha, ec_bits=leak, raw_length=raw, G=G,
                         R=R, F=F, no_key=G - params.r <= 0)


def final_key_length(params, c, p_bit=None):
    """Final key length ``G = n - ceil(n f h(p_bit)) - alpha(c)``, floored at 0.

    Raises :class:`ProtocolAbort` when ``c > c_max``.
    """
    return key_accounting(params, c, p_bit, allow_abort=False).G


def key_rate(params, c, p_bit=None):
    """Key rate ``(G - r)/n``, floored at 0 (check ``key_accounting().no_key``)."""
    return key_accounting(params, c, p_bit, allow_abort=False).R


def secret_fraction(params, c, p_bit=None):
    """Secret fraction ``(G - r)/N``, floored at 0; ``N`` defaults to ``n + l``."""
    return key_accounting(params, c, p_bit, allow_abort=False).F


def second_order_coefficient(p, t, s):
    """``g_t(p) = h'(p) sqrt(p (1-p) (1+t) / (4 t)) s`` with ``t = l/n``."""
    if not 0 < p < 0.5:
        raise DomainError("need 0 < p < 1/2")
    if t <= 0:
        raise DomainError("need t > 0")
    return binary_entropy_d1(p) * math.sqrt(p * (1 - p) * (1 + t) / (4 * t)) * s


def alpha_second_order(n, t, p, eps):
    """Second-order expansion ``n h(p) + sqrt(n) g_t(p)`` with ``s = Phi^{-1}(eps)``."""
    s = phi_inverse(eps)
    return n * binary_entropy(p) + math.sqrt(n) * second_order_coefficient(p, t, s)
