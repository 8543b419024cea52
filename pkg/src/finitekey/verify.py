"""Numerical certification of every inequality the bounds rest on.

Each check compares a closed-form upper bound against an exact quantity
computed from the hypergeometric law, over an exhaustive grid of admissible
points, and keeps the worst case. Margins are natural-log ratios
``ln(bound / exact)``, so a negative margin is a violation regardless of
how small the probabilities involved are. Every entry records the point
that attained its worst margin.

Entries marked ``gating=False`` are reported but do not affect the overall
verdict; they document inequalities that are known not to hold as printed
(the literal normal-tail sandwich) or that are purely informational.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import (
    DEFAULT_MAX_ORACLE_SIZE,
    SamplingTable,
    beta_param,
    evaluate_bound,
    prop1_bound,
    prop2_bound,
    thm3_bound,
)
from .estimation import ProtocolParams, p_hat_sft, sacrifice_bits
from .mathcore import (
    LN2,
    HypergeomCtx,
    PreconditionError,
    binary_entropy,
    entropy_gap,
    exp_s_squared_check,
    exp_s_squared_threshold,
    hypergeom_logpmf,
    hypergeom_moments,
    logsumexp,
    phi_bounds,
    phi_bounds_scaled,
    phi_upper_tail,
    tail_bound_chvatal,
    tail_bound_gauss,
    tail_bound_stirling,
)

__all__ = [
    "VerifyConfig",
    "CheckResult",
    "VerifyReport",
    "SUITES",
    "run_verification",
    "check_stirling_tail",
    "check_entropy_gap",
    "check_gauss_tail",
    "check_chvatal_tail",
    "check_phi_sandwich",
    "check_exp_s_squared",
    "check_case_analysis",
    "check_oracle_dominance",
]


@dataclass(frozen=True)
class VerifyConfig:
    """Grids for :func:`run_verification`.

    ``mu`` replaces the Stirling slack ``1/(6n) + 1/12`` everywhere it
    enters a bound; it exists for fault injection (a corrupted constant
    must be caught).
    """

    lemma_sizes: tuple = (20, 50, 100)
    chvatal_size: int = 60
    chvatal_ts: tuple = (0.05, 0.1, 0.15)
    phi_grid: tuple = tuple(0.25 * j for j in range(1, 81))
    s_grid_b7: tuple = tuple(2.0 + 0.05 * j for j in range(201))
    case_size: int = 500
    case_s: tuple = (2.0, 2.5, 3.0, 4.0)
    case_c_min: tuple = (5, 10, 25, 60)
    oracle_sizes: tuple = (200, 500, 1000, 2000)
    oracle_s: tuple = (2.0, 2.5, 3.0, 4.0)
    oracle_D: tuple = (1, 3, 10)
    c_max_frac: float = 0.12
    mu: float | None = None
    max_oracle_size: int = DEFAULT_MAX_ORACLE_SIZE
    suites: tuple = ()

    def __post_init__(self):
        unknown = set(self.suites) - set(SUITES)
        if unknown:
            raise ValueError("unknown suites: %s" % ", ".join(sorted(unknown)))


@dataclass
class CheckResult:
    """Outcome of one inequality family on its grid."""

    name: str
    passed: bool
    checked: int
    worst_margin: float
    witness: dict = field(default_factory=dict)
    gating: bool = True
    detail: str = ""

    def to_dict(self):
        m = self.worst_margin
        return {
            "name": self.name,
            "passed": self.passed,
            "gating": self.gating,
            "checked": self.checked,
            "worst_margin": m if math.isfinite(m) else None,
            "witness": {k: _plain(v) for k, v in self.witness.items()},
            "detail": self.detail,
        }


@dataclass
class VerifyReport:
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks if c.gating)

    @property
    def failures(self):
        return [c for c in self.checks if c.gating and not c.passed]

    def to_dict(self):
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}

    def lines(self):
        out = []
        for c in self.checks:
            tag = "PASS" if c.passed else "FAIL"
            if not c.gating:
                tag += " (info)"
            m = "%.4g" % c.worst_margin if math.isfinite(c.worst_margin) else "n/a"
            w = ", ".join("%s=%s" % (k, _plain(v)) for k, v in c.witness.items())
            out.append("%-28s %-11s n=%-6d margin=%-10s %s" % (c.name, tag, c.checked, m, w))
        return out


def _plain(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


class _Worst:
    """Running minimum of the margin together with its witness."""

    def __init__(self):
        self.margin = math.inf
        self.witness = {}
        self.count = 0

    def add(self, margin, **witness):
        self.count += 1
        if margin < self.margin:
            self.margin = float(margin)
            self.witness = witness

    def add_many(self, margins, witness_fn):
        margins = np.asarray(margins, dtype=float)
        if margins.size == 0:
            return
        self.count += margins.size
        j = int(np.argmin(margins))
        if margins[j] < self.margin:
            self.margin = float(margins[j])
            self.witness = witness_fn(j)

    def result(self, name, gating=True, detail=""):
        return CheckResult(name=name, passed=self.margin >= 0, checked=self.count,
                           worst_margin=self.margin, witness=self.witness, gating=gating,
                           detail=detail)


def _log_cumulative(n, l, k):
    """Support, ``log P(C <= c | k)`` for each ``c`` in it, mean and sigma."""
    ctx = HypergeomCtx(n, l, k)
    lo, hi = ctx.support
    cs = np.arange(lo, hi + 1)
    cum = np.logaddexp.accumulate(hypergeom_logpmf(ctx, cs))
    mean, sigma = hypergeom_moments(ctx)
    return ctx, cs, cum, mean, sigma


def _left_tail_points(n, l):
    # Admissible (k, c) for the left-tail lemmas: 1 <= k <= (n+l)/2, c <= mean.
    for k in range(1, (n + l) // 2 + 1):
        ctx, cs, cum, mean, sigma = _log_cumulative(n, l, k)
        for c, lc in zip(cs, cum):
            if c > mean + 1e-12:
                break
            yield ctx, int(c), float(lc), mean, sigma


def check_stirling_tail(cfg):
    """Stirling-type left-tail bound against exact partial sums."""
    w = _Worst()
    for size in cfg.lemma_sizes:
        for ctx, c, lc, _, _ in _left_tail_points(size, size):
            try:
                b = tail_bound_stirling(ctx, c, mu=cfg.mu)
            except PreconditionError:
                continue
            w.add(math.log(b) - lc, n=ctx.n, l=ctx.l, k=ctx.k, c=c)
    return w.result("stirling_tail")


def check_gauss_tail(cfg):
    """Gaussian-shaped left-tail bound against exact partial sums."""
    w = _Worst()
    for size in cfg.lemma_sizes:
        for ctx, c, lc, _, _ in _left_tail_points(size, size):
            try:
                b = tail_bound_gauss(ctx, c, mu=cfg.mu)
            except PreconditionError:
                continue
            w.add(math.log(b) - lc, n=ctx.n, l=ctx.l, k=ctx.k, c=c)
    return w.result("gauss_tail")


def check_entropy_gap(cfg):
    """Entropy gap ``<= -z^2 / (2 ln 2)`` with ``z = (c - mean)/sigma``.

    The margin here is the difference of the two exponents (in bits),
    not a log ratio.
    """
    w = _Worst()
    for size in cfg.lemma_sizes:
        for ctx, c, _, mean, sigma in _left_tail_points(size, size):
            if 2 * ctx.k >= ctx.n + ctx.l:
                continue
            rhs = -((c - mean) / sigma) ** 2 / (2 * LN2)
            w.add(rhs - entropy_gap(ctx, c), n=ctx.n, l=ctx.l, k=ctx.k, c=c)
    return w.result("entropy_gap", detail="margin in bits")


def check_chvatal_tail(cfg):
    """Chvatal-type bound, exhaustive in ``t = (mean - c)/l`` plus a fixed ``t`` grid."""
    w = _Worst()

    def one(n, l, k, t, cs, cum, mean):
        ctx = HypergeomCtx(n, l, k)
        try:
            b = tail_bound_chvatal(ctx, t)
        except PreconditionError:
            return
        top = math.floor(mean - l * t + 1e-9)
        if top < cs[0]:
            w.add(math.inf)
            return
        lc = cum[min(top, cs[-1]) - cs[0]]
        w.add(math.log(b) - lc, n=n, l=l, k=k, c=top, t=t)

    for size in cfg.lemma_sizes:
        for k in range(1, size + 1):
            _, cs, cum, mean, _ = _log_cumulative(size, size, k)
            for c in cs:
                if c > mean + 1e-12:
                    break
                one(size, size, k, (mean - c) / size, cs, cum, mean)
    m = cfg.chvatal_size
    for k in range(10, m + 1):
        _, cs, cum, mean, _ = _log_cumulative(m, m, k)
        for t in cfg.chvatal_ts:
            one(m, m, k, t, cs, cum, mean)
    return w.result("chvatal_tail")


def check_phi_sandwich(cfg, literal=False):
    """``lower(x) <= Phi(x) <= upper(x)`` on ``cfg.phi_grid``.

    ``literal=True`` checks the unnormalized pair from
    :func:`~finitekey.mathcore.phi_bounds_scaled`, whose lower value is
    known to exceed ``Phi``; that entry is informational.
    """
    w = _Worst()
    fn = phi_bounds_scaled if literal else phi_bounds
    for x in cfg.phi_grid:
        lo, hi = fn(x)
        lp = math.log(phi_upper_tail(x))
        w.add(min(lp - math.log(lo), math.log(hi) - lp), x=x)
    name = "phi_sandwich_literal" if literal else "phi_sandwich"
    return w.result(name, gating=not literal)


def check_exp_s_squared(cfg):
    """``e^{-s^2} <= Phi(s)/2`` on ``s >= 2``; informational, with its threshold."""
    w = _Worst()
    for s in cfg.s_grid_b7:
        _, lhs, rhs = exp_s_squared_check(s)
        w.add(math.log(rhs) - math.log(lhs), s=s)
    thr = exp_s_squared_threshold()
    res = w.result("exp_s_squared", gating=False,
                   detail="holds for s >= %.5f" % thr)
    res.witness = dict(res.witness, threshold=thr)
    return res


def _case_params(cfg):
    n = l = cfg.case_size
    c_max = math.floor(cfg.c_max_frac * l)
    for s in cfg.case_s:
        for c_min in cfg.case_c_min:
            if c_min <= c_max:
                yield ProtocolParams(n=n, l=l, s=s, D=1, c_min=c_min, c_max=c_max)


def check_case_analysis(cfg):
    """The three regimes of ``k`` used by the Gaussian bounds, checked exactly.

    * small ``k <= n c_min / l``: ``S_av(k) <= eps``;
    * middle ``k``: ``g(k, c) <= -beta (c - (mean - s sigma) + 1) - D`` for
      ``c`` in ``[mean - s sigma, c_max]``, and the resulting envelope
      ``min(S_pa, 1) <= min(2^{-beta (c - (mean - s sigma) + 1)}, 1)``;
    * large ``k >= (n+l) p_hat_sft(c_max)``: ``c_max <= mean - s sigma`` and
      ``S_av(k) <= P(C <= mean - s sigma)``, with ``S_pa`` both as printed
      (up to 2) and clipped at 1.
    """
    n = l = cfg.case_size
    c_max = math.floor(cfg.c_max_frac * l)
    table = SamplingTable(n, l, c_max, max_size=cfg.max_oracle_size)
    small, mid, env, large_sup, large_cap, large_raw = (_Worst() for _ in range(6))
    cs_all = np.arange(c_max + 1)
    for p in _case_params(cfg):
        prof = table.s_av(p)
        prof_cap = table.s_av(p, cap=True)
        base = dict(s=p.s, c_min=p.c_min, c_max=p.c_max)
        k1 = int(math.floor(n * p.c_min / l + 1e-9))
        small.add_many(np.log(p.eps) - np.log(prof[:k1 + 1]),
                       lambda j: dict(base, n=n, l=l, k=j))
        beta = beta_param(p)
        alpha = sacrifice_bits(p, cs_all).astype(float)
        k3 = (n + l) * p_hat_sft(p, p.c_max)
        for k in range(k1 + 1, n + l + 1):
            ctx = HypergeomCtx(n, l, k)
            mean, sigma = hypergeom_moments(ctx)
            lo, hi = ctx.support
            edge = mean - p.s * sigma
            if k >= k3:
                large_sup.add(edge - p.c_max, **base, n=n, l=l, k=k)
                top = math.floor(edge)
                if top < lo:
                    ref = -math.inf
                else:
                    ref = logsumexp(hypergeom_logpmf(ctx, np.arange(lo, top + 1)))
                for w, val in ((large_cap, prof_cap[k]), (large_raw, prof[k])):
                    if val > 0:
                        w.add(ref - math.log(val), **base, n=n, l=l, k=k)
                    else:
                        w.add(math.inf)
                continue
            top = min(hi, p.c_max)
            if top < lo:
                continue
            cs = np.arange(lo, top + 1)
            g = n * binary_entropy((k - cs) / n) - alpha[cs]
            lin = -beta * (cs - edge + 1)
            keep = cs >= edge
            mid.add_many((lin - p.D - g)[keep],
                         lambda j, cs=cs[keep], k=k: dict(base, n=n, l=l, k=k, c=int(cs[j])))
            spa_cap = np.minimum(np.minimum(g, 0.0) + 1.0, 0.0)
            bound = np.minimum(lin, 0.0)
            env.add_many((bound - spa_cap) * LN2,
                         lambda j, cs=cs, k=k: dict(base, n=n, l=l, k=k, c=int(cs[j])))
    return [
        small.result("case_small_k"),
        mid.result("case_middle_k_exponent", detail="margin in bits"),
        env.result("case_middle_k_envelope"),
        large_sup.result("case_large_k_support", detail="margin in counts"),
        large_cap.result("case_large_k_sum"),
        large_raw.result("case_large_k_sum_unclipped", gating=False,
                         detail="S_pa taken as printed, values up to 2"),
    ]


def _oracle_c_mins(s, c_max):
    strict = math.floor(s * s) + 1
    return sorted({0, strict, math.floor(c_max / 2), c_max})


def check_oracle_dominance(cfg):
    """Exact ``max_k S_av(k)`` against every closed-form bound.

    The rigorous bounds gate; the approximation-based ones are reported
    for information.
    """
    worst = {m: _Worst() for m in ("prop2", "thm3", "prop1", "thm2")}
    for size in cfg.oracle_sizes:
        n = l = size
        c_max = math.floor(cfg.c_max_frac * l)
        table = SamplingTable(n, l, c_max, max_size=cfg.max_oracle_size)
        for s in cfg.oracle_s:
            for D in cfg.oracle_D:
                for c_min in _oracle_c_mins(s, c_max):
                    p = ProtocolParams(n=n, l=l, s=s, D=D, c_min=c_min, c_max=c_max)
                    prof = table.s_av(p)
                    k = int(np.argmax(prof))
                    oracle = float(prof[k])
                    wit = dict(n=n, l=l, k=k, s=s, D=D, c_min=c_min, c_max=c_max)
                    reports = {
                        "prop2": prop2_bound(p, strict=False, mu=cfg.mu),
                        "thm3": thm3_bound(p, strict=False, mu=cfg.mu),
                        "prop1": prop1_bound(p),
                    }
                    if c_min >= 1 and D == 1:
                        reports["thm2"] = evaluate_bound("thm2", p)
                    for m, rep in reports.items():
                        if not rep.feasible or oracle <= 0:
                            continue
                        worst[m].add(math.log(rep.p_ph_bound) - math.log(oracle), **wit)
    return [
        worst["prop2"].result("oracle_vs_prop2"),
        worst["thm3"].result("oracle_vs_thm3"),
        worst["prop1"].result("oracle_vs_prop1", gating=False),
        worst["thm2"].result("oracle_vs_thm2", gating=False),
    ]


SUITES = {
    "stirling_tail": lambda cfg: [check_stirling_tail(cfg)],
    "entropy_gap": lambda cfg: [check_entropy_gap(cfg)],
    "gauss_tail": lambda cfg: [check_gauss_tail(cfg)],
    "chvatal_tail": lambda cfg: [check_chvatal_tail(cfg)],
    "phi_sandwich": lambda cfg: [check_phi_sandwich(cfg), check_phi_sandwich(cfg, literal=True)],
    "exp_s_squared": lambda cfg: [check_exp_s_squared(cfg)],
    "case_analysis": check_case_analysis,
    "oracle_dominance": check_oracle_dominance,
}


def run_verification(cfg=None):
    """Run the selected suites (all by default) and collect their results."""
    cfg = cfg or VerifyConfig()
    names = cfg.suites or tuple(SUITES)
    checks = []
    for name in names:
        checks.extend(SUITES[name](cfg))
    return VerifyReport(checks)
