"""Choosing protocol parameters for a target security level.

The user fixes a trace-distance target ``t_max`` (or a joint budget
``t_max + 2^{-r}``). Then ``P_max = t_max^2 / 8`` is the largest admissible
phase-error probability, and each planner picks ``eps``, ``s``, ``D`` and
``c_min`` so that its bound stays below ``P_max``:

* ``plan_prop1``: ``eps = P_max/2``, ``D = ceil(2 - log2 P_max)``.
* ``plan_prop2``: smallest ``s`` on the grid with
  ``sqrt((n+l)/n) sqrt((s^2+2 pi)/2) e^mu Phi(s) <= P_max/2``.
* ``plan_thm2`` / ``plan_thm3``: ``D = 1``, start at ``eps = 0.9 P_max`` and
  shrink ``eps`` by 10% until the bound fits.

``optimize_rate`` and ``optimize_fraction`` search grids of ``(s, c_min)``
and ``(q, c_min)`` for the largest key rate or secret fraction. Planning
evaluates the key length at the real-valued count ``c = qber * l``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .bounds import BOUND_METHODS, BoundReport, evaluate_bound
from .estimation import ProtocolParams, key_accounting
from .mathcore import DomainError, binary_entropy, phi_inverse, phi_upper_tail, stirling_mu

__all__ = [
    "PlanRequest",
    "PlanResult",
    "CurveSpec",
    "resolve_t_max",
    "d_from_p_max",
    "plan",
    "plan_prop1",
    "plan_prop2",
    "plan_thm2",
    "plan_thm3",
    "optimize_rate",
    "optimize_best",
    "optimize_fraction",
    "rough_estimate",
    "asymptotic_rate",
    "emit_curve",
    "curve_to_csv",
    "CSV_HEADER",
]

CSV_HEADER = ("method", "n", "l", "q", "qber", "eps", "s", "D", "c_min", "c_max", "alpha",
              "G", "R", "F", "p_ph_bound", "trace_bound", "feasible")

_MAX_EPS_STEPS = 400


@dataclass(frozen=True)
class PlanRequest:
    """What the user wants planned.

    Either ``n`` and ``l`` are given, or ``N`` together with ``q`` (or with
    ``sweep_q`` for :func:`optimize_fraction`), in which case
    ``n = floor((1-q)^2 N)`` and ``l = floor(q^2 N)``.

    ``t_max`` is the trace-distance target. Alternatively ``total_budget``
    bounds ``t_max + 2^{-r}`` and ``t_max`` is taken as the remainder.
    """

    method: str
    qber: float
    n: int | None = None
    l: int | None = None
    N: int | None = None
    q: float | None = None
    t_max: float | None = None
    total_budget: float | None = None
    r: int = 40
    f: float = 1.1
    D: int | None = None
    s: float | None = None
    c_min: float | None = None
    c_min_frac: float = 0.01
    c_max_frac: float = 0.12
    sweep_s: bool = False
    sweep_c_min: bool = False
    sweep_q: bool = False
    s_step: float = 0.05
    s_lo: float = 2.0
    s_hi: float = 15.0
    c_min_step_frac: float = 1.0 / 200
    q_step: float = 0.005

    def __post_init__(self):
        if self.method not in BOUND_METHODS:
            raise DomainError("method must be one of %s" % (BOUND_METHODS,))
        if not 0 <= self.qber < 0.5:
            raise DomainError("qber must lie in [0, 1/2)")
        if self.t_max is None and self.total_budget is None:
            raise DomainError("t_max or total_budget is required")
        if self.t_max is not None and not 0 < self.t_max < 1:
            raise DomainError("t_max must lie in (0, 1)")
        if self.s_step <= 0 or self.q_step <= 0 or self.c_min_step_frac <= 0:
            raise DomainError("grid steps must be positive")
        if self.s_lo > self.s_hi:
            raise DomainError("empty s grid")

    def replace(self, **changes):
        return PlanRequest(**{**asdict(self), **changes})

    def sizes(self, q=None):
        """Resolve ``(n, l, N, q)`` for this request (or for a given ``q``)."""
        if q is None and self.n is not None and self.l is not None:
            return int(self.n), int(self.l), self.N, self.q
        q = self.q if q is None else q
        if self.N is None or q is None:
            raise DomainError("need n and l, or N and q")
        n = int(math.floor((1 - q) ** 2 * self.N))
        l = int(math.floor(q * q * self.N))
        return n, l, int(self.N), float(q)


@dataclass
class PlanResult:
    """Chosen parameters, the bound that certifies them and the key they give."""

    method: str
    feasible: bool
    n: int
    l: int
    qber: float
    t_max: float
    p_max: float
    eps: float = math.nan
    s: float = math.nan
    D: int = 0
    c_min: float = 0
    c_max: float = 0
    q: float | None = None
    N: int | None = None
    report: BoundReport | None = None
    alpha: int = 0
    G: int = 0
    R: float = 0.0
    F: float = 0.0
    checks: dict = field(default_factory=dict)
    failed: tuple = ()
    estimate_only: bool = False
    notes: tuple = ()
    grid: list = field(default_factory=list, repr=False)

    @property
    def p_ph_bound(self):
        return self.report.p_ph_bound if self.report else math.nan

    @property
    def trace_bound(self):
        return self.report.trace_distance_bound if self.report else math.nan

    def to_dict(self):
        d = {
            "method": self.method,
            "feasible": self.feasible,
            "failed_checks": list(self.failed),
            "checks": dict(self.checks),
            "n": self.n, "l": self.l, "q": self.q, "N": self.N, "qber": self.qber,
            "t_max": self.t_max, "p_max": self.p_max,
            "eps": self.eps, "s": self.s, "D": self.D,
            "c_min": self.c_min, "c_max": self.c_max,
            "alpha": self.alpha, "G": self.G, "R": self.R, "F": self.F,
            "p_ph_bound": _json_float(self.p_ph_bound),
            "trace_bound": _json_float(self.trace_bound),
            "estimate_only": self.estimate_only,
            "notes": list(self.notes),
        }
        if self.report is not None:
            d["bound"] = {
                "method": self.report.method,
                "rigor": self.report.rigor,
                "vacuous": self.report.vacuous,
                "preconditions": dict(self.report.preconditions),
                "intermediates": {k: _json_float(v) for k, v in self.report.intermediates.items()},
            }
        return d


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def resolve_t_max(req):
    """Trace-distance target after paying ``2^{-r}`` out of a joint budget."""
    if req.total_budget is not None:
        t = req.total_budget - 2.0 ** (-req.r)
        if req.t_max is not None:
            if req.t_max > t:
                raise DomainError("t_max + 2^-r exceeds total_budget")
            t = req.t_max
        if not 0 < t < 1:
            raise DomainError("budget leaves no room for t_max")
        return t
    return req.t_max


def d_from_p_max(p_max):
    """``D = ceil(2 - log2 P_max)``, which makes ``2^{-D+1} <= P_max / 2``."""
    return int(math.ceil(2 - math.log2(p_max)))


def _default_c_limits(req, l):
    c_max = math.floor(req.c_max_frac * l)
    c_min = req.c_min if req.c_min is not None else math.floor(req.c_min_frac * l)
    return c_min, c_max


def _assemble(method, req, params, report, p_max, t_max, extra_checks=(), notes=()):
    checks = dict(report.preconditions) if report is not None else {}
    checks.update(extra_checks)
    if report is not None:
        val = report.p_ph_bound
        checks["bound <= P_max"] = bool(math.isfinite(val) and val <= p_max * (1 + 1e-12))
    feasible = all(checks.values())
    acc = key_accounting(params, req.qber * params.l, p_bit=req.qber)
    return PlanResult(
        method=method, feasible=feasible, n=params.n, l=params.l, qber=req.qber,
        t_max=t_max, p_max=p_max, eps=params.eps, s=params.s, D=params.D,
        c_min=params.c_min, c_max=params.c_max, q=params.q, N=params.N, report=report,
        alpha=acc.alpha, G=acc.G, R=acc.R, F=acc.F, checks=checks,
        failed=tuple(k for k, v in checks.items() if not v), notes=tuple(notes))


def _infeasible(method, req, n, l, t_max, p_max, name, **fields):
    return PlanResult(method=method, feasible=False, n=n, l=l, qber=req.qber, t_max=t_max,
                      p_max=p_max, checks={name: False}, failed=(name,), **fields)


def _base(req, q=None):
    t_max = resolve_t_max(req)
    p_max = t_max * t_max / 8.0
    n, l, N, qq = req.sizes(q)
    if n < 1 or l < 1:
        raise DomainError("n and l must be positive")
    return t_max, p_max, n, l, N, qq


def plan_prop1(req):
    """Parameters for the normal-approximation bound ``eps + 2^{-D+1}``."""
    t_max, p_max, n, l, N, q = _base(req)
    c_min, c_max = _default_c_limits(req, l)
    eps = p_max / 2
    if not eps < 0.5:
        return _infeasible("prop1", req, n, l, t_max, p_max, "eps < 1/2", eps=eps)
    D = req.D if req.D is not None else d_from_p_max(p_max)
    params = ProtocolParams(n=n, l=l, eps=eps, D=D, c_min=min(c_min, c_max), c_max=c_max,
                            f=req.f, r=req.r, N=N, q=q)
    return _assemble("prop1", req, params, evaluate_bound("prop1", params), p_max, t_max)


def _prop2_display(n, l, s):
    return (math.sqrt((n + l) / n) * math.sqrt((s * s + 2 * math.pi) / 2)
            * math.exp(stirling_mu(n)) * phi_upper_tail(s))


def _s_grid(req):
    count = int(math.floor((req.s_hi - req.s_lo) / req.s_step + 1e-9)) + 1
    return [round(req.s_lo + j * req.s_step, 10) for j in range(count)]


def plan_prop2(req):
    """Parameters for the rigorous straightforward bound.

    ``s`` is the smallest grid value satisfying the display inequality,
    unless ``req.s`` fixes it.
    """
    t_max, p_max, n, l, N, q = _base(req)
    c_min, c_max = _default_c_limits(req, l)
    D = req.D if req.D is not None else d_from_p_max(p_max)
    if req.s is not None:
        s = req.s
    else:
        s = next((v for v in _s_grid(req) if _prop2_display(n, l, v) <= p_max / 2), None)
        if s is None:
            return _infeasible("prop2", req, n, l, t_max, p_max, "s on grid meets P_max/2", D=D)
    params = ProtocolParams(n=n, l=l, s=s, D=D, c_min=min(c_min, c_max), c_max=c_max,
                            f=req.f, r=req.r, N=N, q=q)
    extra = {"display <= P_max/2": _prop2_display(n, l, s) <= p_max / 2}
    return _assemble("prop2", req, params, evaluate_bound("prop2", params), p_max, t_max, extra)


def _plan_gaussian(method, req):
    t_max, p_max, n, l, N, q = _base(req)
    c_min, c_max = _default_c_limits(req, l)
    if c_min > c_max:
        return _infeasible(method, req, n, l, t_max, p_max, "c_min <= c_max", c_min=c_min,
                           c_max=c_max)

    def make(eps=None, s=None):
        return ProtocolParams(n=n, l=l, eps=eps, s=s, D=1, c_min=c_min, c_max=c_max,
                              f=req.f, r=req.r, N=N, q=q)

    if req.s is not None:
        params = make(s=req.s)
        return _assemble(method, req, params, evaluate_bound(method, params), p_max, t_max)
    eps = 0.9 * p_max
    for _ in range(_MAX_EPS_STEPS):
        if not eps < 0.5:
            eps *= 0.9
            continue
        params = make(eps=eps)
        report = evaluate_bound(method, params)
        if not report.feasible:
            # Shrinking eps raises s, which only lowers xi_min and tightens
            # s^2 <= c_min, so a failed hypothesis cannot be repaired here.
            return _assemble(method, req, params, report, p_max, t_max)
        if report.p_ph_bound <= p_max:
            return _assemble(method, req, params, report, p_max, t_max)
        eps *= 0.9
    return _assemble(method, req, params, report, p_max, t_max,
                     {"eps iteration converged": False})


def plan_thm2(req):
    """Gaussian bound ``(1 + delta) eps`` with the shrinking-``eps`` loop."""
    return _plan_gaussian("thm2", req)


def plan_thm3(req):
    """Rigorous Gaussian bound with the shrinking-``eps`` loop."""
    return _plan_gaussian("thm3", req)


_PLANNERS = {"prop1": plan_prop1, "prop2": plan_prop2, "thm2": plan_thm2, "thm3": plan_thm3}


def plan(req):
    """Dispatch on ``req.method``; optimizes when any sweep flag is set."""
    if req.sweep_q:
        return optimize_fraction(req)
    if req.sweep_s or req.sweep_c_min:
        return optimize_rate(req)
    return _PLANNERS[req.method](req)


# ---------------------------------------------------------------------------
# Grid optimization
# ---------------------------------------------------------------------------

def _c_min_grid(req, l, c_max):
    if not req.sweep_c_min:
        c_min, _ = _default_c_limits(req, l)
        return [c_min] if c_min <= c_max else []
    step = req.c_min_step_frac * l
    vals = sorted({int(round(j * step)) for j in range(int(c_max / step) + 2)})
    return [v for v in vals if v <= c_max]


def _evaluate_point(method, req, n, l, N, q, s, c_min, c_max, p_max):
    D = 1 if method in ("thm2", "thm3") else (
        req.D if req.D is not None else d_from_p_max(p_max))
    params = ProtocolParams(n=n, l=l, s=s, D=D, c_min=c_min, c_max=c_max, f=req.f,
                            r=req.r, N=N, q=q)
    report = evaluate_bound(method, params)
    ok = report.feasible and report.p_ph_bound <= p_max * (1 + 1e-12)
    return params, report, ok


def _best_for_sizes(method, req, n, l, N, q, t_max, p_max, s_values, keep_grid):
    c_max = math.floor(req.c_max_frac * l)
    best = None
    grid = []
    s_floor = phi_inverse(min(p_max, 0.49))
    for c_min in _c_min_grid(req, l, c_max):
        chosen = None
        for s in s_values:
            if len(s_values) > 1 and s < s_floor - 1e-12:
                continue  # every bound is at least Phi(s)
            params, report, ok = _evaluate_point(method, req, n, l, N, q, s, c_min, c_max, p_max)
            if not ok:
                if chosen is not None:
                    break
                continue
            acc = key_accounting(params, req.qber * l, p_bit=req.qber)
            if chosen is None or acc.R == chosen[2].R:
                # R never increases with s, so equal R means a tie; keep the larger s.
                chosen = (params, report, acc)
                continue
            break
        if chosen is None:
            continue
        params, report, acc = chosen
        if keep_grid:
            grid.append({"c_min": c_min, "s": params.s, "R": acc.R, "F": acc.F})
        key = (acc.F if req.sweep_q else acc.R, params.s, -c_min)
        if best is None or key > best[0]:
            best = (key, params, report)
    return best, grid


def optimize_rate(req, keep_grid=False):
    """Largest key rate over the ``(s, c_min)`` grid for one method.

    ``s`` runs over ``[s_lo, s_hi]`` in steps of ``s_step`` (or is fixed by
    ``req.s``), ``c_min`` over multiples of ``l * c_min_step_frac``. Ties go
    to the larger ``s``, then to the smaller ``c_min``.
    """
    t_max, p_max, n, l, N, q = _base(req)
    req = req.replace(sweep_c_min=True) if not req.sweep_c_min else req
    s_values = [req.s] if (req.s is not None and not req.sweep_s) else _s_grid(req)
    best, grid = _best_for_sizes(req.method, req, n, l, N, q, t_max, p_max, s_values,
                                 keep_grid)
    if best is None:
        return _infeasible(req.method, req, n, l, t_max, p_max, "some grid point feasible",
                           q=q, N=N)
    _, params, report = best
    res = _assemble(req.method, req, params, report, p_max, t_max)
    res.grid = grid
    return res


def optimize_best(req, methods=("prop2", "thm3")):
    """Best of several methods, each optimized with :func:`optimize_rate`."""
    results = [optimize_rate(req.replace(method=m)) for m in methods]
    feasible = [r for r in results if r.feasible]
    if not feasible:
        return results[0]
    return max(feasible, key=lambda r: (r.R, r.s))


def optimize_fraction(req, keep_grid=False):
    """Largest secret fraction over the ``(q, c_min)`` grid (and ``s`` if swept).

    ``q`` runs over multiples of ``q_step`` in ``(0, 1)``; each ``q`` gives
    ``n = floor((1-q)^2 N)`` and ``l = floor(q^2 N)``.
    """
    if req.N is None:
        raise DomainError("optimize_fraction needs N")
    req = req.replace(sweep_q=True, sweep_c_min=True)
    t_max = resolve_t_max(req)
    p_max = t_max * t_max / 8.0
    s_values = [req.s] if (req.s is not None and not req.sweep_s) else _s_grid(req)
    count = int(round(1 / req.q_step))
    best = None
    grid = []
    for j in range(1, count):
        q = round(j * req.q_step, 10)
        n, l, N, _ = req.sizes(q)
        if n < 1 or l < 1:
            continue
        cand, _ = _best_for_sizes(req.method, req, n, l, N, q, t_max, p_max, s_values, False)
        if cand is None:
            continue
        key, params, report = cand
        if keep_grid:
            grid.append({"q": q, "c_min": params.c_min, "s": params.s, "F": key[0]})
        full_key = (key[0], key[1], key[2], -q)
        if best is None or full_key > best[0]:
            best = (full_key, params, report)
    if best is None:
        n, l, _, _ = req.sizes(0.5)
        return _infeasible(req.method, req, n, l, t_max, p_max, "some grid point feasible",
                           N=req.N)
    _, params, report = best
    res = _assemble(req.method, req, params, report, p_max, t_max)
    res.grid = grid
    return res


# ---------------------------------------------------------------------------
# Quick estimates and asymptotics
# ---------------------------------------------------------------------------

def rough_estimate(req):
    """Back-of-envelope key length, not a security certificate.

    ``G ~ n [1 - f h(p_bit) - h(p_sft)]`` with
    ``p_sft = ((n+l) p_hat - l p) / n`` and ``p_hat ~ p + (s/l) sqrt(l p (1-p))``.
    ``s`` is ``req.s`` or ``Phi^{-1}(P_max)``.
    """
    t_max, p_max, n, l, N, q = _base(req)
    s = req.s if req.s is not None else phi_inverse(min(p_max, 0.49))
    p = req.qber
    p_hat = p + s / l * math.sqrt(l * p * (1 - p))
    p_sft = min(((n + l) * p_hat - l * p) / n, 0.5)
    G_real = n * (1 - req.f * binary_entropy(p) - binary_entropy(p_sft))
    G = max(int(math.floor(G_real)), 0)
    denom = N if N else n + l
    return PlanResult(method=req.method, feasible=True, n=n, l=l, qber=p, t_max=t_max,
                      p_max=p_max, eps=phi_upper_tail(s), s=s, q=q, N=N, G=G,
                      R=max((G - req.r) / n, 0.0), F=max((G - req.r) / denom, 0.0),
                      estimate_only=True,
                      notes=("estimate only; not a security certificate",))


def asymptotic_rate(qber, f=1.1):
    """Key rate in the infinite-size limit, ``1 - (1 + f) h(qber)``."""
    return 1.0 - (1.0 + f) * binary_entropy(qber)


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurveSpec:
    """A sweep for :func:`emit_curve`.

    ``mode="rate"`` walks ``totals`` (values of ``n + l`` with ``n = l``);
    ``mode="fraction"`` walks ``Ns`` and optimizes ``q``. ``optimize`` turns
    on the ``(s, c_min)`` search; otherwise the plain planners run.
    ``base`` holds the remaining :class:`PlanRequest` fields.
    """

    methods: tuple = ("prop2", "thm3")
    qbers: tuple = (0.05,)
    totals: tuple = ()
    Ns: tuple = ()
    mode: str = "rate"
    optimize: bool = True
    base: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("rate", "fraction"):
            raise DomainError("mode must be 'rate' or 'fraction'")
        for m in self.methods:
            if m not in BOUND_METHODS:
                raise DomainError("unknown method %r" % (m,))


def _curve_point(spec, method, qber, size):
    base = dict(spec.base)
    if spec.mode == "rate":
        half = int(size) // 2
        req = PlanRequest(method=method, qber=qber, n=half, l=int(size) - half, q=0.5, **base)
        if spec.optimize:
            return optimize_rate(req.replace(sweep_s=True, sweep_c_min=True))
        return _PLANNERS[method](req)
    req = PlanRequest(method=method, qber=qber, N=int(size), **base)
    return optimize_fraction(req)


def emit_curve(spec):
    """Plan every ``(method, qber, size)`` point; infeasible points stay in as rows."""
    sizes = spec.totals if spec.mode == "rate" else spec.Ns
    rows = []
    for method in spec.methods:
        for qber in spec.qbers:
            for size in sizes:
                rows.append(_curve_point(spec, method, qber, size))
    return rows


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17e")


def curve_to_csv(rows):
    """Serialize plan results with the fixed column order of ``CSV_HEADER``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        c_min = r.c_min if float(r.c_min) != int(r.c_min) else int(r.c_min)
        c_max = r.c_max if float(r.c_max) != int(r.c_max) else int(r.c_max)
        w.writerow([r.method, _fmt(r.n), _fmt(r.l), _fmt(r.q), _fmt(r.qber), _fmt(r.eps),
                    _fmt(r.s), _fmt(r.D), _fmt(c_min), _fmt(c_max), _fmt(r.alpha), _fmt(r.G),
                    _fmt(r.R), _fmt(r.F), _fmt(r.p_ph_bound), _fmt(r.trace_bound),
                    _fmt(bool(r.feasible))])
    return buf.getvalue()
