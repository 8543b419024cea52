"""Command-line entry point: ``finitekey {plan,curve,simulate,verify}``.

Every subcommand reads a JSON config (``--config``), writes JSON or CSV to
``--out`` (stdout when omitted) and exits with

    0  success
    1  usage error (bad flag, unknown or missing config key, invalid value)
    2  infeasible plan
    3  verification failure

The seed is taken from ``--seed``, else from the ``FINITEKEY_SEED``
environment variable, else from the config's ``seed`` key, else 0.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .bounds import BOUND_METHODS, DEFAULT_MAX_ORACLE_SIZE
from .estimation import ProtocolParams
from .mathcore import DomainError, PreconditionError
from .planner import (
    CurveSpec,
    PlanRequest,
    curve_to_csv,
    emit_curve,
    optimize_best,
    optimize_fraction,
    optimize_rate,
    plan,
    rough_estimate,
)
from .protocol_sim import SessionConfig, records_to_csv, run_adversarial_batch, run_batch
from .verify import VerifyConfig, run_verification

__all__ = ["main", "build_parser", "UsageError", "SEED_ENV"]

SEED_ENV = "FINITEKEY_SEED"

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_VERIFY = 0, 1, 2, 3

_PLAN_MODES = ("plan", "optimize", "best", "fraction", "rough")
_PLAN_KEYS = {f.name for f in dataclasses.fields(PlanRequest)} | {"mode", "methods"}
_CURVE_KEYS = {f.name for f in dataclasses.fields(CurveSpec)}
_SIM_KEYS = {"n", "l", "eps", "s", "D", "c_min", "c_max", "f", "r", "N", "q", "qber",
             "trials", "distill", "adversarial_k", "csv", "seed"}
_VERIFY_KEYS = {f.name for f in dataclasses.fields(VerifyConfig)} - {"max_oracle_size"}


class UsageError(Exception):
    """Bad command-line or config input; maps to exit code 1."""


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError("cannot read config %s: %s" % (path, exc)) from exc
    except json.JSONDecodeError as exc:
        raise UsageError("config %s is not valid JSON: %s" % (path, exc)) from exc
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    return data


def _check_keys(cfg, allowed, required=()):
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise UsageError("unknown config key(s): %s" % ", ".join(unknown))
    missing = [k for k in required if k not in cfg]
    if missing:
        raise UsageError("missing required config key(s): %s" % ", ".join(missing))


def _method(name):
    m = str(name).lower()
    if m not in BOUND_METHODS:
        raise UsageError("unknown method %r (choose from %s)" % (name, ", ".join(BOUND_METHODS)))
    return m


def _resolve_seed(args, cfg):
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env, 0)
        except ValueError as exc:
            raise UsageError("%s must be an integer" % SEED_ENV) from exc
    return int(cfg.get("seed", 0))


def _write(args, text):
    if args.out is None:
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def cmd_plan(args):
    cfg = _load_config(args.config)
    _check_keys(cfg, _PLAN_KEYS, required=("qber",))
    cfg = dict(cfg)
    mode = cfg.pop("mode", "plan")
    if mode not in _PLAN_MODES:
        raise UsageError("mode must be one of %s" % ", ".join(_PLAN_MODES))
    methods = tuple(_method(m) for m in cfg.pop("methods", ("prop2", "thm3")))
    if mode == "best":
        cfg.setdefault("method", methods[0])
    elif "method" not in cfg:
        raise UsageError("missing required config key(s): method")
    cfg["method"] = _method(cfg["method"])
    if "t_max" not in cfg and "total_budget" not in cfg:
        raise UsageError("missing required config key(s): t_max or total_budget")
    req = PlanRequest(**cfg)
    if mode == "plan":
        res = plan(req)
    elif mode == "optimize":
        res = optimize_rate(req.replace(sweep_s=True, sweep_c_min=True))
    elif mode == "best":
        res = optimize_best(req.replace(sweep_s=True, sweep_c_min=True), methods=methods)
    elif mode == "fraction":
        res = optimize_fraction(req)
    else:
        res = rough_estimate(req)
    _write(args, _dumps(res.to_dict()))
    if not res.feasible:
        print("infeasible: failed check(s): %s" % ", ".join(res.failed), file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_curve(args):
    cfg = _load_config(args.config)
    _check_keys(cfg, _CURVE_KEYS)
    cfg = dict(cfg)
    for key in ("methods", "qbers", "totals", "Ns"):
        if key in cfg:
            cfg[key] = tuple(cfg[key])
    if "methods" in cfg:
        cfg["methods"] = tuple(_method(m) for m in cfg["methods"])
    # base carries the PlanRequest fields that the sweep itself does not set
    allowed = {f.name for f in dataclasses.fields(PlanRequest)} - {"method", "qber", "n", "l", "N"}
    bad = sorted(set(cfg.get("base", {})) - allowed)
    if bad:
        raise UsageError("invalid key(s) in base: %s" % ", ".join(bad))
    rows = emit_curve(CurveSpec(**cfg))
    _write(args, curve_to_csv(rows))
    return EXIT_OK


def cmd_simulate(args):
    cfg = _load_config(args.config)
    _check_keys(cfg, _SIM_KEYS, required=("n", "l", "qber"))
    seed = _resolve_seed(args, cfg)
    pkeys = {"n", "l", "eps", "s", "D", "c_min", "c_max", "f", "r", "N", "q"}
    pargs = {k: v for k, v in cfg.items() if k in pkeys}
    if "eps" not in pargs and "s" not in pargs:
        raise UsageError("missing required config key(s): eps or s")
    params = ProtocolParams(**pargs)
    sc = SessionConfig(params=params, qber=cfg["qber"], seed=seed,
                       trials=int(cfg.get("trials", 1)), distill=bool(cfg.get("distill", True)))
    keep = "csv" in cfg
    ks = cfg.get("adversarial_k")
    if ks is None:
        summary = run_batch(sc, keep_records=keep)
        out = dict(summary.to_dict(), seed=seed, mode="channel")
        records = summary.records
    else:
        ks = [ks] if isinstance(ks, int) else list(ks)
        batches = [run_adversarial_batch(sc, k, keep_records=keep) for k in ks]
        out = {"seed": seed, "mode": "adversarial", "batches": [b.to_dict() for b in batches]}
        records = [r for b in batches for r in b.records]
    if keep:
        with open(cfg["csv"], "w", encoding="utf-8", newline="") as fh:
            fh.write(records_to_csv(records))
    _write(args, _dumps(out))
    return EXIT_OK


def cmd_verify(args):
    cfg = _load_config(args.config)
    _check_keys(cfg, _VERIFY_KEYS)
    cfg = {k: tuple(v) if isinstance(v, list) else v for k, v in cfg.items()}
    cfg["max_oracle_size"] = args.max_oracle_size
    report = run_verification(VerifyConfig(**cfg))
    _write(args, _dumps(report.to_dict()))
    if args.verbose:
        for line in report.lines():
            print(line, file=sys.stderr)
    if not report.passed:
        for c in report.failures:
            print("violated: %s at %s (margin %.4g)" % (c.name, c.witness, c.worst_margin),
                  file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


_COMMANDS = {"plan": cmd_plan, "curve": cmd_curve, "simulate": cmd_simulate,
             "verify": cmd_verify}


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("seed must be an integer") from exc
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def build_parser():
    parser = argparse.ArgumentParser(
        prog="finitekey",
        description="Finite-key BB84 planning, simulation and bound verification.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "plan": "choose security parameters and report the key length (JSON)",
        "curve": "sweep sizes and QBERs, one CSV row per point",
        "simulate": "run seeded protocol sessions and summarize them (JSON)",
        "verify": "check every bound against exact hypergeometric sums",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON parameter file")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--seed", type=_u64, help="64-bit seed (overrides %s)" % SEED_ENV)
        p.add_argument("--max-oracle-size", type=int, default=DEFAULT_MAX_ORACLE_SIZE,
                       help="largest n + l the exact oracle accepts")
        p.add_argument("-v", "--verbose", action="store_true",
                       help="print a per-check summary to stderr")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, PreconditionError, TypeError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
