"""Command-line entry point: ``fisherbench {bound,simulate,sweep,verify}``.

Exit codes: 0 success, 1 malformed input, 2 unsupported case, 3 regime
violation (``bound`` only, unless ``--allow-out-of-regime``).  For
``verify`` the exit code is 0 iff every property passes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .bounds import Bits, Ldp, global_lower_bound, local_lower_bound
from .errors import FisherBenchError, UnsupportedCaseError
from .models import (
    DiscreteDistribution,
    GaussianDiagCovariance,
    GaussianLocation,
    ProductBernoulli,
    model_from_dict,
)
from .simulate import ExperimentConfig, build_scheme, monte_carlo_risk, table_rows, to_csv, to_json
from .verify import SUITE_ALIASES, SUITES, run_suite

EXIT_OK, EXIT_USAGE, EXIT_UNSUPPORTED, EXIT_REGIME = 0, 1, 2, 3
SCHEMA_VERSION = 1
CONFIG_KEYS = {
    "schema", "model", "theta", "constraint", "bits", "ldp", "scheme",
    "n", "q", "trials", "seed", "project", "threads", "format", "output",
}
DEFAULT_SEED = 20240601


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument errors exit with status 1 instead of argparse's 2 (reserved for unsupported cases)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _add_model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=["discrete", "gaussian-location", "gaussian-cov", "product-bernoulli"])
    g.add_argument("--d", type=int)
    g.add_argument("--sigma", type=float, help="noise std (gaussian-location)")
    g.add_argument("--range-B", dest="range_B", type=float, help="mean range (gaussian-location)")
    g.add_argument("--sigma-min", dest="sigma_min", type=float)
    g.add_argument("--sigma-max", dest="sigma_max", type=float)
    g.add_argument("--domain", choices=["unit-cube", "simplex"], help="product-bernoulli parameter set")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fisherbench", description="Lower bounds and simulations for constrained distributed estimation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("bound", help="evaluate a global or local lower bound")
    _add_model_flags(b)
    c = b.add_mutually_exclusive_group(required=True)
    c.add_argument("--bits", type=int)
    c.add_argument("--ldp", type=float, metavar="EPS")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--q", type=float, required=True)
    b.add_argument("--p", type=_floats, help="comma-separated simplex point; selects the local bound")
    b.add_argument("--delta", type=float, default=0.5)
    b.add_argument("--c1", type=float, default=1.0)
    b.add_argument("--c2", type=float, default=1.0)
    b.add_argument("--c-delta-rule", choices=["sharp", "square"], default="sharp")
    b.add_argument("--literal", action="store_true", help="use the norm terms without the q/2 power")
    b.add_argument("--allow-out-of-regime", action="store_true")

    for name, help_ in (("simulate", "Monte Carlo risk for one constraint"),
                        ("sweep", "Cartesian sweep over n, b or eps, and q")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON config file (\"schema\": 1)")
        _add_model_flags(s)
        nargs = "+" if name == "sweep" else None
        c = s.add_mutually_exclusive_group()
        c.add_argument("--bits", type=int, nargs=nargs)
        c.add_argument("--ldp", type=float, nargs=nargs, metavar="EPS")
        s.add_argument("--theta", type=_floats, help="comma-separated parameter (default: a model-specific centre)")
        s.add_argument("--scheme", help="scheme name (default: chosen from model and constraint)")
        s.add_argument("--n", type=int, nargs="+")
        s.add_argument("--q", type=float, nargs="+")
        s.add_argument("--trials", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--project", action="store_true", default=None)
        s.add_argument("--threads", type=int, help="worker threads (env FISHERBENCH_THREADS)")
        s.add_argument("--format", choices=["csv", "json"])
        s.add_argument("--output", "-o", help="output path (default stdout)")

    v = sub.add_parser("verify", help="run property suites")
    v.add_argument("suite", choices=list(SUITES) + list(SUITE_ALIASES) + ["all"])
    v.add_argument("--seed", type=int)
    v.add_argument("--instances", type=int)
    return parser


# -- model and constraint assembly ------------------------------------------


def _model_from_flags(args, base: dict | None = None):
    spec = dict(base or {})
    if getattr(args, "model", None):
        if spec.get("variant") != args.model:
            spec = {"variant": args.model}
    for key in ("d", "sigma", "range_B", "sigma_min", "sigma_max", "domain"):
        val = getattr(args, key, None)
        if val is not None:
            spec[key] = val
    if "variant" not in spec:
        raise UsageError("a model is required (--model or config \"model\")")
    if "d" not in spec:
        raise UsageError("the model dimension is required (--d)")
    return model_from_dict(spec)


def _constraint(bits, ldp):
    if bits is not None:
        return Bits(int(bits))
    if ldp is not None:
        return Ldp(float(ldp))
    raise UsageError("a constraint is required (--bits or --ldp)")


def default_theta(model) -> np.ndarray:
    d = model.d
    if isinstance(model, DiscreteDistribution):
        return np.full(d, 1.0 / d)
    if isinstance(model, GaussianLocation):
        return np.zeros(d)
    if isinstance(model, GaussianDiagCovariance):
        return np.full(d, 0.5 * (model.sigma_min**2 + model.sigma_max**2))
    if isinstance(model, ProductBernoulli):
        return np.full(d, 0.5 if model.domain == "unit-cube" else 1.0 / (d + 1))
    raise UsageError(f"no default parameter for {type(model).__name__}")


def _print_json(obj, stream=None):
    (stream or sys.stdout).write(json.dumps(obj, indent=2, sort_keys=False) + "\n")


# -- commands ---------------------------------------------------------------


def cmd_bound(args) -> int:
    constraint = _constraint(args.bits, args.ldp)
    if args.p is not None:
        p = np.asarray(args.p, dtype=float)
        res = local_lower_bound(p, constraint, args.n, args.q, args.delta, C1=args.c1, C2=args.c2,
                                c_delta_rule=args.c_delta_rule, literal=args.literal)
        calc = "local"
    else:
        model = _model_from_flags(args)
        res = global_lower_bound(model, constraint, args.n, args.q)
        calc = "global"
    out = {"calculator": calc, "constraint": constraint.label, "n": args.n, "q": args.q}
    out.update(res.to_dict())
    _print_json(out)
    if not res.regime_ok and not args.allow_out_of_regime:
        print(f"regime violated: {res.regime_condition}", file=sys.stderr)
        return EXIT_REGIME
    return EXIT_OK


def load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    unknown = sorted(set(cfg) - CONFIG_KEYS)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    if cfg.get("schema") != SCHEMA_VERSION:
        raise UsageError(f"config needs \"schema\": {SCHEMA_VERSION}")
    return cfg


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _threads(args, cfg) -> int:
    if args.threads is not None:
        return args.threads
    if "threads" in cfg:
        return int(cfg["threads"])
    env = os.environ.get("FISHERBENCH_THREADS")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"FISHERBENCH_THREADS must be an integer, got {env!r}") from exc
    return 1


def _resolve(args, sweep: bool) -> dict:
    """Merge config file and flags (flags win) into concrete experiment settings."""
    cfg = load_config(args.config)
    model = _model_from_flags(args, cfg.get("model"))
    cons = cfg.get("constraint")
    bits, ldp = cfg.get("bits"), cfg.get("ldp")
    if isinstance(cons, dict):
        kind = cons.get("kind")
        bits = cons.get("b") if kind == "bits" else None
        ldp = cons.get("epsilon") if kind == "ldp" else None
    if args.bits is not None:
        bits, ldp = args.bits, None
    if args.ldp is not None:
        bits, ldp = None, args.ldp
    if bits is None and ldp is None:
        raise UsageError("a constraint is required (--bits or --ldp)")
    values = _as_list(bits if bits is not None else ldp)
    if not sweep and len(values) != 1:
        raise UsageError("simulate takes one constraint; use sweep for grids")
    constraints = [_constraint(v, None) if bits is not None else _constraint(None, v) for v in values]
    theta = args.theta if args.theta is not None else cfg.get("theta")
    theta = default_theta(model) if theta in (None, "default", "uniform") else np.asarray(theta, dtype=float)
    n_grid = args.n or _as_list(cfg.get("n", [1000]))
    q_list = args.q or _as_list(cfg.get("q", [2.0]))
    return {
        "model": model,
        "constraints": constraints,
        "theta": theta,
        "scheme": args.scheme or cfg.get("scheme"),
        "n_grid": [int(n) for n in n_grid],
        "q_list": [float(q) for q in q_list],
        "trials": int(args.trials if args.trials is not None else cfg.get("trials", 100)),
        "seed": int(args.seed if args.seed is not None else cfg.get("seed", DEFAULT_SEED)),
        "project": bool(args.project if args.project is not None else cfg.get("project", False)),
        "threads": _threads(args, cfg),
        "format": args.format or cfg.get("format", "csv"),
        "output": args.output or cfg.get("output"),
    }


def run_experiments(settings: dict) -> tuple[list, dict]:
    rows = []
    for constraint in settings["constraints"]:
        scheme = build_scheme(settings["model"], constraint, settings["scheme"])
        config = ExperimentConfig(settings["model"], settings["theta"], scheme, settings["n_grid"],
                                  settings["q_list"], settings["trials"], settings["seed"], settings["project"])
        rows += table_rows(config, constraint, monte_carlo_risk(config, settings["threads"]))
    header = {"base_seed": settings["seed"], "trials": settings["trials"], "seed_derivation": "philox(seedseq(base_seed,[trial]))"}
    return rows, header


def cmd_experiment(args, sweep: bool) -> int:
    settings = _resolve(args, sweep)
    rows, header = run_experiments(settings)
    text = to_json(rows, header) if settings["format"] == "json" else to_csv(rows, header)
    if settings["output"]:
        with open(settings["output"], "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = run_suite(args.suite, seed=args.seed, instances=args.instances)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} properties passed")
    return EXIT_OK if not failed else EXIT_USAGE


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bound":
            return cmd_bound(args)
        if args.command in ("simulate", "sweep"):
            return cmd_experiment(args, args.command == "sweep")
        return cmd_verify(args)
    except UnsupportedCaseError as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (UsageError, FisherBenchError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
