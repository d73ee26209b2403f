"""Monte Carlo risk engine and comparison tables.

Trial ``t`` draws everything from ``derive_seed(base_seed, t)``, so a trial's
estimate is the same whichever worker runs it and results are merged by
trial index.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import (
    Bits,
    ConstraintSpec,
    Ldp,
    achievable_rate,
    global_lower_bound,
)
from .errors import DomainError, UnsupportedCaseError
from .models import (
    DiscreteDistribution,
    GaussianDiagCovariance,
    GaussianLocation,
    ProductBernoulli,
)
from .protocols import (
    OneBitScheme,
    Scheme,
    make_gaussian_onebit_scheme,
    make_gaussian_variance_scheme,
    make_grouping_scheme,
    make_identity_scheme,
    make_krr_scheme,
    make_rappor_scheme,
    project_simplex,
    run,
)
from .rng import derive_seed

CSV_COLUMNS = (
    "model", "constraint", "param", "scheme", "n", "q", "trials",
    "empirical_risk", "stderr", "lower_bound", "upper_rate", "ratio", "regime_ok",
)


@dataclass
class ExperimentConfig:
    """One model and scheme evaluated over a grid of ``n`` and ``q``.

    ``theta`` is either one parameter vector or a list of probe parameters;
    ``param_labels`` names them in output tables.
    """

    model: object
    theta: object
    scheme: Scheme
    n_grid: list
    q_list: list
    trials: int
    base_seed: int = 0
    project: bool = False
    param_labels: list | None = None

    def __post_init__(self):
        if self.trials < 2:
            raise DomainError("trials must be at least 2 for a standard error")
        if not self.q_list or any(not q >= 1 for q in self.q_list):
            raise DomainError("every q must be at least 1")
        if not self.n_grid or any(int(n) < 1 for n in self.n_grid):
            raise DomainError("every n must be at least 1")

    @property
    def thetas(self) -> list:
        theta = np.asarray(self.theta, dtype=float)
        return [theta] if theta.ndim == 1 else list(theta)

    @property
    def labels(self) -> list:
        if self.param_labels is not None:
            return list(self.param_labels)
        k = len(self.thetas)
        return ["theta"] if k == 1 else [f"theta{i}" for i in range(k)]


@dataclass
class RiskEstimate:
    param: str
    n: int
    q: float
    trials: int
    mean_risk: float
    stderr: float
    mean_risk_projected: float | None = None
    stderr_projected: float | None = None
    losses: np.ndarray = field(default=None, repr=False)


def lq_loss(est, theta, q) -> float:
    return float(np.sum(np.abs(np.asarray(est) - np.asarray(theta)) ** q))


def _trial(config: ExperimentConfig, t: int):
    """Losses of trial ``t`` with shape ``(params, n_grid, q_list, raw/projected)``."""
    thetas = config.thetas
    out = np.full((len(thetas), len(config.n_grid), len(config.q_list), 2), np.nan)
    rng = np.random.Generator(np.random.Philox(derive_seed(config.base_seed, t)))
    for a, theta in enumerate(thetas):
        for b, n in enumerate(config.n_grid):
            est, _ = run(config.scheme, config.model, theta, int(n), rng)
            proj = project_simplex(est) if config.project else None
            for c, q in enumerate(config.q_list):
                out[a, b, c, 0] = lq_loss(est, theta, q)
                if proj is not None:
                    out[a, b, c, 1] = lq_loss(proj, theta, q)
    return out


def _summary(x):
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(len(x)))


def monte_carlo_risk(config: ExperimentConfig, threads: int = 1) -> list:
    """Empirical ``E||est - theta||_q^q`` for every (param, n, q), in that nesting order."""
    if threads < 1:
        raise DomainError("threads must be at least 1")
    trials = range(config.trials)
    if threads == 1:
        per_trial = [_trial(config, t) for t in trials]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_trial = list(pool.map(lambda t: _trial(config, t), trials))
    losses = np.stack(per_trial)
    table = []
    for a, label in enumerate(config.labels):
        for b, n in enumerate(config.n_grid):
            for c, q in enumerate(config.q_list):
                raw = losses[:, a, b, c, 0]
                mean, se = _summary(raw)
                pm = ps = None
                if config.project:
                    pm, ps = _summary(losses[:, a, b, c, 1])
                table.append(RiskEstimate(label, int(n), float(q), config.trials, mean, se, pm, ps, raw.copy()))
    return table


def compare(risks, bound_fn, upper_fn=None) -> list:
    """Pair each risk with ``bound_fn(n, q)``; ratios below one are flagged, not rejected."""
    rows = []
    for r in risks:
        bound = bound_fn(r.n, r.q)
        lower = float(bound.value) if bound is not None else 0.0
        regime_ok = bool(bound.regime_ok) if bound is not None else False
        if lower <= 0.0:
            regime_ok = False
        ratio = r.mean_risk / lower if lower > 0 else math.inf
        row = {"n": r.n, "q": r.q, "empirical": r.mean_risk, "lower_bound": lower,
               "ratio": ratio, "regime_ok": regime_ok, "below_bound": ratio < 1.0}
        if upper_fn is not None:
            up = upper_fn(r.n, r.q)
            row["upper_rate"] = float(up.value) if up is not None else math.nan
        rows.append(row)
    return rows


# -- default schemes and bound lookups --------------------------------------


def build_scheme(model, constraint: ConstraintSpec, name: str | None = None) -> Scheme:
    """Default scheme for a (model, constraint) pair, or the one named by ``name``."""
    if name == "identity":
        return make_identity_scheme(model)
    if isinstance(model, DiscreteDistribution):
        if isinstance(constraint, Bits):
            if name not in (None, "grouping"):
                raise UnsupportedCaseError(f"scheme {name!r} does not fit a bit constraint")
            return make_grouping_scheme(model.d, constraint.b)
        if name in (None, "rappor"):
            return make_rappor_scheme(model.d, constraint.epsilon)
        if name in ("krr", "k-rr", "k_rr"):
            return make_krr_scheme(model.d, constraint.epsilon)
        raise UnsupportedCaseError(f"unknown scheme {name!r}")
    if isinstance(constraint, Ldp):
        raise UnsupportedCaseError(f"no locally private scheme for {type(model).__name__}")
    if name not in (None, "onebit", "onebit-square"):
        raise UnsupportedCaseError(f"unknown scheme {name!r}")
    if isinstance(model, GaussianLocation):
        return make_gaussian_onebit_scheme(model.d, constraint.b, sigma=model.sigma, range_B=model.range_B)
    if isinstance(model, GaussianDiagCovariance):
        return make_gaussian_variance_scheme(model.d, constraint.b, sigma_max=model.sigma_max)
    if isinstance(model, ProductBernoulli):
        return OneBitScheme(model.d, constraint.b, 0.0, 1.0)
    raise UnsupportedCaseError(f"no scheme for {type(model).__name__}")


def _safe(fn, *args):
    try:
        return fn(*args)
    except UnsupportedCaseError:
        return None


def table_rows(config: ExperimentConfig, constraint: ConstraintSpec, risks) -> list:
    """Rows with exactly :data:`CSV_COLUMNS`, bounds from the global calculator and achievable rates."""
    model = config.model
    rows = []
    cmp = compare(
        risks,
        lambda n, q: _safe(global_lower_bound, model, constraint, n, q),
        lambda n, q: _safe(achievable_rate, model, constraint, n, q),
    )
    for r, c in zip(risks, cmp):
        rows.append({
            "model": model.variant,
            "constraint": constraint.label,
            "param": r.param,
            "scheme": config.scheme.name,
            "n": r.n,
            "q": r.q,
            "trials": r.trials,
            "empirical_risk": r.mean_risk,
            "stderr": r.stderr,
            "lower_bound": c["lower_bound"],
            "upper_rate": c["upper_rate"],
            "ratio": c["ratio"],
            "regime_ok": c["regime_ok"],
        })
    return rows


# -- output -----------------------------------------------------------------


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(rows, header: dict | None = None) -> str:
    """CSV text; ``header`` becomes a leading ``#`` comment line (seed, trials, ...)."""
    buf = io.StringIO()
    if header:
        buf.write("# " + " ".join(f"{k}={_fmt(v)}" for k, v in header.items()) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def to_json(rows, header: dict | None = None) -> str:
    """JSON mirror of :func:`to_csv`; non-finite floats are written as strings."""
    doc = {"header": header or {}, "columns": list(CSV_COLUMNS),
           "rows": [{c: _json_value(row[c]) for c in CSV_COLUMNS} for row in rows]}
    return json.dumps(doc, indent=2) + "\n"
