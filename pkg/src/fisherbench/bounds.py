"""Closed-form lower bounds and achievable rates.

Everything here is a pure function of its arguments.  Lower bounds return
a :class:`BoundResult` whose ``value`` is the maximum of the named terms;
upper rates return the minimum over the available schemes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import stats

from .errors import DomainError, UnsupportedCaseError
from .models import (
    DiscreteDistribution,
    GaussianDiagCovariance,
    GaussianLocation,
    ProductBernoulli,
    as_simplex,
    in_restricted_simplex,
    power_sum,
    quasi_norm,
    submodel_construct,
    submodel_variance_sup,
)
from .rng import make_rng

SQRT_2PIE = math.sqrt(2.0 * math.pi * math.e)


# -- constraints ------------------------------------------------------------


@dataclass(frozen=True)
class Bits:
    b: int

    def __post_init__(self):
        if not isinstance(self.b, (int, np.integer)) or self.b < 1:
            raise DomainError("b must be a positive integer")

    @property
    def label(self):
        return f"bits={self.b}"


@dataclass(frozen=True)
class Ldp:
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")

    @property
    def label(self):
        return f"ldp={self.epsilon:g}"


ConstraintSpec = Union[Bits, Ldp]


def constraint_to_dict(c: ConstraintSpec) -> dict:
    if isinstance(c, Bits):
        return {"kind": "bits", "b": int(c.b)}
    return {"kind": "ldp", "epsilon": float(c.epsilon)}


def constraint_from_dict(data: dict) -> ConstraintSpec:
    kind = data.get("kind")
    if kind == "bits":
        return Bits(int(data["b"]))
    if kind == "ldp":
        return Ldp(float(data["epsilon"]))
    raise DomainError(f"unknown constraint {data!r}")


def ldp_factor(epsilon: float) -> float:
    """``min(e^eps, (e^eps - 1)^2)``, the LDP analogue of ``2^b``."""
    e = math.exp(epsilon)
    return min(e, (e - 1.0) ** 2)


def _rate_factor(c: ConstraintSpec) -> float:
    return float(2**c.b) if isinstance(c, Bits) else ldp_factor(c.epsilon)


# -- results ----------------------------------------------------------------


@dataclass
class BoundResult:
    value: float
    terms: dict
    regime_ok: bool
    regime_condition: str
    constants_used: dict = field(default_factory=dict)
    kind: str = "lower"
    flags: tuple = ()

    @classmethod
    def lower(cls, terms, regime_ok, regime_condition, constants_used=None, flags=()):
        return cls(max(terms.values()), dict(terms), bool(regime_ok), regime_condition,
                   dict(constants_used or {}), "lower", tuple(flags))

    @classmethod
    def upper(cls, terms, regime_ok, regime_condition, constants_used=None, flags=()):
        return cls(min(terms.values()), dict(terms), bool(regime_ok), regime_condition,
                   dict(constants_used or {}), "upper", tuple(flags))

    def to_dict(self) -> dict:
        return {
            "value": float(self.value),
            "terms": {k: float(v) for k, v in self.terms.items()},
            "regime_ok": bool(self.regime_ok),
            "regime_condition": self.regime_condition,
            "constants_used": {k: float(v) for k, v in self.constants_used.items()},
            "kind": self.kind,
            "flags": list(self.flags),
        }


class HeadConditionWarning(UserWarning):
    """The simplex point violates the ``1/2 < p_(1) < upper`` head condition."""


# -- constants --------------------------------------------------------------


def partition_constant(q: float) -> float:
    """Partition constant ``2 e^(1/q) Gamma(1/q) q^(1/q - 1)`` of the L_q max-entropy law."""
    if not q >= 1:
        raise DomainError("q must be at least 1")
    return 2.0 * math.exp(1.0 / q) * math.gamma(1.0 / q) * q ** (1.0 / q - 1.0)


def kappa(q: float) -> float:
    return (SQRT_2PIE / partition_constant(q)) ** q


def max_entropy_entropy(q: float, beta: float) -> float:
    """Differential entropy of the density ``exp(-|x|^q / beta) / lambda(q, beta)``."""
    return 1.0 / q - math.log(q / (2.0 * beta ** (1.0 / q) * math.gamma(1.0 / q)))


def max_entropy_moment(q: float, beta: float) -> float:
    """``E|X|^q`` under the same density; equals ``beta / q``."""
    return beta / q


def van_trees_lq(q: float, d: int, info, form: str = "det") -> float:
    """Generalized van Trees lower bound on ``E ||theta_hat - theta||_q^q``.

    ``info`` is the aggregate ``I_X + J(prior)`` (a ``d x d`` PSD matrix).
    ``form="det"`` gives ``kappa d / det^(q/2d)``; ``form="trace"`` gives the
    weaker ``kappa d^(1+q/2) / Tr^(q/2)``.
    """
    info = np.atleast_2d(np.asarray(info, dtype=float))
    if info.shape != (d, d):
        raise DomainError(f"info must be {d}x{d}")
    k = kappa(q)
    if form == "det":
        sign, logdet = np.linalg.slogdet(info)
        if sign <= 0:
            raise DomainError("information matrix is singular")
        return k * d * math.exp(-q / (2.0 * d) * logdet)
    if form == "trace":
        tr = float(np.trace(info))
        if not tr > 0:
            raise DomainError("information matrix has non-positive trace")
        return k * d ** (1.0 + q / 2.0) / tr ** (q / 2.0)
    raise DomainError(f"unknown form {form!r}")


def efroimovich_check_gaussian(d: int, sigma: float, tau: float):
    """Both sides of the entropic inequality for the conjugate Gaussian pair.

    Prior ``N(0, tau^2 I_d)``, one observation ``N(theta, sigma^2 I_d)``.
    Returns ``(lhs, rhs)``; they coincide in this case.
    """
    if not (sigma > 0 and tau > 0):
        raise DomainError("sigma and tau must be positive")
    post_var = 1.0 / (1.0 / sigma**2 + 1.0 / tau**2)
    h_cond = 0.5 * d * math.log(2.0 * math.pi * math.e * post_var)
    lhs = math.exp(2.0 * h_cond / d) / (2.0 * math.pi * math.e)
    info = np.eye(d) / sigma**2 + np.eye(d) / tau**2
    rhs = 1.0 / math.exp(np.linalg.slogdet(info)[1] / d)
    return lhs, rhs


# -- global lower bounds ----------------------------------------------------


def global_lower_bound(model, constraint: ConstraintSpec, n: int, q: float) -> BoundResult:
    """Global minimax lower bound on ``E||theta_hat - theta||_q^q`` over sequential protocols."""
    if n < 1:
        raise DomainError("n must be at least 1")
    k = kappa(q)
    d = model.d
    s = q / 2.0
    consts = {"kappa": k}

    if isinstance(constraint, Bits):
        b = constraint.b
        if isinstance(model, GaussianLocation):
            sig2, B = model.sigma**2, model.range_B
            terms = {"communication": d * k * (d * sig2 / (n * b)) ** s,
                     "centralized": d * k * (sig2 / n) ** s}
            ok = n * B**2 * min(b, d) >= d * sig2
            return BoundResult.lower(terms, ok, "n*B^2*min(b, d) >= d*sigma^2", consts)
        if isinstance(model, GaussianDiagCovariance):
            s4 = model.sigma_min**4
            terms = {"communication": d * k * (d * s4 / (n * b**2)) ** s,
                     "centralized": d * k * (s4 / n) ** s}
            ok = n * (model.sigma_max**2 - model.sigma_min**2) ** 2 * min(b**2, d) >= d * s4
            return BoundResult.lower(terms, ok, "n*(sigma_max^2 - sigma_min^2)^2*min(b^2, d) >= d*sigma_min^4",
                                     consts, flags=("tightness_open",))
        if isinstance(model, DiscreteDistribution) or (
            isinstance(model, ProductBernoulli) and model.domain == "simplex"
        ):
            terms = {"communication": d * k * (1.0 / (n * 2**b)) ** s,
                     "centralized": d * k * (1.0 / (n * d)) ** s}
            ok = n * min(2**b, d) >= d**2
            return BoundResult.lower(terms, ok, "n*min(2^b, d) >= d^2", consts)
        if isinstance(model, ProductBernoulli):
            terms = {"communication": d * k * (d / (n * b)) ** s,
                     "centralized": d * k * (1.0 / n) ** s}
            ok = n * min(b, d) >= d
            return BoundResult.lower(terms, ok, "n*min(b, d) >= d", consts)

    elif isinstance(constraint, Ldp):
        eps = constraint.epsilon
        if isinstance(model, GaussianLocation):
            m = min(eps, eps**2)
            terms = {"privacy": d * k * (d / (n * m)) ** s}
            ok = n * model.range_B**2 * min(eps, eps**2, d) >= d * model.sigma**2
            return BoundResult.lower(terms, ok, "n*B^2*min(eps, eps^2, d) >= d*sigma^2", consts)
        if isinstance(model, DiscreteDistribution) or (
            isinstance(model, ProductBernoulli) and model.domain == "simplex"
        ):
            m = min(ldp_factor(eps), d)
            terms = {"privacy": d * k * (1.0 / (n * m)) ** s}
            ok = n * m >= d**2
            return BoundResult.lower(terms, ok, "n*min(e^eps, (e^eps-1)^2, d) >= d^2", consts)
        if isinstance(model, ProductBernoulli):
            m = min(eps, eps**2, d)
            terms = {"privacy": d * k * (d / (n * m)) ** s}
            ok = n * m >= d
            return BoundResult.lower(terms, ok, "n*min(eps, eps^2, d) >= d", consts)

    raise UnsupportedCaseError(
        f"no global lower bound for {type(model).__name__} under {type(constraint).__name__}"
    )


# -- head-profile h-optimization ------------------------------------------


def c_delta(delta: float, rule: str = "sharp") -> float:
    """``(delta/(1+delta))^(2/(1+delta))`` (``rule="sharp"``) or ``(delta/(1+delta))^2`` (``"square"``)."""
    if not delta > 0:
        raise DomainError("delta must be positive")
    r = delta / (1.0 + delta)
    if rule == "sharp":
        return r ** (2.0 / (1.0 + delta))
    if rule == "square":
        return r**2
    raise DomainError(f"unknown C_delta rule {rule!r}")


@dataclass(frozen=True)
class HHPResult:
    """Exhaustive maxima over ``h`` and the norm terms they dominate.

    The first group concerns ``h^(1+q/2) p_(h)^(q/2)``, the second
    ``h p_(h)^(q/2)``.  ``argmax`` values are 1-based.
    """

    max_over_h: float
    argmax_h: int
    norm_bound_delta: float
    norm_bound_logd: float
    max_linear: float
    argmax_linear: int
    linear_bound_delta: float
    linear_bound_logd: float
    c_delta: float


def hhp_optimize(p, q: float, delta: float, C: float = 1.0, literal: bool = False) -> HHPResult:
    """Scan ``h`` exhaustively and evaluate both norm right-hand sides.

    The first-bullet norm term is ``C_delta ||p||_{q/(q+2)+delta}^(q/2)``;
    ``literal=True`` drops the ``q/2`` power (identical at ``q = 2``, and
    false in general for ``q > 2``).
    """
    if not q >= 1:
        raise DomainError("q must be at least 1")
    p = as_simplex(p)
    cd = c_delta(delta, "sharp")
    ps = np.sort(p)[::-1]
    h = np.arange(1, len(p) + 1, dtype=float)
    s = q / 2.0
    cubic = h ** (1.0 + s) * ps**s
    linear = h * ps**s
    logd = math.log(len(p)) if len(p) > 1 else float("inf")
    power = 1.0 if literal else s
    a = q / (q + 2.0)
    return HHPResult(
        max_over_h=float(cubic.max()),
        argmax_h=int(cubic.argmax()) + 1,
        norm_bound_delta=cd * quasi_norm(p, a + delta) ** power,
        norm_bound_logd=C * quasi_norm(p, a) ** power / logd,
        max_linear=float(linear.max()),
        argmax_linear=int(linear.argmax()) + 1,
        linear_bound_delta=cd * power_sum(p, s + delta),
        linear_bound_logd=C * power_sum(p, s) / logd,
        c_delta=cd,
    )


# -- local lower bounds -----------------------------------------------------


def local_lower_bound(
    p,
    constraint: ConstraintSpec,
    n: int,
    q: float,
    delta: float,
    C1: float = 1.0,
    C2: float = 1.0,
    c_delta_rule: str = "sharp",
    literal: bool = False,
    head_edge: str = "relaxed",
) -> BoundResult:
    """Four-term local minimax lower bound around ``p`` (b-bit or LDP).

    The rate factor is ``2^b`` for bits and ``min(e^eps, (e^eps-1)^2)`` for
    LDP.  Unspecified universal constants default to 1 and are echoed in
    ``constants_used``.  ``literal`` as in :func:`hhp_optimize`.
    """
    if not delta > 0:
        raise DomainError("delta must be positive")
    if n < 1:
        raise DomainError("n must be at least 1")
    p = as_simplex(p)
    d = len(p)
    if d < 2:
        raise DomainError("local bounds need d >= 2")
    cd = c_delta(delta, c_delta_rule)
    r = _rate_factor(constraint)
    s = q / 2.0
    a = q / (q + 2.0)
    power = 1.0 if literal else s
    logd = math.log(d)
    terms = {
        "delta_quantized": cd * quasi_norm(p, a + delta) ** power / (n * r) ** s,
        "logd_quantized": C1 * quasi_norm(p, a) ** power / ((n * r) ** s * logd),
        "delta_centralized": cd * power_sum(p, s + delta) / n**s,
        "logd_centralized": C2 * power_sum(p, s) / (n**s * logd),
    }
    half = quasi_norm(p, 0.5)
    n_min = d**3 * logd / half
    flags = []
    if not in_restricted_simplex(p, head_edge):
        flags.append(f"head_condition_failed:{head_edge}")
        warnings.warn(f"p violates the head condition ({head_edge} edge)", HeadConditionWarning, stacklevel=2)
    consts = {
        "C_delta": cd,
        "C_1": C1,
        "C_2": C2,
        "rate_factor": r,
        "neighborhood_B": math.sqrt(half / (d * r)),
    }
    return BoundResult.lower(terms, n >= n_min, "n >= d^3*log(d)/||p||_{1/2}", consts, flags)


def explicit_local_bound(p, constraint: ConstraintSpec, n: int, q: float, h: int | None = None) -> BoundResult:
    """Fully explicit local bound from the frozen-tail sub-model.

    For each admissible ``h`` (or the given one) the box radius is the
    largest admissible ``B = p_(h)/3``, the per-client information is capped
    by ``min(sup Tr I_X, rate_factor * (6h + 3/(2 p_(h))))`` and the trace form
    of the generalized van Trees bound is applied to the ``h-1`` free
    coordinates with the cosine prior.  No unspecified constants enter.
    """
    p = as_simplex(p)
    d = len(p)
    r = _rate_factor(constraint)
    ps = np.sort(p)[::-1]
    hs = [h] if h is not None else [k for k in range(2, d + 1) if ps[k - 1] > 0]
    terms = {}
    for hh in hs:
        sub = submodel_construct(p, hh)
        B = ps[hh - 1] / 3.0
        var_sup = submodel_variance_sup(sub, B)
        theta_lo = ps[1:hh] - B
        head_lo = ps[0] - (hh - 1) * B
        tr_sup = float(np.sum(1.0 / theta_lo) + (hh - 1) / head_lo)
        per_client = min(tr_sup, r * var_sup)
        m = hh - 1
        total = n * per_client + m * math.pi**2 / B**2
        terms[f"h={hh}"] = float(kappa(q) * m ** (1.0 + q / 2.0) / total ** (q / 2.0))
    return BoundResult.lower(terms, True, "p_(1) >= 1/2 (checked)", {"kappa": kappa(q), "rate_factor": r})


# -- cosine prior -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CosinePrior:
    """Product of squared-cosine densities on ``center +- radius_B``."""

    center: np.ndarray
    radius_B: float

    @property
    def dim(self):
        return len(self.center)

    def density(self, theta) -> np.ndarray:
        z = (np.asarray(theta, dtype=float) - self.center) / self.radius_B
        inside = np.abs(z) <= 1.0
        per = np.where(inside, np.cos(0.5 * math.pi * z) ** 2 / self.radius_B, 0.0)
        return per.prod(axis=-1)

    def sample(self, seed, size=None) -> np.ndarray:
        rng = make_rng(seed)
        shape = (self.dim,) if size is None else (size, self.dim)
        # stats.cosine lives on [-pi, pi] with density (1 + cos x)/(2 pi)
        z = stats.cosine.ppf(rng.random(shape)) / math.pi
        return self.center + self.radius_B * z

    def fisher_trace(self) -> float:
        return self.dim * math.pi**2 / self.radius_B**2


def cosine_prior_make(center, radius_B: float) -> CosinePrior:
    if not radius_B > 0:
        raise DomainError("radius_B must be positive")
    return CosinePrior(np.atleast_1d(np.asarray(center, dtype=float)).copy(), float(radius_B))


def cosine_prior_sample(prior: CosinePrior, seed, size=None) -> np.ndarray:
    return prior.sample(seed, size)


def cosine_prior_fisher(prior: CosinePrior) -> float:
    return prior.fisher_trace()


# -- achievable rates -------------------------------------------------------


def lq_from_l2(risk_l2: float, d: int, q: float) -> float:
    """Hoelder conversion ``d^(1-q/2) * risk_l2^(q/2)`` for ``1 <= q <= 2``."""
    if not 1 <= q <= 2:
        raise DomainError("Hoelder conversion needs 1 <= q <= 2")
    return d ** (1.0 - q / 2.0) * risk_l2 ** (q / 2.0)


def _gaussian_abs_moment(q):
    return 2 ** (q / 2.0) * math.gamma((q + 1.0) / 2.0) / math.sqrt(math.pi)


def _onebit_l2(d, b, n, spread):
    k = min(b, d)
    per_coord = (n * k) // d
    if per_coord < 1:
        return float("inf")
    return d * spread / per_coord


def discrete_worst_l2(d: int, constraint: ConstraintSpec, n: int) -> dict:
    """Worst-case squared-L2 risk of the implemented discrete schemes, by scheme."""
    if isinstance(constraint, Bits):
        nb = math.ceil(d / (2**constraint.b - 1))
        n_min = n // nb
        return {"grouping": (1.0 - 1.0 / d) / n_min if n_min else float("inf")}
    e = math.exp(constraint.epsilon)
    keep, other = e / (e + d - 1), 1.0 / (e + d - 1)
    krr = (1.0 - 1.0 / d) / (n * (keep - other) ** 2)
    f = 1.0 / (1.0 + math.exp(constraint.epsilon / 2.0))
    P = f + (1.0 - 2.0 * f) / d
    rappor = d * P * (1.0 - P) / (n * (1.0 - 2.0 * f) ** 2)
    return {"k_rr": krr, "rappor": rappor}


def achievable_rate(model, constraint: ConstraintSpec, n: int, q: float) -> BoundResult:
    """Worst-case L_q risk achieved by the implemented non-interactive schemes.

    For ``q <= 2`` the squared-L2 risk is converted with Hoelder; for
    ``q > 2`` the Gaussian-moment approximation of a sample-split estimator
    is reported and flagged ``order_only``.
    """
    if not q >= 1:
        raise DomainError("q must be at least 1")
    d = model.d
    flags = []
    if isinstance(model, DiscreteDistribution):
        l2 = discrete_worst_l2(d, constraint, n)
    elif isinstance(constraint, Bits) and isinstance(model, GaussianLocation):
        clip = model.range_B + 6.0 * model.sigma
        l2 = {"onebit": _onebit_l2(d, constraint.b, n, clip**2)}
        flags.append("clipping_bias_ignored")
    elif isinstance(constraint, Bits) and isinstance(model, ProductBernoulli):
        l2 = {"onebit": _onebit_l2(d, constraint.b, n, 0.25)}
    elif isinstance(constraint, Bits) and isinstance(model, GaussianDiagCovariance):
        clip = 16.0 * model.sigma_max**2
        l2 = {"onebit_square": _onebit_l2(d, constraint.b, n, clip**2 / 4.0)}
        flags += ["tightness_open", "clipping_bias_ignored"]
    else:
        raise UnsupportedCaseError(
            f"no implemented scheme for {type(model).__name__} under {type(constraint).__name__}"
        )
    if q <= 2:
        terms = {name: lq_from_l2(v, d, q) for name, v in l2.items()}
    else:
        mq = _gaussian_abs_moment(q)
        terms = {name: d * mq * (v / d) ** (q / 2.0) for name, v in l2.items()}
        flags.append("order_only")
    consts = {f"l2_{name}": v for name, v in l2.items()}
    return BoundResult.upper(terms, True, "none", consts, flags)


def reference_rate_l2(p, n: int, rate_factor: float) -> BoundResult:
    """Leading term ``||p||_{1/2} / (n r)`` of the two-round interactive L2 rate."""
    p = as_simplex(p)
    v = quasi_norm(p, 0.5) / (n * rate_factor)
    return BoundResult(v, {"leading": v}, True, "asymptotic in n", {"o_n": 0.0}, "reference", ("o_n_dropped",))


def reference_rate_l1(p, n: int, rate_factor: float) -> BoundResult:
    """Leading term ``sqrt(||p||_{1/3} / (n r))`` of the two-round interactive L1 rate."""
    p = as_simplex(p)
    v = math.sqrt(quasi_norm(p, 1.0 / 3.0) / (n * rate_factor))
    return BoundResult(v, {"leading": v}, True, "asymptotic in n", {"o_n": 0.0}, "reference", ("o_n_dropped",))
