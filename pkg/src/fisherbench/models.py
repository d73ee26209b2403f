"""Parametric families, score functions and exact Fisher information.

Four families are supported: Gaussian location, Gaussian diagonal
covariance, discrete distributions on ``{0, ..., d-1}`` and product
Bernoulli.  Discrete symbols are 0-based throughout.

The discrete family is parametrized by the chart ``(p_0, ..., p_{d-2})``
with ``p_{d-1} = 1 - sum`` dependent, but every function accepts the full
probability vector.  :class:`SubModel` implements the frozen-tail
sub-family used by the local lower bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar, Union

import numpy as np

from .errors import (
    CapacityError,
    DegenerateModelError,
    DomainError,
    PreconditionError,
    SingularityError,
)
from .rng import make_rng

SINGULAR_TOL = 1e-12
SIMPLEX_TOL = 1e-12
MAX_BERNOULLI_ENUM = 20

# Upper edge of the restricted simplex: the strict edge is 2/3, the relaxed edge 5/6.
HEAD_UPPER = {"strict": 2.0 / 3.0, "relaxed": 5.0 / 6.0}


def _check_dim(d):
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise DomainError(f"dimension must be a positive integer, got {d!r}")


@dataclass(frozen=True)
class GaussianLocation:
    """``X ~ N(theta, sigma^2 I_d)`` with ``theta`` in ``[-range_B, range_B]^d``."""

    d: int
    sigma: float = 1.0
    range_B: float = 1.0
    variant: ClassVar[str] = "gaussian-location"

    def __post_init__(self):
        _check_dim(self.d)
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")
        if not self.range_B > 0:
            raise DomainError("range_B must be positive")

    @property
    def param_dim(self):
        return self.d

    def contains(self, theta):
        return theta.shape == (self.d,) and bool(np.all(np.abs(theta) <= self.range_B))


@dataclass(frozen=True)
class GaussianDiagCovariance:
    """``X ~ N(0, diag(theta))``; each variance lies in ``[sigma_min^2, sigma_max^2]``.

    ``sigma_min`` and ``sigma_max`` are standard deviations.
    """

    d: int
    sigma_min: float
    sigma_max: float
    variant: ClassVar[str] = "gaussian-cov"

    def __post_init__(self):
        _check_dim(self.d)
        if not 0 < self.sigma_min < self.sigma_max:
            raise DomainError("need 0 < sigma_min < sigma_max")

    @property
    def param_dim(self):
        return self.d

    def contains(self, theta):
        return (
            theta.shape == (self.d,)
            and bool(np.all(theta >= self.sigma_min**2 * (1 - 1e-12)))
            and bool(np.all(theta <= self.sigma_max**2 * (1 + 1e-12)))
        )


@dataclass(frozen=True)
class DiscreteDistribution:
    """Categorical distribution on ``d`` symbols; the parameter is a point of the simplex."""

    d: int
    variant: ClassVar[str] = "discrete"

    def __post_init__(self):
        _check_dim(self.d)

    @property
    def param_dim(self):
        return self.d - 1

    def contains(self, theta):
        return theta.shape == (self.d,) and is_simplex(theta)


@dataclass(frozen=True)
class ProductBernoulli:
    """``X ~ prod_i Bern(theta_i)``; ``domain`` is ``"unit-cube"`` or ``"simplex"``."""

    d: int
    domain: str = "unit-cube"
    variant: ClassVar[str] = "product-bernoulli"

    def __post_init__(self):
        _check_dim(self.d)
        if self.domain not in ("unit-cube", "simplex"):
            raise DomainError(f"unknown domain {self.domain!r}")

    @property
    def param_dim(self):
        return self.d

    def contains(self, theta):
        if theta.shape != (self.d,) or np.any(theta < 0) or np.any(theta > 1):
            return False
        return self.domain == "unit-cube" or is_simplex(theta)


ModelSpec = Union[GaussianLocation, GaussianDiagCovariance, DiscreteDistribution, ProductBernoulli]
_VARIANTS = {cls.variant: cls for cls in (GaussianLocation, GaussianDiagCovariance, DiscreteDistribution, ProductBernoulli)}


def model_to_dict(model: ModelSpec) -> dict:
    out = {"variant": model.variant, "d": int(model.d)}
    if isinstance(model, GaussianLocation):
        out.update(sigma=model.sigma, range_B=model.range_B)
    elif isinstance(model, GaussianDiagCovariance):
        out.update(sigma_min=model.sigma_min, sigma_max=model.sigma_max)
    elif isinstance(model, ProductBernoulli):
        out.update(domain=model.domain)
    return out


def model_from_dict(data: dict) -> ModelSpec:
    data = dict(data)
    try:
        cls = _VARIANTS[data.pop("variant")]
    except KeyError as exc:
        raise DomainError(f"unknown or missing model variant in {data!r}") from exc
    try:
        return cls(**data)
    except TypeError as exc:
        raise DomainError(str(exc)) from exc


# -- simplex helpers --------------------------------------------------------


def is_simplex(p, tol=SIMPLEX_TOL) -> bool:
    p = np.asarray(p, dtype=float)
    return p.ndim == 1 and bool(np.all(p >= 0)) and abs(p.sum() - 1.0) <= tol


def as_simplex(p) -> np.ndarray:
    """Validate and return ``p`` as a float array on the probability simplex."""
    p = np.asarray(p, dtype=float)
    if not is_simplex(p):
        raise DomainError("vector is not on the probability simplex")
    return p


def in_restricted_simplex(p, edge="relaxed") -> bool:
    """Head condition ``1/2 < max(p) < upper`` of the local bounds.

    ``edge="strict"`` uses the upper edge 2/3, ``edge="relaxed"`` uses 5/6.
    """
    top = float(np.max(p))
    return 0.5 < top < HEAD_UPPER[edge]


def quasi_norm(p, a: float) -> float:
    """``(sum_i p_i^a)^(1/a)``, also for ``0 < a < 1``; zero entries contribute nothing."""
    if not a > 0:
        raise DomainError("quasi-norm exponent must be positive")
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(np.sum(p**a) ** (1.0 / a))


def power_sum(p, a: float) -> float:
    """``sum_i p_i^a`` over the non-zero entries."""
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(np.sum(p**a))


# -- parameter validation ---------------------------------------------------


def check_theta(model: ModelSpec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if not model.contains(theta):
        raise DomainError(f"parameter outside the domain of {model.variant}")
    return theta


def _require_interior(values, what="parameter"):
    if np.any(np.asarray(values) < SINGULAR_TOL):
        raise SingularityError(f"{what} has a coordinate on the boundary")


# -- sampling ---------------------------------------------------------------


def sample_batch(model: ModelSpec, theta, size: int, rng) -> np.ndarray:
    """Draw ``size`` i.i.d. observations; rows are observations.

    Gaussian models return ``(size, d)`` floats, the discrete model returns
    ``(size,)`` integer symbols and product Bernoulli returns ``(size, d)``
    ``uint8`` bit vectors.
    """
    theta = check_theta(model, theta)
    rng = make_rng(rng)
    if isinstance(model, GaussianLocation):
        return theta + model.sigma * rng.standard_normal((size, model.d))
    if isinstance(model, GaussianDiagCovariance):
        return np.sqrt(theta) * rng.standard_normal((size, model.d))
    if isinstance(model, DiscreteDistribution):
        cdf = np.cumsum(theta)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, rng.random(size), side="right")
        return np.minimum(idx, model.d - 1)
    if isinstance(model, ProductBernoulli):
        return (rng.random((size, model.d)) < theta).astype(np.uint8)
    raise TypeError(f"unsupported model {model!r}")


def sample(model: ModelSpec, theta, seed):
    """Draw a single observation, deterministic in ``seed``."""
    x = sample_batch(model, theta, 1, make_rng(seed))[0]
    return int(x) if isinstance(model, DiscreteDistribution) else x


# -- sub-model --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SubModel:
    """Frozen-tail sub-family around a simplex point.

    The ``d - h`` smallest coordinates of ``base_p`` are frozen; the free
    parameters are the sorted coordinates 2..h (``theta``, length ``h-1``)
    and the top sorted coordinate absorbs the remaining mass.
    """

    base_p: np.ndarray
    h: int
    sort_perm: np.ndarray
    theta: np.ndarray
    _tail_mass: float = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_tail_mass", float(self.sorted_p[self.h :].sum()))

    @property
    def d(self):
        return len(self.base_p)

    @property
    def param_dim(self):
        return self.h - 1

    @property
    def sorted_p(self) -> np.ndarray:
        return self.base_p[self.sort_perm]

    @property
    def frozen_tail(self) -> np.ndarray:
        return self.sorted_p[self.h :]

    def head_mass(self, theta=None) -> float:
        """The dependent top coordinate ``1 - sum(theta) - tail``."""
        theta = self.theta if theta is None else np.asarray(theta, dtype=float)
        return float(1.0 - theta.sum() - self._tail_mass)

    def sorted_vector(self, theta=None) -> np.ndarray:
        theta = self.theta if theta is None else np.asarray(theta, dtype=float)
        return np.concatenate(([self.head_mass(theta)], theta, self.frozen_tail))

    def full_vector(self, theta=None) -> np.ndarray:
        """Map a sub-model point back to a simplex vector in the original order."""
        out = np.empty(self.d)
        out[self.sort_perm] = self.sorted_vector(theta)
        return out

    def contains(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.h - 1,):
            return False
        v = self.sorted_vector(theta)
        return bool(np.all(v >= 0)) and abs(v.sum() - 1.0) <= SIMPLEX_TOL


def submodel_construct(p, h: int) -> SubModel:
    """Build the sub-model that frees the ``h`` largest coordinates of ``p``."""
    p = as_simplex(p)
    d = len(p)
    if not isinstance(h, (int, np.integer)) or not 1 <= h <= d:
        raise DomainError(f"h must lie in [1, {d}], got {h!r}")
    perm = np.argsort(-p, kind="stable")
    if p[perm[h - 1]] <= 0:
        raise DomainError("top-h sorted coordinates must be strictly positive")
    return SubModel(base_p=p.copy(), h=int(h), sort_perm=perm, theta=p[perm[1:h]].copy())


def _sub_theta(sub: SubModel, theta):
    if sub.h == 1:
        raise DegenerateModelError("sub-model with h=1 has no free parameters")
    theta = sub.theta if theta is None else np.asarray(theta, dtype=float)
    if not sub.contains(theta):
        raise DomainError("parameter outside the sub-model")
    _require_interior(np.concatenate(([sub.head_mass(theta)], theta)))
    return theta


def trace_surrogate(sub: SubModel) -> float:
    """``sum_{i<=h} 1/p_(i)``, the simplified trace of the sub-model information."""
    return float(np.sum(1.0 / sub.sorted_p[: sub.h]))


def submodel_variance_sup(sub: SubModel, radius_B: float) -> float:
    """Uniform bound ``6h + 3/(2 p_(h))`` on ``max_u Var<u, S>`` over the box neighbourhood."""
    if sub.h == 1:
        raise DegenerateModelError("sub-model with h=1 has no free parameters")
    ph = float(sub.sorted_p[sub.h - 1])
    limit = ph / 3.0
    if not 0 < radius_B <= limit:
        raise PreconditionError(f"radius_B must lie in (0, p_(h)/3 = {limit:.6g}]", limit=limit)
    if sub.sorted_p[0] < 0.5:
        raise PreconditionError("head condition p_(1) >= 1/2 fails")
    return 6.0 * sub.h + 1.5 / ph


def pointwise_variance_bound(sub: SubModel, theta=None) -> float:
    """``h/theta_1 + 1/min_j theta_j`` at a single sub-model point."""
    theta = _sub_theta(sub, theta)
    return sub.h / sub.head_mass(theta) + 1.0 / float(theta.min())


def neighborhood_sample(sub: SubModel, radius_B: float, size: int, rng) -> np.ndarray:
    """Uniform draws from the box ``theta(p) + [-B, B]^(h-1)``."""
    rng = make_rng(rng)
    return sub.theta + rng.uniform(-radius_B, radius_B, size=(size, sub.h - 1))


# -- finite laws ------------------------------------------------------------


def support_size(model) -> int:
    if isinstance(model, (DiscreteDistribution, SubModel)):
        return model.d
    if isinstance(model, ProductBernoulli):
        if model.d > MAX_BERNOULLI_ENUM:
            raise CapacityError(f"2^{model.d} outcomes exceed the enumeration cap")
        return 2**model.d
    raise CapacityError(f"{type(model).__name__} has no finite alphabet")


def bernoulli_bits(d: int) -> np.ndarray:
    """``(2^d, d)`` matrix whose row ``s`` holds the bits of symbol ``s`` (bit j = coordinate j)."""
    s = np.arange(2**d)[:, None]
    return ((s >> np.arange(d)) & 1).astype(np.uint8)


def finite_law(model, theta=None):
    """Return ``(pmf, grad)`` over the full finite support.

    ``grad[x, j]`` is the derivative of ``f(x; theta)`` in parameter ``j``.
    """
    if isinstance(model, SubModel):
        theta = _sub_theta(model, theta)
        pmf = model.full_vector(theta)
        grad = np.zeros((model.d, model.h - 1))
        cols = np.arange(model.h - 1)
        grad[model.sort_perm[1 : model.h], cols] = 1.0
        grad[model.sort_perm[0], :] = -1.0
        return pmf, grad
    theta = check_theta(model, theta)
    if isinstance(model, DiscreteDistribution):
        if model.d == 1:
            raise DegenerateModelError("discrete model with d=1 has no free parameters")
        grad = np.zeros((model.d, model.d - 1))
        grad[np.arange(model.d - 1), np.arange(model.d - 1)] = 1.0
        grad[-1, :] = -1.0
        return theta.copy(), grad
    if isinstance(model, ProductBernoulli):
        support_size(model)
        bits = bernoulli_bits(model.d).astype(float)
        per = np.where(bits == 1, theta, 1.0 - theta)
        pmf = per.prod(axis=1)
        sign = 2.0 * bits - 1.0
        grad = np.stack(
            [sign[:, j] * np.delete(per, j, axis=1).prod(axis=1) for j in range(model.d)], axis=1
        )
        return pmf, grad
    raise CapacityError(f"{type(model).__name__} has no finite alphabet")


# -- score and Fisher information -------------------------------------------


def log_density(model: ModelSpec, theta, x):
    """Log-density of the Gaussian families (vectorized over leading axes of ``x``)."""
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    if isinstance(model, GaussianLocation):
        z = (x - theta) / model.sigma
        return -0.5 * np.sum(z**2, axis=-1) - model.d * math.log(model.sigma * math.sqrt(2 * math.pi))
    if isinstance(model, GaussianDiagCovariance):
        return -0.5 * np.sum(np.log(2 * math.pi * theta) + x**2 / theta, axis=-1)
    raise TypeError("log_density is provided for the Gaussian families")


def score(model, theta, x) -> np.ndarray:
    """Gradient of ``log f(x; theta)`` in the model's parameters.

    ``x`` may carry leading batch axes.  For :class:`SubModel` ``theta`` is
    the free block ``(theta_2, ..., theta_h)`` (``None`` uses the base point)
    and the result has length ``h - 1``.
    """
    if isinstance(model, SubModel):
        theta = _sub_theta(model, theta)
        x = np.asarray(x)
        if not np.issubdtype(x.dtype, np.integer) or np.any((x < 0) | (x >= model.d)):
            raise DomainError("observation outside the symbol alphabet")
        rank = np.empty(model.d, dtype=int)
        rank[model.sort_perm] = np.arange(model.d)
        table = np.zeros((model.d, model.h - 1))
        table[0, :] = -1.0 / model.head_mass(theta)
        table[np.arange(1, model.h), np.arange(model.h - 1)] = 1.0 / theta
        return table[rank[x]]

    theta = check_theta(model, theta)
    if isinstance(model, GaussianLocation):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (model.d,):
            raise DomainError("observation has the wrong shape")
        return (x - theta) / model.sigma**2
    if isinstance(model, GaussianDiagCovariance):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (model.d,):
            raise DomainError("observation has the wrong shape")
        _require_interior(theta)
        return -0.5 / theta + x**2 / (2 * theta**2)
    if isinstance(model, DiscreteDistribution):
        if model.d == 1:
            raise DegenerateModelError("discrete model with d=1 has no free parameters")
        x = np.asarray(x)
        if not np.issubdtype(x.dtype, np.integer) or np.any((x < 0) | (x >= model.d)):
            raise DomainError("observation outside the symbol alphabet")
        _require_interior(theta)
        table = np.zeros((model.d, model.d - 1))
        table[np.arange(model.d - 1), np.arange(model.d - 1)] = 1.0 / theta[:-1]
        table[-1, :] = -1.0 / theta[-1]
        return table[x]
    if isinstance(model, ProductBernoulli):
        x = np.asarray(x)
        if x.shape[-1:] != (model.d,) or np.any((x != 0) & (x != 1)):
            raise DomainError("observation must be a bit vector of length d")
        _require_interior(np.concatenate((theta, 1 - theta)))
        return np.where(x == 1, 1.0 / theta, -1.0 / (1.0 - theta))
    raise TypeError(f"unsupported model {model!r}")


def fisher_information(model, theta=None) -> np.ndarray:
    """Exact Fisher information matrix at ``theta``.

    Closed forms for the four families; the sub-model is summed over its
    ``d``-symbol support.
    """
    if isinstance(model, SubModel):
        pmf, grad = finite_law(model, theta)
        mask = pmf > 0
        return (grad[mask].T / pmf[mask]) @ grad[mask]
    theta = check_theta(model, theta)
    if isinstance(model, GaussianLocation):
        return np.eye(model.d) / model.sigma**2
    if isinstance(model, GaussianDiagCovariance):
        _require_interior(theta)
        return np.diag(1.0 / (2.0 * theta**2))
    if isinstance(model, DiscreteDistribution):
        if model.d == 1:
            raise DegenerateModelError("discrete model with d=1 has no free parameters")
        _require_interior(theta)
        return np.diag(1.0 / theta[:-1]) + 1.0 / theta[-1]
    if isinstance(model, ProductBernoulli):
        _require_interior(np.concatenate((theta, 1 - theta)))
        return np.diag(1.0 / (theta * (1.0 - theta)))
    raise TypeError(f"unsupported model {model!r}")
