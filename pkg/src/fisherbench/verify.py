"""Randomized property suites behind ``fisherbench verify``.

Each suite returns a list of :class:`PropertyCheck`; a property passes when
its largest observed violation is within tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import (
    efroimovich_check_gaussian,
    hhp_optimize,
    kappa,
    max_entropy_entropy,
    max_entropy_moment,
    partition_constant,
)
from .channels import (
    CONTRACTION_TOL,
    FiniteChannel,
    grouping_quantizer,
    k_rr,
    ldp_epsilon,
    rappor,
    verify_contraction,
)
from .errors import DomainError
from .models import DiscreteDistribution, ProductBernoulli, support_size
from .rng import derive_seed, make_rng

SUITES = ("constants", "efroimovich", "contraction", "head-profile")
# older spelling kept for existing scripts
SUITE_ALIASES = {"lemma11": "head-profile"}
CONSTANT_TOL = 1e-10
EFROIMOVICH_TOL = 1e-9

Q_GRID = (1.0, 1.5, 2.0, 3.0, 4.0)
MOMENT_GRID = (0.5, 1.0, 2.0)


@dataclass
class PropertyCheck:
    name: str
    passed: bool
    max_violation: float
    instances: int
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: instances={self.instances} max_violation={self.max_violation:.3e}{extra}"


def _check(name, violations, tol, detail=""):
    v = np.asarray(violations, dtype=float)
    worst = float(np.max(v)) if v.size else 0.0
    return PropertyCheck(name, bool(worst <= tol), worst, int(v.size), detail)


# -- constants --------------------------------------------------------------


def suite_constants(seed: int = 0, instances: int | None = None) -> list:
    sqrt_2pie = math.sqrt(2.0 * math.pi * math.e)
    checks = [
        _check("partition_constant(2) = sqrt(2 pi e)", [abs(partition_constant(2.0) - sqrt_2pie)], CONSTANT_TOL),
        _check("kappa(1) = sqrt(pi/(2e))", [abs(kappa(1.0) - math.sqrt(math.pi / (2.0 * math.e)))], CONSTANT_TOL),
        _check("kappa(2) = 1", [abs(kappa(2.0) - 1.0)], CONSTANT_TOL),
    ]
    # the maximizer with E|X|^q = D has beta = q D and entropy log(C_ME(q) D^(1/q))
    viol = []
    for q in Q_GRID:
        for moment in MOMENT_GRID:
            beta = q * moment
            viol.append(abs(max_entropy_moment(q, beta) - moment))
            viol.append(abs(max_entropy_entropy(q, beta) - math.log(partition_constant(q) * moment ** (1.0 / q))))
    checks.append(_check("max-entropy identity on the q x moment grid", viol, CONSTANT_TOL))
    return checks


# -- Efroimovich ------------------------------------------------------------


def efroimovich_grid(count: int = 20):
    """Deterministic ``(d, sigma, tau)`` combinations."""
    ds = (1, 2, 3, 5, 8)
    sigmas = (0.5, 1.0, 2.0, 0.3)
    taus = (1.0, 2.0, 0.7, 10.0, 0.25)
    combos = [(d, s, t) for d in ds for s in sigmas for t in taus]
    step = max(1, len(combos) // count)
    return combos[::step][:count]


def suite_efroimovich(seed: int = 0, instances: int | None = None) -> list:
    grid = efroimovich_grid(instances or 20)
    viol = []
    for d, s, t in grid:
        lhs, rhs = efroimovich_check_gaussian(d, s, t)
        viol.append(abs(lhs - rhs) / max(1.0, abs(rhs)))
    return [_check("conjugate Gaussian equality", viol, EFROIMOVICH_TOL)]


# -- contraction ------------------------------------------------------------


def random_model(rng, max_symbols: int = 8):
    """Random discrete or product-Bernoulli model with at most ``max_symbols`` outcomes, and ``theta``."""
    if rng.random() < 0.75:
        d = int(rng.integers(2, max_symbols + 1))
        p = rng.dirichlet(np.full(d, 1.0))
        # keep the point interior
        p = 0.98 * p + 0.02 / d
        return DiscreteDistribution(d), p / p.sum()
    k = int(rng.integers(1, int(math.log2(max_symbols)) + 1))
    return ProductBernoulli(k), rng.uniform(0.05, 0.95, size=k)


def random_bits_channel(rng, n_inputs: int, b: int) -> FiniteChannel:
    n_out = int(rng.integers(1, 2**b + 1))
    kind = rng.random()
    if kind < 0.3:
        # deterministic quantizer
        k = np.zeros((n_out, n_inputs))
        k[rng.integers(0, n_out, size=n_inputs), np.arange(n_inputs)] = 1.0
    elif kind < 0.4 and n_inputs >= 2:
        return grouping_quantizer(n_inputs, min(b, max(1, math.ceil(math.log2(n_inputs)))), 0)
    else:
        alpha = rng.choice([0.1, 0.5, 1.0, 5.0])
        k = rng.dirichlet(np.full(n_out, alpha), size=n_inputs).T
    return FiniteChannel(k / k.sum(axis=0))


def random_ldp_channel(rng, n_inputs: int, epsilon: float) -> FiniteChannel:
    """Random kernel mixed with the uniform kernel until it is ``epsilon``-LDP."""
    kind = rng.random()
    if kind < 0.15:
        return k_rr(n_inputs, epsilon)
    if kind < 0.25 and n_inputs <= 8:
        return rappor(n_inputs, epsilon).to_finite()
    n_out = int(rng.integers(2, 9))
    raw = rng.dirichlet(np.full(n_out, rng.choice([0.2, 1.0, 3.0])), size=n_inputs).T
    unif = np.full_like(raw, 1.0 / n_out)
    lo, hi = 0.0, 1.0
    if ldp_epsilon(FiniteChannel(raw)) <= epsilon:
        return FiniteChannel(raw)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if ldp_epsilon(FiniteChannel((1 - mid) * raw + mid * unif)) <= epsilon:
            hi = mid
        else:
            lo = mid
    # the tightest mixture found above sits just inside the constraint
    return FiniteChannel((1 - hi) * raw + hi * unif)


def suite_contraction(seed: int = 7, instances: int | None = None) -> list:
    """Bit and LDP contraction plus data processing on random instances."""
    count = instances or 500
    slack_bits, psd_bits, slack_ldp, psd_ldp, eps_excess = [], [], [], [], []
    for i in range(count):
        rng = make_rng(derive_seed(seed, 0, i))
        b = (1, 2, 3)[i % 3]
        model, theta = random_model(rng)
        ch = random_bits_channel(rng, support_size(model), b)
        rep = verify_contraction(ch, model, theta)
        cap = min(rep.input_trace, 2.0**b * rep.lambda_max)
        slack_bits.append(max(0.0, rep.trace_IW - cap))
        psd_bits.append(max(0.0, -rep.psd_gap))
    for i in range(count):
        rng = make_rng(derive_seed(seed, 1, i))
        eps = (0.5, 1.0, 2.0)[i % 3]
        model, theta = random_model(rng)
        ch = random_ldp_channel(rng, support_size(model), eps)
        eps_excess.append(max(0.0, ldp_epsilon(ch) - eps))
        rep = verify_contraction(ch, model, theta)
        e = math.exp(eps)
        cap = min(rep.input_trace, min(e, (e - 1.0) ** 2) * rep.lambda_max)
        slack_ldp.append(max(0.0, rep.trace_IW - cap))
        psd_ldp.append(max(0.0, -rep.psd_gap))
    return [
        _check("b-bit trace contraction", slack_bits, CONTRACTION_TOL),
        _check("b-bit data processing (I_X - I_W PSD)", psd_bits, CONTRACTION_TOL),
        _check("LDP trace contraction", slack_ldp, CONTRACTION_TOL),
        _check("LDP data processing (I_X - I_W PSD)", psd_ldp, CONTRACTION_TOL),
        _check("generated LDP channels meet their epsilon", eps_excess, 1e-12),
    ]


# -- head profile -----------------------------------------------------------


def random_simplex_point(rng, d_max: int = 2000) -> np.ndarray:
    d = int(rng.integers(2, d_max + 1))
    kind = int(rng.integers(0, 5))
    if kind == 0:
        return rng.dirichlet(np.ones(d))
    if kind == 1:
        return rng.dirichlet(np.full(d, 0.05))
    if kind == 2:
        p = np.arange(1.0, d + 1) ** (-rng.uniform(0.3, 3.0))
    elif kind == 3:
        p = rng.dirichlet(np.full(d, 20.0))
    else:
        # sparse support with zero coordinates
        p = np.zeros(d)
        k = int(rng.integers(1, d + 1))
        p[rng.choice(d, size=k, replace=False)] = rng.dirichlet(np.ones(k))
    return p / p.sum()


def suite_head_profile(seed: int = 11, instances: int | None = None, literal: bool = False) -> list:
    """Exhaustive ``max_h`` against the ``C_delta`` norm terms of both bullets."""
    count = instances or 200
    first, second = [], []
    implied_c = math.inf
    for i in range(count):
        rng = make_rng(derive_seed(seed, i))
        p = random_simplex_point(rng)
        for q in (1.0, 2.0, 4.0):
            for delta in (0.1, 0.5):
                r = hhp_optimize(p, q, delta, literal=literal)
                first.append(max(0.0, r.norm_bound_delta / r.max_over_h - 1.0))
                second.append(max(0.0, r.linear_bound_delta / r.max_linear - 1.0))
                if len(p) > 1:
                    implied_c = min(implied_c, r.max_over_h / r.norm_bound_logd, r.max_linear / r.linear_bound_logd)
    label = "literal" if literal else "with the q/2 norm power"
    return [
        _check(f"first bullet, C_delta branch ({label})", first, 0.0),
        _check("second bullet, C_delta branch", second, 0.0),
        PropertyCheck("log(d) branch: largest admissible C", True, 0.0, len(first), f"C <= {implied_c:.4g}"),
    ]


SUITE_FUNCS = {
    "constants": suite_constants,
    "efroimovich": suite_efroimovich,
    "contraction": suite_contraction,
    "head-profile": suite_head_profile,
}


def run_suite(name: str, seed: int | None = None, instances: int | None = None) -> list:
    names = SUITES if name == "all" else (name,)
    out = []
    for n in names:
        n = SUITE_ALIASES.get(n, n)
        if n not in SUITE_FUNCS:
            raise DomainError(f"unknown suite {n!r}")
        fn = SUITE_FUNCS[n]
        out += fn(instances=instances) if seed is None else fn(seed=seed, instances=instances)
    return out

