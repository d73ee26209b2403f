"""Local channels: b-bit quantizers, LDP randomizers and their Fisher information.

A channel maps one client's observation to a message symbol.  Finite
channels are stored as a column-stochastic kernel ``W[y, x]``.  Channels on
continuous inputs (the stochastic one-bit quantizer) and the factored
RAPPOR randomizer expose the same ``apply`` / ``apply_batch`` surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bounds import Bits, ConstraintSpec, Ldp, constraint_from_dict, constraint_to_dict, ldp_factor
from .errors import CapacityError, ConstraintViolation, DomainError
from .models import MAX_BERNOULLI_ENUM, finite_law, fisher_information
from .rng import make_rng

STOCHASTIC_TOL = 1e-12
LDP_TOL = 1e-12
CONTRACTION_TOL = 1e-9


def _check_claim(constraint, n_outputs, epsilon_fn):
    if constraint is None:
        return
    if isinstance(constraint, Bits):
        if n_outputs > 2**constraint.b:
            raise ConstraintViolation(f"{n_outputs} output symbols exceed 2^{constraint.b}")
    elif isinstance(constraint, Ldp):
        eps = epsilon_fn()
        if eps > constraint.epsilon + LDP_TOL:
            raise ConstraintViolation(f"channel is {eps:.6g}-LDP, claimed {constraint.epsilon:.6g}")


@dataclass(frozen=True, eq=False)
class FiniteChannel:
    """Column-stochastic kernel ``kernel[y, x] = W(y | x)``."""

    kernel: np.ndarray
    claimed_constraint: ConstraintSpec | None = None
    _cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=float)
        if k.ndim != 2 or k.size == 0:
            raise DomainError("kernel must be a non-empty matrix")
        if np.any(k < 0) or np.any(np.abs(k.sum(axis=0) - 1.0) > STOCHASTIC_TOL):
            raise DomainError("kernel columns must be probability vectors")
        object.__setattr__(self, "kernel", k)
        cdf = np.cumsum(k, axis=0)
        cdf[-1] = 1.0
        object.__setattr__(self, "_cdf", cdf)

    @property
    def n_inputs(self):
        return self.kernel.shape[1]

    @property
    def n_outputs(self):
        return self.kernel.shape[0]

    @property
    def constraint(self):
        return self.claimed_constraint

    def check_constraint(self, constraint=None):
        """Raise :class:`ConstraintViolation` unless the (given or claimed) constraint holds."""
        _check_claim(constraint or self.claimed_constraint, self.n_outputs, lambda: ldp_epsilon(self))

    def apply(self, x, seed) -> int:
        return int(self.apply_batch(np.array([x]), make_rng(seed))[0])

    def apply_batch(self, xs, rng) -> np.ndarray:
        xs = np.asarray(xs)
        if not np.issubdtype(xs.dtype, np.integer) or np.any((xs < 0) | (xs >= self.n_inputs)):
            raise DomainError("input symbol outside the channel alphabet")
        rng = make_rng(rng)
        u = rng.random(xs.shape)
        out = np.empty(xs.shape, dtype=np.int64)
        for x in np.unique(xs):
            sel = xs == x
            out[sel] = np.searchsorted(self._cdf[:, x], u[sel], side="right")
        return np.minimum(out, self.n_outputs - 1)

    def to_dict(self) -> dict:
        return {
            "alphabet_in": self.n_inputs,
            "alphabet_out": self.n_outputs,
            "kernel": self.kernel.ravel().tolist(),
            "constraint": None if self.claimed_constraint is None else constraint_to_dict(self.claimed_constraint),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FiniteChannel":
        kernel = np.asarray(data["kernel"], dtype=float).reshape(data["alphabet_out"], data["alphabet_in"])
        c = data.get("constraint")
        return cls(kernel, None if c is None else constraint_from_dict(c))


@dataclass(frozen=True)
class ContextualChannel:
    """Selects a channel from ``(client index, transcript so far, shared seed)``."""

    selector: Callable
    claimed_constraint: ConstraintSpec | None = None

    def __call__(self, i, prefix, shared_seed):
        return self.selector(i, prefix, shared_seed)


def apply(channel, x, seed):
    """Pass one symbol through ``channel``; deterministic in ``seed``."""
    return channel.apply(x, seed)


# -- analysis ---------------------------------------------------------------


def ldp_epsilon(channel) -> float:
    """Smallest ``eps`` with ``W(y|x) <= e^eps W(y|x')`` for all ``y, x, x'``.

    Rows that are identically zero are ignored (0/0 counts as 1); a row
    mixing zero and non-zero entries makes the channel non-private (``inf``).
    """
    k = channel.kernel if isinstance(channel, FiniteChannel) else channel.to_finite().kernel
    hi = k.max(axis=1)
    lo = k.min(axis=1)
    live = hi > 0
    if np.any(lo[live] <= 0):
        return math.inf
    if not np.any(live):
        return 0.0
    return float(max(0.0, np.max(np.log(hi[live] / lo[live]))))


def output_fisher(channel, model, theta=None) -> np.ndarray:
    """Exact Fisher information of the channel output ``Y``.

    ``P(y) = sum_x W(y|x) f(x; theta)`` and
    ``I_W = sum_{P(y) > 0} grad P(y) grad P(y)^T / P(y)``.
    """
    if not isinstance(channel, FiniteChannel):
        channel = channel.to_finite()
    pmf, grad = finite_law(model, theta)
    if channel.n_inputs != len(pmf):
        raise DomainError(f"channel expects {channel.n_inputs} input symbols, model has {len(pmf)}")
    py = channel.kernel @ pmf
    dpy = channel.kernel @ grad
    live = py > 1e-300
    return (dpy[live].T / py[live]) @ dpy[live]


@dataclass(frozen=True)
class ContractionReport:
    trace_IW: float
    input_trace: float
    lambda_max: float
    cap_bits: float
    cap_ldp: float
    holds: bool
    slack: float
    psd_gap: float

    def to_dict(self):
        return {k: float(v) if not isinstance(v, bool) else v for k, v in self.__dict__.items()}


def verify_contraction(channel, model, theta=None) -> ContractionReport:
    """Check the b-bit and LDP Fisher-information contraction inequalities.

    The bit cap uses ``b = ceil(log2 |Y|)`` and the LDP cap the measured
    ``eps`` of the channel, so both apply to every channel.  ``psd_gap`` is
    the smallest eigenvalue of ``I_X - I_W``.
    """
    if not isinstance(channel, FiniteChannel):
        channel = channel.to_finite()
    ix = fisher_information(model, theta)
    iw = output_fisher(channel, model, theta)
    lam = float(np.linalg.eigvalsh(ix)[-1])
    tr_w = float(np.trace(iw))
    tr_x = float(np.trace(ix))
    b = max(1, math.ceil(math.log2(channel.n_outputs))) if channel.n_outputs > 1 else 0
    cap_bits = 2.0**b * lam
    eps = ldp_epsilon(channel)
    cap_ldp = ldp_factor(eps) * lam if math.isfinite(eps) else math.inf
    bound = min(tr_x, cap_bits, cap_ldp)
    slack = bound - tr_w
    gap = float(np.linalg.eigvalsh(ix - iw)[0])
    return ContractionReport(tr_w, tr_x, lam, cap_bits, cap_ldp, bool(slack >= -CONTRACTION_TOL), slack, gap)


# -- constructors -----------------------------------------------------------


def identity_channel(d: int) -> FiniteChannel:
    return FiniteChannel(np.eye(d), Bits(max(1, math.ceil(math.log2(d)))) if d > 1 else None)


def constant_channel(d: int, n_outputs: int = 1) -> FiniteChannel:
    """Every input maps to symbol 0."""
    k = np.zeros((n_outputs, d))
    k[0] = 1.0
    return FiniteChannel(k, Bits(max(1, math.ceil(math.log2(n_outputs)))) if n_outputs > 1 else Bits(1))


def binary_symmetric(flip: float) -> FiniteChannel:
    return FiniteChannel(np.array([[1 - flip, flip], [flip, 1 - flip]]), Bits(1))


def grouping_blocks(d: int, b: int) -> list:
    """Partition ``range(d)`` into consecutive blocks of at most ``2^b - 1`` symbols."""
    if b < 1:
        raise DomainError("b must be at least 1")
    size = 2**b - 1
    return [np.arange(s, min(s + size, d)) for s in range(0, d, size)]


def grouping_quantizer(d: int, b: int, block_assignment: int) -> FiniteChannel:
    """Report the position of ``x`` inside the assigned block, or the extra symbol "other"."""
    blocks = grouping_blocks(d, b)
    block = blocks[block_assignment]
    k = np.zeros((len(block) + 1, d))
    k[np.arange(len(block)), block] = 1.0
    others = np.setdiff1d(np.arange(d), block)
    k[len(block), others] = 1.0
    if len(others) == 0:
        k = k[:-1]
    ch = FiniteChannel(k, Bits(b))
    ch.check_constraint()
    return ch


def k_rr(d: int, epsilon: float) -> FiniteChannel:
    """k-ary randomized response: keep ``x`` w.p. ``e^eps/(e^eps+d-1)``, else a uniform other symbol."""
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    e = math.exp(epsilon)
    keep, other = e / (e + d - 1), 1.0 / (e + d - 1)
    k = np.full((d, d), other)
    np.fill_diagonal(k, keep)
    ch = FiniteChannel(k, Ldp(epsilon))
    ch.check_constraint()
    return ch


@dataclass(frozen=True)
class OneBitQuantizer:
    """Clip ``x`` to ``[lo, hi]`` and emit ``Bernoulli((x - lo)/(hi - lo))``."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise DomainError("need lo < hi")

    constraint = Bits(1)
    n_outputs = 2

    def check_constraint(self, constraint=None):
        _check_claim(constraint or self.constraint, self.n_outputs, lambda: math.inf)

    def prob_one(self, x):
        return (np.clip(x, self.lo, self.hi) - self.lo) / (self.hi - self.lo)

    def apply(self, x, seed) -> int:
        return int(self.apply_batch(np.array([x], dtype=float), make_rng(seed))[0])

    def apply_batch(self, xs, rng) -> np.ndarray:
        rng = make_rng(rng)
        xs = np.asarray(xs, dtype=float)
        return (rng.random(xs.shape) < self.prob_one(xs)).astype(np.int64)

    def debias(self, bits):
        """Unbiased estimate of the clipped input from a bit."""
        return self.lo + (self.hi - self.lo) * np.asarray(bits, dtype=float)

    def kernel_at(self, x):
        """``(P(0 | x), P(1 | x))``."""
        p1 = float(self.prob_one(x))
        return 1.0 - p1, p1


def one_bit_stochastic_quantizer(lo: float, hi: float) -> OneBitQuantizer:
    return OneBitQuantizer(float(lo), float(hi))


@dataclass(frozen=True)
class RapporChannel:
    """One-hot encoding followed by independent bit flips with probability ``1/(1+e^(eps/2))``.

    Messages are the flipped bit vectors packed into integers (bit ``j`` is
    coordinate ``j``), so ``d <= 62``.
    """

    d: int
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if not 1 <= self.d <= 62:
            raise CapacityError("RAPPOR messages are packed into 64-bit integers; need d <= 62")

    @property
    def flip(self):
        return 1.0 / (1.0 + math.exp(self.epsilon / 2.0))

    @property
    def constraint(self):
        return Ldp(self.epsilon)

    @property
    def n_outputs(self):
        return 2**self.d

    def check_constraint(self, constraint=None):
        c = constraint or self.constraint
        if isinstance(c, Ldp):
            # two coordinates change between neighbouring one-hot inputs
            eps = 2.0 * math.log((1.0 - self.flip) / self.flip)
            if eps > c.epsilon + LDP_TOL:
                raise ConstraintViolation(f"RAPPOR is {eps:.6g}-LDP, claimed {c.epsilon:.6g}")
        else:
            _check_claim(c, self.n_outputs, lambda: math.inf)

    def bit_matrix(self, xs, rng) -> np.ndarray:
        rng = make_rng(rng)
        xs = np.asarray(xs)
        flips = rng.random((len(xs), self.d), dtype=np.float32) < np.float32(self.flip)
        onehot = xs[:, None] == np.arange(self.d)
        return onehot ^ flips

    def apply_batch(self, xs, rng) -> np.ndarray:
        return pack_bits(self.bit_matrix(xs, rng))

    def apply(self, x, seed) -> int:
        return int(self.apply_batch(np.array([x]), make_rng(seed))[0])

    def to_finite(self) -> FiniteChannel:
        if self.d > MAX_BERNOULLI_ENUM:
            raise CapacityError("RAPPOR kernel is only materialized for d <= 20")
        y = np.arange(2**self.d)[:, None]
        bits = (y >> np.arange(self.d)) & 1
        f = self.flip
        k = np.empty((2**self.d, self.d))
        for x in range(self.d):
            agree = bits == (np.arange(self.d) == x)
            k[:, x] = np.where(agree, 1.0 - f, f).prod(axis=1)
        return FiniteChannel(k, self.constraint)


def rappor(d: int, epsilon: float) -> RapporChannel:
    ch = RapporChannel(int(d), float(epsilon))
    ch.check_constraint()
    return ch


def pack_bits(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    return bits @ (np.int64(1) << np.arange(bits.shape[1], dtype=np.int64))


def unpack_bits(msgs, width: int) -> np.ndarray:
    msgs = np.asarray(msgs, dtype=np.int64)
    return ((msgs[:, None] >> np.arange(width, dtype=np.int64)) & 1).astype(np.uint8)
