"""Estimation schemes and their execution over ``n`` simulated clients.

A scheme pairs a per-client channel selector with an estimator.  For a
non-interactive scheme the selector ignores the transcript, so ``run``
encodes all clients in one vectorized batch; sequential schemes are
executed client by client and may read every earlier message.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bounds import Bits, ConstraintSpec, Ldp
from .channels import (
    OneBitQuantizer,
    grouping_blocks,
    grouping_quantizer,
    k_rr,
    pack_bits,
    rappor,
    unpack_bits,
)
from .errors import ConstraintViolation, DomainError, ProtocolError
from .models import ProductBernoulli, SubModel, check_theta, model_to_dict, sample_batch
from .rng import make_rng


@dataclass
class Transcript:
    messages: np.ndarray
    shared_seed: int

    @property
    def n(self):
        return len(self.messages)


class Scheme:
    """Base class.  Subclasses provide ``channel_for`` and ``estimate``.

    ``interactive`` is False for members of the non-interactive class; the
    default ``encode_batch`` then loops over clients with an empty context.
    """

    name = "scheme"
    interactive = False

    def __init__(self, d: int, constraint: ConstraintSpec):
        self.d = d
        self.constraint = constraint

    def channel_for(self, i: int, n: int, prefix, shared_seed: int):
        raise NotImplementedError

    def distinct_channels(self, n: int):
        """``(first client index, channel)`` for every distinct channel a non-interactive run uses."""
        return [(i, self.channel_for(i, n, None, 0)) for i in range(n)]

    def encode_batch(self, xs, rng) -> np.ndarray:
        n = len(xs)
        return np.array([self.channel_for(i, n, None, 0).apply(xs[i], rng) for i in range(n)], dtype=np.int64)

    def estimate(self, messages) -> np.ndarray:
        raise NotImplementedError

    def expected_estimate(self, input_law, n: int) -> np.ndarray:
        """Exact ``E[estimate]`` by enumerating channel kernels; see subclasses for ``input_law``."""
        raise NotImplementedError

    def describe(self) -> dict:
        return {"name": self.name}


class GroupingScheme(Scheme):
    """Client ``i`` reports, in ``b`` bits, which symbol of block ``i mod #blocks`` it saw (or "other")."""

    name = "grouping"

    def __init__(self, d: int, b: int):
        super().__init__(d, Bits(b))
        self.b = b
        self.blocks = grouping_blocks(d, b)
        self.channels = [grouping_quantizer(d, b, j) for j in range(len(self.blocks))]
        nb = len(self.blocks)
        self._local = np.empty((nb, d), dtype=np.int64)
        for j, blk in enumerate(self.blocks):
            self._local[j, :] = len(blk)
            self._local[j, blk] = np.arange(len(blk))

    @property
    def n_blocks(self):
        return len(self.blocks)

    def block_of(self, i: int) -> int:
        return i % self.n_blocks

    def channel_for(self, i, n, prefix, shared_seed):
        return self.channels[self.block_of(i)]

    def distinct_channels(self, n):
        return [(j, ch) for j, ch in enumerate(self.channels) if j < n]

    def encode_batch(self, xs, rng):
        xs = np.asarray(xs)
        # deterministic quantizers: no randomness is consumed
        return self._local[np.arange(len(xs)) % self.n_blocks, xs]

    def estimate(self, messages):
        messages = np.asarray(messages)
        est = np.zeros(self.d)
        for j, blk in enumerate(self.blocks):
            mine = messages[j :: self.n_blocks]
            if len(mine) == 0:
                continue
            counts = np.bincount(mine, minlength=len(blk) + 1)
            est[blk] = counts[: len(blk)] / len(mine)
        return est

    def expected_estimate(self, input_law, n):
        p = np.asarray(input_law, dtype=float)
        est = np.zeros(self.d)
        for j, blk in enumerate(self.blocks):
            if j >= n:
                continue
            est[blk] = (self.channels[j].kernel @ p)[: len(blk)]
        return est

    def describe(self):
        return {"name": self.name, "b": self.b}


class KRRScheme(Scheme):
    """Every client applies k-ary randomized response; frequencies are debiased linearly."""

    name = "krr"

    def __init__(self, d: int, epsilon: float):
        super().__init__(d, Ldp(epsilon))
        self.epsilon = epsilon
        self.channel = k_rr(d, epsilon)
        e = math.exp(epsilon)
        self.keep, self.other = e / (e + d - 1), 1.0 / (e + d - 1)

    def channel_for(self, i, n, prefix, shared_seed):
        return self.channel

    def distinct_channels(self, n):
        return [(0, self.channel)]

    def encode_batch(self, xs, rng):
        return self.channel.apply_batch(np.asarray(xs), rng)

    def debias(self, freq):
        return (np.asarray(freq) - self.other) / (self.keep - self.other)

    def estimate(self, messages):
        freq = np.bincount(np.asarray(messages), minlength=self.d) / len(messages)
        return self.debias(freq)

    def expected_estimate(self, input_law, n):
        return self.debias(self.channel.kernel @ np.asarray(input_law, dtype=float))

    def describe(self):
        return {"name": self.name, "epsilon": self.epsilon}


class RapporScheme(Scheme):
    """Every client applies RAPPOR; per-coordinate bit means are debiased linearly."""

    name = "rappor"

    def __init__(self, d: int, epsilon: float):
        super().__init__(d, Ldp(epsilon))
        self.epsilon = epsilon
        self.channel = rappor(d, epsilon)
        self.flip = self.channel.flip

    def channel_for(self, i, n, prefix, shared_seed):
        return self.channel

    def distinct_channels(self, n):
        return [(0, self.channel)]

    def encode_batch(self, xs, rng):
        return self.channel.apply_batch(np.asarray(xs), rng)

    def debias(self, bit_means):
        return (np.asarray(bit_means) - self.flip) / (1.0 - 2.0 * self.flip)

    def estimate(self, messages):
        return self.debias(unpack_bits(messages, self.d).mean(axis=0))

    def expected_estimate(self, input_law, n):
        kern = self.channel.to_finite().kernel
        py = kern @ np.asarray(input_law, dtype=float)
        bits = unpack_bits(np.arange(kern.shape[0]), self.d)
        return self.debias(py @ bits)

    def describe(self):
        return {"name": self.name, "epsilon": self.epsilon}


class CoordinateQuantizer:
    """Channel of one client in :class:`OneBitScheme`: one stochastic bit for each of its coordinates."""

    def __init__(self, coords, quantizer: OneBitQuantizer, square: bool = False):
        self.coords = np.asarray(coords)
        self.quantizer = quantizer
        self.square = square
        self.constraint = Bits(len(self.coords))
        self.n_outputs = 2 ** len(self.coords)

    def check_constraint(self, constraint=None):
        c = constraint or self.constraint
        if isinstance(c, Bits) and self.n_outputs > 2**c.b:
            raise ConstraintViolation(f"{self.n_outputs} output symbols exceed 2^{c.b}")
        if isinstance(c, Ldp):
            raise ConstraintViolation("the one-bit quantizer is not locally private")

    def apply(self, x, rng):
        vals = np.asarray(x, dtype=float)[self.coords]
        bits = self.quantizer.apply_batch(vals**2 if self.square else vals, make_rng(rng))
        return int(pack_bits(bits[None, :])[0])


class OneBitScheme(Scheme):
    """Client ``i`` sends one stochastic bit for each of ``k = min(b, d)`` round-robin coordinates.

    Inputs are clipped to ``[lo, hi]``; the estimator averages the debiased
    bits per coordinate.  With ``square=True`` the quantized quantity is
    ``x_j^2``, which estimates the variances of a centred Gaussian.
    """

    name = "onebit"

    def __init__(self, d: int, b: int, lo: float, hi: float, square: bool = False):
        super().__init__(d, Bits(min(b, d)))
        self.b = b
        self.k = min(b, d)
        self.quantizer = OneBitQuantizer(lo, hi)
        self.square = square
        if square:
            self.name = "onebit-square"

    def coords_of(self, i):
        return (np.asarray(i)[..., None] * self.k + np.arange(self.k)) % self.d

    def channel_for(self, i, n, prefix, shared_seed):
        return CoordinateQuantizer(self.coords_of(i), self.quantizer, self.square)

    def distinct_channels(self, n):
        period = self.d // math.gcd(self.d, self.k)
        return [(i, self.channel_for(i, n, None, 0)) for i in range(min(n, period))]

    def encode_batch(self, xs, rng):
        xs = np.asarray(xs, dtype=float)
        n = len(xs)
        coords = self.coords_of(np.arange(n))
        vals = np.take_along_axis(xs, coords, axis=1)
        if self.square:
            vals = vals**2
        return pack_bits(self.quantizer.apply_batch(vals, rng))

    def estimate(self, messages):
        n = len(messages)
        coords = self.coords_of(np.arange(n)).ravel()
        vals = self.quantizer.debias(unpack_bits(messages, self.k)).ravel()
        total = np.bincount(coords, weights=vals, minlength=self.d)
        count = np.bincount(coords, minlength=self.d)
        mid = 0.5 * (self.quantizer.lo + self.quantizer.hi)
        return np.where(count > 0, total / np.maximum(count, 1), mid)

    def expected_estimate(self, input_law, n):
        """``input_law = (points, weights)``: a finite-support law on ``R^d``."""
        points, weights = input_law
        points = np.asarray(points, dtype=float)
        weights = np.asarray(weights, dtype=float)
        lo, hi = self.quantizer.lo, self.quantizer.hi
        # E[debias(bit) | x] = lo * P(0|x) + hi * P(1|x), enumerated per support point
        p1 = self.quantizer.prob_one(points**2 if self.square else points)
        cond = lo * (1.0 - p1) + hi * p1
        covered = np.zeros(self.d, dtype=bool)
        covered[self.coords_of(np.arange(min(n, self.d))).ravel()] = True
        return np.where(covered, weights @ cond, 0.5 * (lo + hi))

    def describe(self):
        return {"name": self.name, "b": self.b, "lo": self.quantizer.lo, "hi": self.quantizer.hi,
                "square": self.square}


class IdentityScheme(Scheme):
    """Lossless reporting: the raw symbol (discrete) or the packed bit vector (product Bernoulli)."""

    name = "identity"

    def __init__(self, d: int, bernoulli: bool = False):
        width = d if bernoulli else max(1, math.ceil(math.log2(d)))
        super().__init__(d, Bits(width))
        self.bernoulli = bernoulli
        alphabet = 2**d if bernoulli else d
        self._alphabet = alphabet

    def channel_for(self, i, n, prefix, shared_seed):
        return _Lossless(self._alphabet, self.constraint)

    def distinct_channels(self, n):
        return [(0, self.channel_for(0, n, None, 0))]

    def encode_batch(self, xs, rng):
        xs = np.asarray(xs)
        return pack_bits(xs) if self.bernoulli else xs.astype(np.int64)

    def estimate(self, messages):
        if self.bernoulli:
            return unpack_bits(messages, self.d).mean(axis=0)
        return np.bincount(np.asarray(messages), minlength=self.d) / len(messages)

    def expected_estimate(self, input_law, n):
        return np.asarray(input_law, dtype=float)

    def describe(self):
        return {"name": self.name}


class _Lossless:
    def __init__(self, alphabet, constraint):
        self.n_outputs = alphabet
        self.constraint = constraint

    def check_constraint(self, constraint=None):
        c = constraint or self.constraint
        if isinstance(c, Bits) and self.n_outputs > 2**c.b:
            raise ConstraintViolation(f"{self.n_outputs} output symbols exceed 2^{c.b}")
        if isinstance(c, Ldp):
            raise ConstraintViolation("lossless reporting is not locally private")

    def apply(self, x, rng):
        x = np.asarray(x)
        return int(pack_bits(x[None, :])[0]) if x.ndim else int(x)


class SequentialScheme(Scheme):
    """Scheme built from callables; the selector may read the transcript prefix.

    ``selector(i, prefix, shared_seed) -> channel`` and
    ``estimator(messages, shared_seed) -> estimate``.
    """

    name = "sequential"
    interactive = True

    def __init__(self, d, constraint, selector: Callable, estimator: Callable, name="sequential"):
        super().__init__(d, constraint)
        self.selector = selector
        self.estimator = estimator
        self.name = name
        self._shared_seed = 0

    def channel_for(self, i, n, prefix, shared_seed):
        return self.selector(i, prefix, shared_seed)

    def estimate(self, messages):
        return self.estimator(np.asarray(messages), self._shared_seed)


class SampleSplitScheme(Scheme):
    """Split clients into contiguous groups, run the base scheme in each and average the estimates."""

    name = "sample-split"

    def __init__(self, base: Scheme, groups: int | None = None):
        super().__init__(base.d, base.constraint)
        if base.interactive:
            raise DomainError("sample splitting wraps non-interactive schemes")
        self.base = base
        self.groups = groups

    def group_count(self, n: int) -> int:
        g = self.groups if self.groups is not None else math.ceil(math.sqrt(n))
        return max(1, min(int(g), n))

    def group_bounds(self, n: int) -> np.ndarray:
        g = self.group_count(n)
        return (np.arange(g + 1) * n) // g

    def _locate(self, i, n):
        bounds = self.group_bounds(n)
        g = int(np.searchsorted(bounds, i, side="right")) - 1
        return g, i - bounds[g], bounds[g + 1] - bounds[g]

    def channel_for(self, i, n, prefix, shared_seed):
        _, local, size = self._locate(i, n)
        return self.base.channel_for(local, size, None, shared_seed)

    def distinct_channels(self, n):
        bounds = self.group_bounds(n)
        out = []
        for g in range(len(bounds) - 1):
            out += [(bounds[g] + i, ch) for i, ch in self.base.distinct_channels(int(bounds[g + 1] - bounds[g]))]
        return out

    def encode_batch(self, xs, rng):
        bounds = self.group_bounds(len(xs))
        return np.concatenate([self.base.encode_batch(xs[a:b], rng) for a, b in zip(bounds[:-1], bounds[1:])])

    def estimate(self, messages):
        bounds = self.group_bounds(len(messages))
        ests = [self.base.estimate(messages[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
        return np.mean(ests, axis=0)

    def expected_estimate(self, input_law, n):
        bounds = self.group_bounds(n)
        ests = [self.base.expected_estimate(input_law, int(b - a)) for a, b in zip(bounds[:-1], bounds[1:])]
        return np.mean(ests, axis=0)

    def describe(self):
        return {"name": self.name, "groups": self.groups, "base": self.base.describe()}


# -- constructors -----------------------------------------------------------


def make_grouping_scheme(d: int, b: int) -> GroupingScheme:
    if b < 1:
        raise DomainError("b must be at least 1")
    return GroupingScheme(d, b)


def make_gaussian_onebit_scheme(d: int, b: int, clip: float | None = None, sigma: float = 1.0,
                                range_B: float = 1.0) -> OneBitScheme:
    """One-bit scheme on ``[-clip, clip]``; ``clip`` defaults to ``range_B + 6 sigma``."""
    if b < 1:
        raise DomainError("b must be at least 1")
    clip = range_B + 6.0 * sigma if clip is None else clip
    return OneBitScheme(d, b, -clip, clip)


def make_gaussian_variance_scheme(d: int, b: int, clip: float | None = None,
                                  sigma_max: float = 1.0) -> OneBitScheme:
    """One-bit scheme on squared observations, clipped to ``[0, clip]`` (default ``16 sigma_max^2``)."""
    if b < 1:
        raise DomainError("b must be at least 1")
    clip = 16.0 * sigma_max**2 if clip is None else clip
    return OneBitScheme(d, b, 0.0, clip, square=True)


def make_krr_scheme(d: int, epsilon: float) -> KRRScheme:
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    return KRRScheme(d, epsilon)


def make_rappor_scheme(d: int, epsilon: float) -> RapporScheme:
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    return RapporScheme(d, epsilon)


def make_identity_scheme(model) -> IdentityScheme:
    return IdentityScheme(model.d, bernoulli=isinstance(model, ProductBernoulli))


def sample_split(scheme: Scheme, q: float, groups: int | None = None) -> Scheme:
    """Wrap ``scheme`` for ``q > 2``; for ``q <= 2`` it is returned unchanged."""
    if q <= 2:
        return scheme
    return SampleSplitScheme(scheme, groups)


# -- execution --------------------------------------------------------------


def _check_channel(scheme, channel, client):
    try:
        channel.check_constraint(scheme.constraint)
    except ConstraintViolation as exc:
        raise ProtocolError(f"client {client}: {exc}", client=client) from exc


def run(scheme: Scheme, model, theta, n: int, seed, shared_seed: int | None = None):
    """Simulate ``n`` clients; returns ``(estimate, transcript)``.

    All draws come from one generator built from ``seed``: first the shared
    seed (unless given), then the ``n`` observations, then the channel noise
    in client order.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    if isinstance(model, SubModel):
        raise DomainError("run expects a full model")
    check_theta(model, theta)
    rng = make_rng(seed)
    drawn = int(rng.integers(0, 2**63 - 1))
    shared = drawn if shared_seed is None else int(shared_seed)
    xs = sample_batch(model, theta, n, rng)
    if not scheme.interactive:
        for client, ch in scheme.distinct_channels(n):
            _check_channel(scheme, ch, client)
        messages = np.asarray(scheme.encode_batch(xs, rng), dtype=np.int64)
    else:
        messages = np.empty(n, dtype=np.int64)
        seen = set()
        for i in range(n):
            ch = scheme.channel_for(i, n, messages[:i], shared)
            if id(ch) not in seen:
                _check_channel(scheme, ch, i)
                seen.add(id(ch))
            messages[i] = ch.apply(xs[i], rng)
        scheme._shared_seed = shared
    if isinstance(scheme.constraint, Bits) and np.any(messages >= 2**scheme.constraint.b):
        bad = int(np.argmax(messages >= 2**scheme.constraint.b))
        raise ProtocolError(f"client {bad}: message does not fit in {scheme.constraint.b} bits", client=bad)
    return scheme.estimate(messages), Transcript(messages, shared)


# -- simplex projection -----------------------------------------------------


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


# -- transcript serialization -----------------------------------------------


def _write_varint(buf, value: int):
    value = int(value)
    if value < 0:
        raise DomainError("varints encode non-negative integers")
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            buf.write(bytes((byte | 0x80,)))
        else:
            buf.write(bytes((byte,)))
            return


def _read_varint(buf) -> int:
    shift = result = 0
    while True:
        raw = buf.read(1)
        if not raw:
            raise DomainError("truncated varint")
        result |= (raw[0] & 0x7F) << shift
        if not raw[0] & 0x80:
            return result
        shift += 7


def dump_transcript(transcript: Transcript, scheme: Scheme, model, seed) -> bytes:
    """JSON header line ``{scheme, model, n, seed, shared_seed}`` followed by varint messages."""
    header = {
        "scheme": scheme.describe(),
        "model": model_to_dict(model),
        "n": transcript.n,
        "seed": seed if isinstance(seed, int) else None,
        "shared_seed": transcript.shared_seed,
    }
    buf = io.BytesIO()
    buf.write(json.dumps(header, sort_keys=True).encode() + b"\n")
    _write_varint(buf, transcript.n)
    for m in transcript.messages:
        _write_varint(buf, m)
    return buf.getvalue()


def load_transcript(data: bytes):
    """Inverse of :func:`dump_transcript`; returns ``(header, transcript)``."""
    head, _, body = data.partition(b"\n")
    header = json.loads(head)
    buf = io.BytesIO(body)
    n = _read_varint(buf)
    messages = np.array([_read_varint(buf) for _ in range(n)], dtype=np.int64)
    return header, Transcript(messages, int(header["shared_seed"]))
