"""Finite measures, channels and the divergences used throughout the package.

All logarithms are natural. Alphabet symbols are dense integer indices
``0..k-1``; tensor products order symbols lexicographically with the first
factor as the most significant digit (numpy ``kron`` convention).

The extended value ``+inf`` is plain IEEE ``math.inf`` so comparisons and
``max``/``min`` reductions stay sound; no sentinel large floats are used.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PROB_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteMeasure:
    """Nonnegative weights over ``{0, ..., k-1}``; not necessarily normalized."""

    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("measure weights must be a nonempty vector")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("measure weights must be finite and nonnegative")
        if not np.any(w > 0):
            raise ValueError("measure must have at least one positive weight")
        object.__setattr__(self, "weights", w)

    @property
    def alphabet_size(self) -> int:
        return self.weights.size

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    def is_probability(self) -> bool:
        return abs(self.mass - 1.0) <= PROB_TOL

    def normalized(self) -> "FiniteMeasure":
        return FiniteMeasure(self.weights / self.mass)

    def scaled(self, s: float) -> "FiniteMeasure":
        return FiniteMeasure(self.weights * s)

    def __len__(self):
        return self.alphabet_size

    def __eq__(self, other):
        return isinstance(other, FiniteMeasure) and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())


@dataclass(frozen=True, eq=False)
class Channel:
    """Row-stochastic kernel; ``kernel[x, y] = Q(y | x)``."""

    kernel: np.ndarray

    def __post_init__(self):
        k = _frozen(self.kernel)
        if k.ndim != 2 or k.size == 0:
            raise ValueError("channel kernel must be a nonempty matrix")
        if not np.all(np.isfinite(k)) or np.any(k < 0):
            raise ValueError("channel entries must be finite and nonnegative")
        if np.any(np.abs(k.sum(axis=1) - 1.0) > PROB_TOL):
            raise ValueError("channel rows must sum to 1")
        object.__setattr__(self, "kernel", k)

    @property
    def input_size(self) -> int:
        return self.kernel.shape[0]

    @property
    def output_size(self) -> int:
        return self.kernel.shape[1]

    def __eq__(self, other):
        return isinstance(other, Channel) and np.array_equal(self.kernel, other.kernel)

    def __hash__(self):
        return hash(self.kernel.tobytes())


@dataclass(frozen=True)
class GbllInstance:
    """The data ``(mu, [Q_{Y_j|X}], [nu_j], [c_j])`` of a GBLL best-constant problem."""

    mu: FiniteMeasure
    channels: tuple
    nus: tuple
    weights: tuple

    def __post_init__(self):
        channels = tuple(self.channels)
        nus = tuple(self.nus)
        weights = tuple(float(c) for c in self.weights)
        m = len(channels)
        if m < 1:
            raise ValueError("need at least one channel")
        if len(nus) != m or len(weights) != m:
            raise ValueError("channels, nus and weights must have equal length")
        for j, (ch, nu, c) in enumerate(zip(channels, nus, weights)):
            if ch.input_size != self.mu.alphabet_size:
                raise ValueError(f"channel {j} input size does not match mu")
            if ch.output_size != nu.alphabet_size:
                raise ValueError(f"channel {j} output size does not match nu_{j}")
            if not (c > 0 and np.isfinite(c)):
                raise ValueError(f"weight c_{j} must be positive and finite")
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "nus", nus)
        object.__setattr__(self, "weights", weights)

    @property
    def m(self) -> int:
        return len(self.channels)

    def with_mu(self, mu: FiniteMeasure) -> "GbllInstance":
        return GbllInstance(mu, self.channels, self.nus, self.weights)

    @classmethod
    def matched(cls, q_x: FiniteMeasure, channels: Sequence[Channel], weights) -> "GbllInstance":
        """Instance with ``mu = Q_X`` and ``nu_j`` the output marginals of ``Q_X``."""
        channels = tuple(channels)
        return cls(q_x, channels, tuple(push_forward(q_x, ch) for ch in channels), tuple(weights))


def _check_same(a: FiniteMeasure, b: FiniteMeasure):
    if a.alphabet_size != b.alphabet_size:
        raise ValueError(
            f"dimension mismatch: {a.alphabet_size} vs {b.alphabet_size}")


def xlogy_ratio(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Elementwise ``p log(p/q)`` with ``0 log(0/.) = 0`` and ``p log(p/0) = +inf``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = np.zeros(np.broadcast(p, q).shape)
    p, q = np.broadcast_arrays(p, q)
    pos = p > 0
    bad = pos & (q <= 0)
    ok = pos & ~bad
    out[ok] = p[ok] * np.log(p[ok] / q[ok])
    out[bad] = np.inf
    return out


def rel_entropy(p: FiniteMeasure, mu: FiniteMeasure) -> float:
    """``D(P || mu)`` in nats; ``mu`` may be unnormalized."""
    _check_same(p, mu)
    return float(xlogy_ratio(p.weights, mu.weights).sum())


def renyi_div(alpha: float, p: FiniteMeasure, mu: FiniteMeasure) -> float:
    """Renyi divergence of order ``alpha``: ``log(sum p^a mu^(1-a)) / (a-1)``."""
    _check_same(p, mu)
    if alpha <= 0 or alpha == 1 or not np.isfinite(alpha):
        raise ValueError("alpha must lie in (0,1) or (1,inf)")
    pw, mw = p.weights, mu.weights
    pos = pw > 0
    if alpha > 1 and np.any(pos & (mw == 0)):
        return np.inf
    both = pos & (mw > 0)
    if not np.any(both):
        # alpha < 1 and disjoint supports
        return np.inf
    logs = alpha * np.log(pw[both]) + (1 - alpha) * np.log(mw[both])
    top = logs.max()
    return float((top + np.log(np.exp(logs - top).sum())) / (alpha - 1))


def e_gamma(nu: FiniteMeasure, mu: FiniteMeasure, gamma: float = 1.0) -> float:
    """``E_gamma(nu || mu) = sum_x (nu(x) - gamma mu(x))^+``."""
    _check_same(nu, mu)
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    return float(np.clip(nu.weights - gamma * mu.weights, 0.0, None).sum())


def push_forward(p: FiniteMeasure, ch: Channel) -> FiniteMeasure:
    if p.alphabet_size != ch.input_size:
        raise ValueError(
            f"dimension mismatch: measure has {p.alphabet_size} symbols, "
            f"channel expects {ch.input_size}")
    return FiniteMeasure(p.weights @ ch.kernel)


def info_density(p: FiniteMeasure, mu: FiniteMeasure, x: int | None = None):
    """``log(P(x)/mu(x))``; returns the full vector when ``x`` is None.

    ``-inf`` where ``P(x) = 0 < mu(x)``, ``+inf`` where ``P(x) > 0 = mu(x)``
    and ``nan`` where both vanish.
    """
    _check_same(p, mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.log(p.weights) - np.log(mu.weights)
    if x is None:
        return dens
    return float(dens[x])


# ---------------------------------------------------------------- products

def product_measure(a: FiniteMeasure, b: FiniteMeasure) -> FiniteMeasure:
    return FiniteMeasure(np.kron(a.weights, b.weights))


def product_channel(a: Channel, b: Channel) -> Channel:
    return Channel(np.kron(a.kernel, b.kernel))


def tensor(a: GbllInstance, b: GbllInstance) -> GbllInstance:
    if a.m != b.m or not np.allclose(a.weights, b.weights, rtol=0, atol=1e-15):
        raise ValueError("tensor requires the same number of channels and equal weights")
    return GbllInstance(
        product_measure(a.mu, b.mu),
        tuple(product_channel(x, y) for x, y in zip(a.channels, b.channels)),
        tuple(product_measure(x, y) for x, y in zip(a.nus, b.nus)),
        a.weights,
    )


def tensor_power(inst: GbllInstance, n: int) -> GbllInstance:
    if n < 1:
        raise ValueError("n must be >= 1")
    out = inst
    for _ in range(n - 1):
        out = tensor(out, inst)
    return out


def measure_power(p: FiniteMeasure, n: int) -> FiniteMeasure:
    w = p.weights
    for _ in range(n - 1):
        w = np.kron(w, p.weights)
    return FiniteMeasure(w)


def channel_power(ch: Channel, n: int) -> Channel:
    k = ch.kernel
    for _ in range(n - 1):
        k = np.kron(k, ch.kernel)
    return Channel(k)


# ------------------------------------------------------------ constructors

def bsc(p: float) -> Channel:
    return Channel([[1 - p, p], [p, 1 - p]])


def identity_channel(k: int) -> Channel:
    return Channel(np.eye(k))


def uniform(k: int) -> FiniteMeasure:
    return FiniteMeasure(np.full(k, 1.0 / k))


def dsbs_joint(p: float) -> FiniteMeasure:
    """Doubly symmetric binary source on ``Y1 x Y2`` (index ``2*y1 + y2``)."""
    return FiniteMeasure([(1 - p) / 2, p / 2, p / 2, (1 - p) / 2])


def coordinate_channels(sizes: Sequence[int]) -> tuple:
    """Deterministic projections of the product alphabet onto each coordinate."""
    sizes = list(sizes)
    total = int(np.prod(sizes))
    idx = np.array(np.unravel_index(np.arange(total), sizes))
    chans = []
    for j, k in enumerate(sizes):
        kern = np.zeros((total, k))
        kern[np.arange(total), idx[j]] = 1.0
        chans.append(Channel(kern))
    return tuple(chans)


def random_probability(rng: np.random.Generator, k: int, floor: float = 0.0) -> FiniteMeasure:
    w = rng.dirichlet(np.ones(k))
    if floor:
        w = (w + floor) / (1 + k * floor)
    return FiniteMeasure(w)


def random_channel(rng: np.random.Generator, k_in: int, k_out: int) -> Channel:
    kern = rng.dirichlet(np.ones(k_out), size=k_in)
    return Channel(kern / kern.sum(axis=1, keepdims=True))
