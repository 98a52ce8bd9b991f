"""Closed-form converse bounds for common-randomness generation.

All bounds are returned raw: a negative value means the bound is vacuous.
Use ``clamp01`` only for presentation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .gaussian import GaussianInstance, variance_V


@dataclass(frozen=True)
class RatePoint:
    R: float
    R_j: tuple

    def __post_init__(self):
        rj = tuple(float(r) for r in self.R_j)
        vals = (float(self.R),) + rj
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValueError("rates must be finite and nonnegative")
        object.__setattr__(self, "R", float(self.R))
        object.__setattr__(self, "R_j", rj)


@dataclass(frozen=True)
class SchemeSizes:
    K_size: int
    W_sizes: tuple

    def __post_init__(self):
        ws = tuple(int(w) for w in self.W_sizes)
        if int(self.K_size) < 1 or any(w < 1 for w in ws):
            raise ValueError("alphabet sizes must be positive")
        object.__setattr__(self, "K_size", int(self.K_size))
        object.__setattr__(self, "W_sizes", ws)


# ----------------------------------------------------------------- rate region

def region_check(point: RatePoint, dstar_value: float, weights) -> bool:
    """``d* + sum c_j R_j >= (sum c_j - 1) R`` for this weight vector."""
    c = np.asarray(weights, dtype=float)
    if c.size != len(point.R_j):
        raise ValueError("weights and message rates differ in length")
    lhs = dstar_value + float(c @ np.asarray(point.R_j))
    rhs = (c.sum() - 1.0) * point.R
    return bool(lhs >= rhs - 1e-12 * max(1.0, abs(rhs)))


@dataclass(frozen=True)
class RegionTrace:
    rows: list                # [(c tuple, dstar, R_max)]
    skipped: list = field(default_factory=list)

    @property
    def R_max(self) -> float:
        """Largest CR rate allowed by every grid point."""
        return min((r[2] for r in self.rows), default=math.inf)


def region_trace(dstar_fn, c_grid, R_j) -> RegionTrace:
    """Per weight vector, ``R_max = (d*(c) + sum c_j R_j) / (sum c_j - 1)``.

    Grid points with ``sum c_j <= 1`` do not bound ``R`` and are skipped.
    """
    rj = np.asarray(R_j, dtype=float)
    rows, skipped = [], []
    for c in c_grid:
        c = tuple(float(v) for v in np.atleast_1d(c))
        if len(c) != rj.size:
            raise ValueError("grid point and message rates differ in length")
        total = sum(c)
        if total <= 1.0:
            skipped.append((c, "sum of weights <= 1 does not bound R"))
            continue
        ds = float(dstar_fn(c))
        rows.append((c, ds, (ds + float(np.dot(c, rj))) / (total - 1.0)))
    return RegionTrace(rows, skipped)


# ------------------------------------------------------------ single-shot bounds

def one_comm_bound(delta, delta1, delta3, delta4, eps, eps_prime, c, d,
                   sizes: SchemeSizes) -> float:
    """Single-shot lower bound on ``(1/2)|Q_K - T_K|`` with one communicator."""
    if len(sizes.W_sizes) != 1:
        raise ValueError("one-communicator bound needs exactly one message")
    if abs(delta3 * delta4 - (delta1 + delta)) > 1e-9:
        raise ValueError("need delta3 * delta4 == delta1 + delta")
    if not (0 < delta3 < 1 and 0 < delta4 < 1):
        raise ValueError("delta3, delta4 must lie in (0, 1)")
    if eps_prime <= delta4:
        raise ValueError("need eps_prime > delta4")
    if not (0 <= eps < 1) or c <= 0:
        raise ValueError("need 0 <= eps < 1 and c > 0")
    K, W = sizes.K_size, sizes.W_sizes[0]
    a = c * (1.0 - eps)
    log_term = (math.log(2.0) / (1.0 - eps) + d / a + math.log(W)
                - math.log(eps_prime - delta4) / a - (1.0 - 1.0 / a) * math.log(K))
    return 1.0 - delta - delta3 - 1.0 / K - math.exp(log_term)


def omni_bound(sizes: SchemeSizes, weights, d: float, delta: float) -> float:
    """Lower bound on ``(1/2)|Q_{K^m} - T_{K^m}|`` for an omniscient helper."""
    c = np.asarray(weights, dtype=float)
    if c.size != len(sizes.W_sizes):
        raise ValueError("weights and message sizes differ in length")
    total = c.sum()
    K = sizes.K_size
    if d == math.inf:
        return -math.inf
    log_term = (float(c @ np.log(sizes.W_sizes)) / total + d / total
                - (1.0 - 1.0 / total) * math.log(K))
    return 1.0 - 1.0 / K - math.exp(log_term) - delta


def tv_renyi_bound(M: int, alpha: float, renyi_value: float) -> float:
    """Lower bound on ``E_1(T || mu)`` for ``T`` uniform on ``M`` points."""
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0, 1)")
    if M < 1:
        raise ValueError("M must be positive")
    return 1.0 - 1.0 / M - math.exp(-(1.0 - alpha) * renyi_value)


def metric_translation(tv: float) -> tuple:
    """``(delta1, delta2)`` implied by a joint TV-to-ideal ``delta``: both equal ``delta``."""
    if not (0.0 <= tv <= 1.0):
        raise ValueError("tv must lie in [0, 1]")
    return tv, tv


def clamp01(x: float) -> float:
    return float(min(1.0, max(0.0, x)))


# --------------------------------------------------------------- second order

def gaussian_tail(x: float) -> float:
    """Standard normal tail ``Q(x) = P[Z > x]``."""
    return float(0.5 * erfc(x / math.sqrt(2.0)))


SHARD = 4096


def _shard_count(dim: int, d1: float, n: int, seed_seq: np.random.SeedSequence) -> int:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    a = rng.standard_normal((n, dim, dim))
    w = (a + np.swapaxes(a, 1, 2)) / math.sqrt(2.0)
    lam = np.linalg.eigvalsh(w)[:, -1]
    return int(np.count_nonzero(lam <= d1))


def wigner_lambda_max_cdf(dim: int, d1: float, samples: int, seed: int = 0):
    """Monte Carlo ``P[lambda_max((A + A^T)/sqrt 2) <= d1]`` and its standard error.

    Samples are drawn in fixed-size shards, each from its own Philox stream
    spawned from ``seed``; the integer counts are summed, so the estimate only
    depends on ``(dim, d1, samples, seed)``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    n_shards = -(-samples // SHARD)
    seqs = np.random.SeedSequence(seed).spawn(n_shards)
    hits = 0
    for i, ss in enumerate(seqs):
        n = min(SHARD, samples - i * SHARD)
        hits += _shard_count(dim, d1, n, ss)
    p = hits / samples
    return p, math.sqrt(p * (1.0 - p) / samples)


@dataclass(frozen=True)
class SecondOrderReport:
    V: float
    cdf: float
    cdf_stderr: float
    tail: float
    bound: float


def second_order_bound(inst: GaussianInstance, d1: float, d2: float, samples: int,
                       seed: int = 0, dim: int | None = None, V: float | None = None
                       ) -> SecondOrderReport:
    """``P[lambda_max(W) <= D1] - Q(D2 / sqrt V)`` for ``X = (Y_1..Y_m)`` Gaussian.

    ``dim`` is the Wigner dimension and defaults to the source dimension.
    ``V = 0`` uses the convention ``Q(+inf) = 0``.
    """
    if not (0 < d1 < 1 and 0 < d2 < 1):
        raise ValueError("D1 and D2 must lie in (0, 1)")
    V = variance_V(inst) if V is None else float(V)
    if V < 0:
        raise ValueError("V must be nonnegative")
    dim = inst.dim if dim is None else int(dim)
    cdf, se = wigner_lambda_max_cdf(dim, d1, samples, seed)
    tail = 0.0 if V == 0 else gaussian_tail(d2 / math.sqrt(V))
    return SecondOrderReport(V, cdf, se, tail, cdf - tail)
