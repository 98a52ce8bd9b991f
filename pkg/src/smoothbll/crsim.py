"""Exact evaluation of small common-randomness schemes with an omniscient helper.

The helper observes ``X^n = (Y_1^n, ..., Y_m^n)`` and sends ``W_j`` to
terminal ``j``, which outputs ``K_j`` from ``(Y_j^n, W_j)``.  Encoders and
decoders are explicit conditional tables, so every metric is an exact sum.

Table layouts (sequence indices are lexicographic, first letter most
significant):

* ``encoder[x, k, w_1, ..., w_m] = P(K=k, W=w | X^n = x)``
* ``decoders[j][y, w, k] = P(K_j = k | Y_j^n = y, W_j = w)``
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .bounds import SchemeSizes, omni_bound

ENUMERATION_CAP = 10 ** 7
TABLE_TOL = 1e-9


class EnumerationCapError(RuntimeError):
    pass


def _sequence_projection(sizes, n: int, j: int) -> np.ndarray:
    """Index of ``Y_j^n`` for every index of ``X^n``."""
    k = int(np.prod(sizes))
    letters = np.array(np.unravel_index(np.arange(k ** n), (k,) * n))   # (n, k^n)
    yj = np.array(np.unravel_index(letters, sizes))[j]                   # (n, k^n)
    return np.ravel_multi_index(tuple(yj), (sizes[j],) * n)


@dataclass(frozen=True, eq=False)
class CrScheme:
    n: int
    source: object            # FiniteMeasure on Y_1 x ... x Y_m (single letter)
    alphabet_sizes: tuple
    K_size: int
    W_sizes: tuple
    encoder: np.ndarray
    decoders: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.alphabet_sizes)
        ws = tuple(int(w) for w in self.W_sizes)
        m = len(sizes)
        if self.n < 1 or m < 1 or len(ws) != m:
            raise ValueError("need n >= 1 and one message size per terminal")
        if self.source.alphabet_size != int(np.prod(sizes)):
            raise ValueError("source alphabet must be the product of the terminal alphabets")
        if not self.source.is_probability():
            raise ValueError("source must be a probability measure")
        S = self.source.alphabet_size ** self.n
        enc = np.asarray(self.encoder, dtype=float)
        if enc.shape != (S, self.K_size) + ws:
            raise ValueError(f"encoder must have shape {(S, self.K_size) + ws}")
        if np.any(enc < 0) or np.any(np.abs(enc.reshape(S, -1).sum(axis=1) - 1) > TABLE_TOL):
            raise ValueError("encoder rows must be probability distributions")
        decs = tuple(np.asarray(d, dtype=float) for d in self.decoders)
        if len(decs) != m:
            raise ValueError("need one decoder per terminal")
        for j, d in enumerate(decs):
            shape = (sizes[j] ** self.n, ws[j], self.K_size)
            if d.shape != shape:
                raise ValueError(f"decoder {j} must have shape {shape}")
            if np.any(d < 0) or np.any(np.abs(d.sum(axis=2) - 1) > TABLE_TOL):
                raise ValueError(f"decoder {j} rows must be probability distributions")
        object.__setattr__(self, "alphabet_sizes", sizes)
        object.__setattr__(self, "W_sizes", ws)
        object.__setattr__(self, "encoder", enc)
        object.__setattr__(self, "decoders", decs)

    @property
    def m(self) -> int:
        return len(self.alphabet_sizes)

    @property
    def sizes(self) -> SchemeSizes:
        return SchemeSizes(self.K_size, self.W_sizes)

    def sequence_probs(self) -> np.ndarray:
        w = self.source.weights
        out = w
        for _ in range(self.n - 1):
            out = np.kron(out, w)
        return out

    def projections(self) -> list:
        return [_sequence_projection(self.alphabet_sizes, self.n, j) for j in range(self.m)]

    def enumeration_size(self) -> int:
        S = self.source.alphabet_size ** self.n
        return S * self.K_size * int(np.prod(self.W_sizes)) * self.K_size ** self.m


@dataclass(frozen=True)
class SchemeEvaluation:
    p_agree: float            # P[K = K_1 = ... = K_m]
    p_agree_terminals: float  # P[K_1 = ... = K_m]
    tv_to_ideal: float        # (1/2)|Q_{K_1..K_m} - T_{K_1..K_m}|
    tv_marginals: tuple       # (1/2)|Q_{K_j} - uniform| per terminal
    joint_K_dist: np.ndarray  # over (K, K_1, ..., K_m)

    @property
    def terminal_dist(self) -> np.ndarray:
        return self.joint_K_dist.sum(axis=0)

    @property
    def delta1(self) -> float:
        """``1 - P[K_1 = ... = K_m]``."""
        return 1.0 - self.p_agree_terminals

    @property
    def delta2(self) -> float:
        """``(1/2)|Q_{K_1} - uniform|``."""
        return self.tv_marginals[0]


def _metrics(joint: np.ndarray) -> SchemeEvaluation:
    K = joint.shape[0]
    m = joint.ndim - 1
    diag = np.arange(K)
    p_agree = float(joint[(diag,) * (m + 1)].sum())
    term = joint.sum(axis=0)
    p_term = float(term[(diag,) * m].sum())
    ideal = np.zeros_like(term)
    ideal[(diag,) * m] = 1.0 / K
    tv = 0.5 * float(np.abs(term - ideal).sum())
    margs = []
    for j in range(m):
        mj = term.sum(axis=tuple(i for i in range(m) if i != j))
        margs.append(0.5 * float(np.abs(mj - 1.0 / K).sum()))
    clip = lambda v: min(1.0, max(0.0, v))
    return SchemeEvaluation(clip(p_agree), clip(p_term), clip(tv),
                            tuple(clip(v) for v in margs), joint)


def _joint_vectorized(scheme: CrScheme) -> np.ndarray:
    q = scheme.sequence_probs()
    T = scheme.encoder * q.reshape((-1,) + (1,) * (scheme.m + 1))
    proj = scheme.projections()
    # contract one message at a time; axis layout (x, k, k_1..k_{j-1}, w_j..w_m)
    for j, (dec, pj) in enumerate(zip(scheme.decoders, proj)):
        D = dec[pj]                                  # (x, w_j, k_j)
        T = np.moveaxis(T, 2 + j, -1)                # w_j last
        T = np.einsum("x...w,xwk->x...k", T, D)      # k_j last
        T = np.moveaxis(T, -1, 2 + j)
    return T.sum(axis=0)


def _joint_loops(scheme: CrScheme) -> np.ndarray:
    q = scheme.sequence_probs()
    proj = scheme.projections()
    K, m = scheme.K_size, scheme.m
    joint = np.zeros((K,) * (m + 1))
    for x in range(q.size):
        if q[x] == 0:
            continue
        ys = [int(p[x]) for p in proj]
        for k in range(K):
            for w in itertools.product(*(range(s) for s in scheme.W_sizes)):
                pe = scheme.encoder[(x, k) + w]
                if pe == 0:
                    continue
                for ks in itertools.product(range(K), repeat=m):
                    pd = 1.0
                    for j in range(m):
                        pd *= scheme.decoders[j][ys[j], w[j], ks[j]]
                    joint[(k,) + ks] += q[x] * pe * pd
    return joint


def evaluate_scheme(scheme: CrScheme, method: str = "vectorized") -> SchemeEvaluation:
    """Exact agreement probability and TV-to-ideal by full enumeration."""
    size = scheme.enumeration_size()
    if size > ENUMERATION_CAP:
        raise EnumerationCapError(f"enumeration size {size} exceeds cap {ENUMERATION_CAP}")
    if method == "vectorized":
        joint = _joint_vectorized(scheme)
    elif method == "loops":
        joint = _joint_loops(scheme)
    else:
        raise ValueError("method must be 'vectorized' or 'loops'")
    return _metrics(joint)


# --------------------------------------------------------------- constructors

def _balanced_labels(rng, count: int, labels: int) -> np.ndarray:
    """Random labeling using every label equally often (injective when labels >= count)."""
    return rng.permutation(count) % labels


def random_binning_scheme(source, alphabet_sizes, n: int, K_size: int, W_sizes,
                          seed: int = 0) -> CrScheme:
    """Random-binning scheme with maximum-posterior decoders.

    ``K`` is a balanced random labeling of source sequences and ``W_j`` an
    independent balanced random bin index of the source sequence.  Terminal
    ``j`` outputs the most likely ``K`` given ``(Y_j^n, W_j)`` (ties go to the
    smallest label).
    """
    sizes = tuple(int(s) for s in alphabet_sizes)
    W_sizes = tuple(int(w) for w in W_sizes)
    if K_size < 1 or any(w < 1 for w in W_sizes):
        raise ValueError("sizes must be positive")
    rng = np.random.default_rng(seed)
    S = source.alphabet_size ** n
    q = source.weights
    for _ in range(n - 1):
        q = np.kron(q, source.weights)
    k_lab = _balanced_labels(rng, S, K_size)
    w_lab = [_balanced_labels(rng, S, w) for w in W_sizes]
    enc = np.zeros((S, K_size) + W_sizes)
    enc[(np.arange(S), k_lab) + tuple(w_lab)] = 1.0
    decs = []
    for j, pj in enumerate(_projs(sizes, n)):
        post = np.zeros((sizes[j] ** n, W_sizes[j], K_size))
        np.add.at(post, (pj, w_lab[j], k_lab), q)
        dec = np.zeros_like(post)
        best = post.argmax(axis=2)
        idx = np.indices(best.shape)
        dec[idx[0], idx[1], best] = 1.0
        decs.append(dec)
    return CrScheme(n, source, sizes, K_size, W_sizes, enc, tuple(decs))


def _projs(sizes, n):
    return [_sequence_projection(sizes, n, j) for j in range(len(sizes))]


def perturb_scheme(scheme: CrScheme, rng: np.random.Generator, strength: float) -> CrScheme:
    """Mix every table with random conditional tables (weight ``strength``)."""
    if not (0.0 <= strength <= 1.0):
        raise ValueError("strength must lie in [0, 1]")
    S = scheme.encoder.shape[0]
    noise = rng.dirichlet(np.full(scheme.encoder[0].size, 0.3), size=S)
    enc = (1 - strength) * scheme.encoder + strength * noise.reshape(scheme.encoder.shape)
    decs = []
    for d in scheme.decoders:
        r = rng.dirichlet(np.full(d.shape[2], 0.3), size=d.shape[:2])
        decs.append((1 - strength) * d + strength * r)
    return CrScheme(scheme.n, scheme.source, scheme.alphabet_sizes, scheme.K_size,
                    scheme.W_sizes, enc, tuple(decs))


def random_deterministic_scheme(source, alphabet_sizes, n: int, K_size: int, W_sizes,
                                rng: np.random.Generator) -> CrScheme:
    """Uniformly random deterministic encoder and decoders."""
    sizes = tuple(int(s) for s in alphabet_sizes)
    W_sizes = tuple(int(w) for w in W_sizes)
    S = source.alphabet_size ** n
    enc = np.zeros((S, K_size) + W_sizes)
    enc[(np.arange(S), rng.integers(K_size, size=S))
        + tuple(rng.integers(w, size=S) for w in W_sizes)] = 1.0
    decs = []
    for j, w in enumerate(W_sizes):
        ny = sizes[j] ** n
        d = np.zeros((ny, w, K_size))
        idx = np.indices((ny, w))
        d[idx[0], idx[1], rng.integers(K_size, size=(ny, w))] = 1.0
        decs.append(d)
    return CrScheme(n, source, sizes, K_size, W_sizes, enc, tuple(decs))


# ---------------------------------------------------------------- certificate

@dataclass(frozen=True)
class Certificate:
    verdict: str              # "SOUND" or "UNSOUND"
    bound: float
    actual_tv: float
    d_used: float
    delta_used: float
    vacuous: bool

    @property
    def sound(self) -> bool:
        return self.verdict == "SOUND"


def converse_certificate(scheme: CrScheme, weights, d_value: float, delta: float,
                         evaluation: SchemeEvaluation | None = None) -> Certificate:
    """Compare a scheme's exact TV-to-ideal with the omniscient-helper lower bound.

    ``d_value`` must dominate ``d(mu, Q_{Y_j}^n, c)`` for some ``mu`` with
    ``E_1(Q^n || mu) <= delta``.
    """
    ev = evaluation or evaluate_scheme(scheme)
    bound = omni_bound(scheme.sizes, weights, d_value, delta)
    vacuous = not (bound > 0)
    sound = ev.tv_to_ideal >= bound - 1e-9
    return Certificate("SOUND" if sound else "UNSOUND", bound, ev.tv_to_ideal,
                       float(d_value), float(delta), vacuous)


def full_information_scheme(source, alphabet_sizes, n: int, K_size: int,
                            k_labels=None) -> CrScheme:
    """Every ``W_j`` is the full source sequence index; ``K`` is a fixed labeling."""
    sizes = tuple(int(s) for s in alphabet_sizes)
    S = source.alphabet_size ** n
    k_lab = np.arange(S) % K_size if k_labels is None else np.asarray(k_labels)
    W = (S,) * len(sizes)
    enc = np.zeros((S, K_size) + W)
    enc[(np.arange(S), k_lab) + (np.arange(S),) * len(sizes)] = 1.0
    decs = []
    for j in range(len(sizes)):
        d = np.zeros((sizes[j] ** n, S, K_size))
        d[:, np.arange(S), k_lab] = 1.0
        decs.append(d)
    return CrScheme(n, source, sizes, K_size, W, enc, tuple(decs))


def constant_scheme(source, alphabet_sizes, n: int) -> CrScheme:
    sizes = tuple(int(s) for s in alphabet_sizes)
    S = source.alphabet_size ** n
    m = len(sizes)
    enc = np.ones((S, 1) + (1,) * m)
    decs = tuple(np.ones((s ** n, 1, 1)) for s in sizes)
    return CrScheme(n, source, sizes, 1, (1,) * m, enc, decs)


def log_sizes(scheme: CrScheme) -> tuple:
    """Per-letter rates ``(R, R_1..R_m)`` in nats."""
    return (math.log(scheme.K_size) / scheme.n,) + tuple(
        math.log(w) / scheme.n for w in scheme.W_sizes)
