"""GBLL best constant and its functional (dual) form.

The best constant is

    d = sup_P  sum_l c_l D(P Q_l || nu_l) - D(P || mu),   P << mu,

a difference of two convex functions of ``P``.  Linearizing the first term
and maximizing the remainder in closed form gives the multiplicative update

    P'(x)  propto  mu(x) exp( sum_l c_l sum_y Q_l(y|x) log(P Q_l(y) / nu_l(y)) )

which never decreases the objective (a mirror-ascent step in the softmax
geometry with unit step).  Batches of restarts are iterated together.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .measures import FiniteMeasure, GbllInstance, xlogy_ratio

_NEG_BIG = -1e300


@dataclass(frozen=True)
class OptimizerOptions:
    restarts: int = 64
    max_iter: int = 20000
    tol: float = 1e-10
    cap: float = 50.0
    seed: int = 0
    warm_starts: tuple = ()


@dataclass(frozen=True)
class GbllResult:
    constant_d: float
    maximizer_P: FiniteMeasure
    diverged: bool
    trace: list = field(default_factory=list)
    possibly_unattained: bool = False
    note: str = ""


@dataclass(frozen=True)
class FunctionTuple:
    """Nonnegative test functions ``f_j`` on the output alphabets."""

    fs: tuple

    def __post_init__(self):
        fs = []
        for j, f in enumerate(self.fs):
            a = np.array(f, dtype=float)
            if a.ndim != 1 or np.any(a < 0) or not np.any(a > 0) or np.any(np.isnan(a)):
                raise ValueError(f"f_{j} must be a nonnegative vector with a positive entry")
            a.setflags(write=False)
            fs.append(a)
        object.__setattr__(self, "fs", tuple(fs))

    def scaled(self, j: int, s: float) -> "FunctionTuple":
        fs = list(self.fs)
        fs[j] = fs[j] * s
        return FunctionTuple(tuple(fs))


# ---------------------------------------------------------------- objective

def gbll_objective(inst: GbllInstance, p: FiniteMeasure) -> float:
    """``sum_l c_l D(P Q_l || nu_l) - D(P || mu)``; ``-inf`` unless ``P << mu``."""
    pw = p.weights
    if pw.size != inst.mu.alphabet_size:
        raise ValueError("dimension mismatch between P and mu")
    if np.any((pw > 0) & (inst.mu.weights == 0)):
        return -np.inf
    val = -float(xlogy_ratio(pw, inst.mu.weights).sum())
    for ch, nu, c in zip(inst.channels, inst.nus, inst.weights):
        val += c * float(xlogy_ratio(pw @ ch.kernel, nu.weights).sum())
    return val


class _Reduced:
    """Instance restricted to supp(mu) and to reachable output symbols."""

    def __init__(self, inst: GbllInstance):
        self.inst = inst
        self.xs = inst.mu.support
        self.log_mu = np.log(inst.mu.weights[self.xs])
        self.kernels = []
        self.log_nus = []
        self.c = np.array(inst.weights)
        self.infinite = False
        for ch, nu in zip(inst.channels, inst.nus):
            k = ch.kernel[self.xs]
            reach = k.sum(axis=0) > 0
            if np.any(nu.weights[reach] == 0):
                self.infinite = True
            self.kernels.append(k[:, reach])
            with np.errstate(divide="ignore"):
                self.log_nus.append(np.log(nu.weights[reach]))
        self.size = self.xs.size

    def objective(self, P: np.ndarray) -> np.ndarray:
        """Row-wise objective for a batch ``P`` of shape (R, n)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            logP = np.log(P)
            val = -np.where(P > 0, P * (logP - self.log_mu), 0.0).sum(axis=1)
            for k, lnu, c in zip(self.kernels, self.log_nus, self.c):
                B = P @ k
                val = val + c * np.where(B > 0, B * (np.log(B) - lnu), 0.0).sum(axis=1)
        return val

    def step(self, P: np.ndarray) -> np.ndarray:
        G = np.tile(self.log_mu, (P.shape[0], 1))
        with np.errstate(divide="ignore"):
            for k, lnu, c in zip(self.kernels, self.log_nus, self.c):
                L = np.log(P @ k) - lnu
                L = np.maximum(L, _NEG_BIG)
                G = G + c * (L @ k.T)
        G = G - G.max(axis=1, keepdims=True)
        Q = np.exp(G)
        return Q / Q.sum(axis=1, keepdims=True)

    def expand(self, p: np.ndarray) -> FiniteMeasure:
        full = np.zeros(self.inst.mu.alphabet_size)
        full[self.xs] = p
        return FiniteMeasure(full / full.sum())


def _ascend(red: _Reduced, P0: np.ndarray, max_iter: int, tol: float):
    P = P0
    f = red.objective(P)
    active = np.ones(P.shape[0], dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Pn = red.step(P[idx])
        fn = red.objective(Pn)
        improved = fn >= f[idx]
        # the update is monotone up to rounding; keep the better point
        P[idx[improved]] = Pn[improved]
        done = ~improved | (np.abs(fn - f[idx]) <= tol)
        f[idx[improved]] = fn[improved]
        active[idx[done]] = False
    return P, f


def _starting_points(red: _Reduced, opts: OptimizerOptions) -> np.ndarray:
    n = red.size
    rng = np.random.default_rng(opts.seed)
    pts = [np.exp(red.log_mu - logsumexp(red.log_mu)), np.full(n, 1.0 / n)]
    pts.extend(np.eye(n))
    for w in opts.warm_starts:
        w = np.asarray(w, dtype=float)
        if w.size == red.inst.mu.alphabet_size:
            w = w[red.xs]
        if w.size == n and w.sum() > 0:
            w = 0.98 * w / w.sum() + 0.02 / n
            pts.append(w)
    if opts.restarts > 0:
        pts.extend(rng.dirichlet(np.ones(n), size=opts.restarts))
    return np.array(pts, dtype=float)


def gbll_constant(inst: GbllInstance, opts: OptimizerOptions | None = None) -> GbllResult:
    """Multi-start ascent for the GBLL best constant.

    Returns ``diverged=True`` with ``constant_d = inf`` when the supremum is
    infinite (some ``nu_j`` vanishes on an output reachable from supp(mu)) or
    when the best objective exceeds ``opts.cap``.
    """
    opts = opts or OptimizerOptions()
    red = _Reduced(inst)
    if red.infinite:
        # a point mass on the offending input already has infinite objective
        x = next(i for i in range(red.size) if any(
            np.any((k[i] > 0) & ~np.isfinite(lnu)) for k, lnu in zip(red.kernels, red.log_nus)))
        return GbllResult(np.inf, red.expand(np.eye(red.size)[x]), True, [],
                          note="some nu_j vanishes on a reachable output")
    P, f = _ascend(red, _starting_points(red, opts), opts.max_iter, opts.tol)
    best = int(np.argmax(f))
    value = float(f[best])
    trace = [(i, float(v)) for i, v in enumerate(f)]
    p_best = P[best]
    if value > opts.cap:
        return GbllResult(np.inf, red.expand(p_best), True, trace,
                          note=f"objective exceeded cap {opts.cap}")
    boundary = bool(np.any(p_best < 1e-12))
    return GbllResult(value, red.expand(p_best), False, trace,
                      possibly_unattained=boundary,
                      note="maximizer on the simplex boundary" if boundary else "")


# ------------------------------------------------------------ functional form

def _cond_log_f(k: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``E[log f(Y) | X=x]`` with ``0 log 0 = 0`` and ``-inf`` on charged zeros."""
    with np.errstate(divide="ignore"):
        lf = np.log(f)
    terms = np.where(k > 0, k * np.maximum(lf, _NEG_BIG), 0.0)
    out = terms.sum(axis=1)
    charged_zero = ((k > 0) & (f == 0)).any(axis=1)
    out[charged_zero] = -np.inf
    return out


def gbll_functional_gap(inst: GbllInstance, d: float, fs: FunctionTuple) -> float:
    """``log LHS - log RHS`` of the functional inequality at constant ``d``.

    Positive values mean the inequality fails for these functions.
    """
    if len(fs.fs) != inst.m:
        raise ValueError("need one function per channel")
    mu = inst.mu.weights
    xs = mu > 0
    h = np.zeros(int(xs.sum()))
    for ch, f in zip(inst.channels, fs.fs):
        if f.size != ch.output_size:
            raise ValueError("function length does not match output alphabet")
        h = h + _cond_log_f(ch.kernel[xs], f)
    lhs = logsumexp(h + np.log(mu[xs])) - d if np.any(np.isfinite(h)) else -np.inf
    rhs = 0.0
    for nu, f, c in zip(inst.nus, fs.fs, inst.weights):
        with np.errstate(divide="ignore"):
            rhs += c * np.log(np.sum(f ** (1.0 / c) * nu.weights))
    return float(lhs - rhs)


def _gap_and_grad(g_flat, red: _Reduced, nus_full, d, slices):
    gs = [g_flat[s] for s in slices]
    h = red.log_mu.copy()
    for k, g in zip(red.kernels, gs):
        h = h + k @ g
    lse = logsumexp(h)
    P = np.exp(h - lse)
    val = lse - d
    grads = []
    for k, g, lnu, c in zip(red.kernels, gs, nus_full, red.c):
        t = g / c + lnu
        lz = logsumexp(t)
        val -= c * lz
        grads.append(P @ k - np.exp(t - lz))
    return val, np.concatenate(grads)


def _alternate(red: _Reduced, gs, iters: int):
    for _ in range(iters):
        h = red.log_mu.copy()
        for k, g in zip(red.kernels, gs):
            h = h + k @ g
        P = np.exp(h - logsumexp(h))
        new = []
        for k, lnu, c in zip(red.kernels, red.log_nus, red.c):
            with np.errstate(divide="ignore"):
                new.append(c * np.maximum(np.log(P @ k) - lnu, -700.0))
        gs = new
    return gs


def indicator_functions(inst: GbllInstance, j: int, subset) -> FunctionTuple:
    """``f_j = (1_A + q 1_{A^c})^{c_j}`` with ``q = nu_j(A)/nu_j(Y)``; other ``f`` are 1."""
    nu = inst.nus[j].weights
    a = np.zeros(nu.size, dtype=bool)
    a[list(subset)] = True
    q = nu[a].sum() / nu.sum()
    fs = [np.ones(ch.output_size) for ch in inst.channels]
    fs[j] = np.where(a, 1.0, q) ** inst.weights[j]
    return FunctionTuple(tuple(fs))


def worst_case_functions(inst: GbllInstance, d: float, opts: OptimizerOptions | None = None):
    """Search for test functions maximizing the functional gap at ``d``.

    ``f_j = exp(g_j)`` with ``g_j`` unconstrained.  Each random start is
    improved by block-coordinate ascent (the tilted input law, then the
    optimal ``g_j`` given it) and polished with L-BFGS on the gap itself.
    Indicator-type probes are evaluated as extra candidates.
    Returns ``(FunctionTuple, best_gap)``.
    """
    opts = opts or OptimizerOptions(restarts=16)
    red = _Reduced(inst)
    if red.infinite:
        # the dual side is unbounded as well; report the indicator of the bad output
        fs = []
        for ch, nu in zip(inst.channels, inst.nus):
            fs.append(np.where(nu.weights == 0, 1.0, 1e-300))
        return FunctionTuple(tuple(fs)), np.inf
    rng = np.random.default_rng(opts.seed + 7919)
    reach = [ch.kernel[red.xs].sum(axis=0) > 0 for ch in inst.channels]
    sizes = [k.shape[1] for k in red.kernels]
    slices, start = [], 0
    for s in sizes:
        slices.append(slice(start, start + s))
        start += s

    def full_tuple(gs):
        fs = []
        for ch, r, g in zip(inst.channels, reach, gs):
            f = np.zeros(ch.output_size)
            f[r] = np.exp(np.clip(g - g.max(), -700, 0))
            fs.append(f)
        return FunctionTuple(tuple(fs))

    best_fs, best_gap = None, -np.inf
    starts = [[np.zeros(s) for s in sizes]]
    starts += [[rng.normal(scale=2.0, size=s) for s in sizes] for _ in range(max(opts.restarts, 1))]
    for gs in starts:
        gs = _alternate(red, gs, 400)
        x0 = np.concatenate(gs)
        res = minimize(lambda v: tuple(-t for t in _gap_and_grad(v, red, red.log_nus, d, slices)),
                       x0, jac=True, method="L-BFGS-B",
                       options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-11})
        gs = [res.x[s] for s in slices]
        fs = full_tuple(gs)
        gap = gbll_functional_gap(inst, d, fs)
        if gap > best_gap:
            best_fs, best_gap = fs, gap
    for j, ch in enumerate(inst.channels):
        k = ch.output_size
        if k > 10:
            continue
        for r in range(1, k):
            for a in itertools.combinations(range(k), r):
                fs = indicator_functions(inst, j, a)
                gap = gbll_functional_gap(inst, d, fs)
                if gap > best_gap:
                    best_fs, best_gap = fs, gap
    return best_fs, float(best_gap)


def set_form_slack(inst: GbllInstance, d: float, eps: float, subset) -> float:
    """Slack of ``2^c e^d q^{c(1-eps)} - mu(x: Q(A|x) >= 1-eps)`` for ``m = 1``.

    ``q = nu(A)`` with ``nu`` normalized.  Nonnegative whenever ``d`` is at
    least the best constant.
    """
    if inst.m != 1:
        raise ValueError("set form is stated for a single channel")
    (ch,), (nu,), (c,) = inst.channels, inst.nus, inst.weights
    a = np.zeros(ch.output_size, dtype=bool)
    a[list(subset)] = True
    q = nu.weights[a].sum() / nu.weights.sum()
    hit = ch.kernel[:, a].sum(axis=1) >= 1 - eps - 1e-15
    return float(2.0 ** c * np.exp(d) * q ** (c * (1 - eps)) - inst.mu.weights[hit].sum())
