"""Mutual-information constant d*, concave envelopes and the cost-constrained
single-letter value.

``d*(Q_X, c) = sup_{P_{U|X}} sum_l c_l I(U;Y_l) - I(U;X)`` is the upper
concave envelope of

    sigma(P) = sum_l c_l D(P Q_l || Q_{Y_l}) - D(P || Q_X)

evaluated at ``Q_X``.  ``dstar`` maximizes over conditional laws ``P_{U|X}``
with a Blahut-Arimoto style minorize-maximize iteration: the convex part
``sum c_l I(U;Y_l)`` is linearized, and ``I(U;X)`` is replaced by the
divergence to the current ``P_U``, which gives the closed-form update

    P(u|x)  propto  P_U(u) exp( sum_l c_l sum_y Q_l(y|x) log(P_{Y_l|U}(y|u) / Q_{Y_l}(y)) ).

``envelope_at`` (LP over a simplex grid) and ``dstar_bruteforce``
(enumeration of basic decompositions) are independent checks.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.special import rel_entr

from .gbll import OptimizerOptions, gbll_constant
from .measures import Channel, FiniteMeasure, GbllInstance, xlogy_ratio

_NEG_BIG = -1e300


@dataclass(frozen=True)
class AuxDecomposition:
    u_weights: np.ndarray
    components: tuple

    def barycenter(self) -> np.ndarray:
        return sum(w * c.weights for w, c in zip(self.u_weights, self.components))


@dataclass(frozen=True)
class CostFunction:
    """Per-symbol cost ``tau`` (may contain ``inf``) with threshold ``epsilon``."""

    values: np.ndarray
    epsilon: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or np.any(np.isnan(v)) or np.any(v == -np.inf):
            raise ValueError("cost values must be a vector of reals or +inf")
        object.__setattr__(self, "values", v)
        if not np.any(v[np.isfinite(v)] <= self.epsilon):
            raise ValueError("cost function is infeasible: no symbol with cost <= epsilon")


@dataclass(frozen=True)
class ConstrainedResult:
    value: float
    dual_bound: float
    decomposition: AuxDecomposition | None


def _kernels(channels):
    return [ch.kernel if isinstance(ch, Channel) else np.asarray(ch, dtype=float)
            for ch in channels]


def sigma(q_x: FiniteMeasure, channels, weights, p: FiniteMeasure) -> float:
    """``sum_j c_j D(P_{Y_j} || Q_{Y_j}) - D(P || Q_X)``; weights may be zero."""
    q = q_x.weights
    pw = p.weights
    if np.any((pw > 0) & (q == 0)):
        return -np.inf
    val = -float(xlogy_ratio(pw, q).sum())
    for k, c in zip(_kernels(channels), weights):
        if c:
            val += c * float(xlogy_ratio(pw @ k, q @ k).sum())
    return val


def _sigma_batch(q, kernels, weights, P):
    """sigma on rows of ``P`` (all rows supported inside supp(q)); direct formula."""
    val = -rel_entr(P, q[None, :]).sum(axis=1)
    for k, c in zip(kernels, weights):
        if c:
            val = val + c * rel_entr(P @ k, (q @ k)[None, :]).sum(axis=1)
    return val


# --------------------------------------------------------------------- dstar

class _Aux:
    def __init__(self, q_x: FiniteMeasure, channels, weights):
        self.full_size = q_x.alphabet_size
        self.xs = q_x.support
        self.q = q_x.weights[self.xs] / q_x.weights[self.xs].sum()
        self.c = np.array(weights, dtype=float)
        self.kernels, self.log_qy = [], []
        for k in _kernels(channels):
            k = k[self.xs]
            qy = self.q @ k
            reach = qy > 0
            self.kernels.append(k[:, reach])
            self.log_qy.append(np.log(qy[reach]))

    def value(self, A):
        """Objective for a batch of joints ``A[r, u, x] = Q(x) P(u|x)``."""
        w = A.sum(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            Pu = A / w[:, :, None]
            val = -np.where(A > 0, A * (np.log(Pu) - np.log(self.q)), 0.0).sum(axis=(1, 2))
            for k, lq, c in zip(self.kernels, self.log_qy, self.c):
                B = A @ k
                py = B / w[:, :, None]
                val = val + c * np.where(B > 0, B * (np.log(py) - lq), 0.0).sum(axis=(1, 2))
        return val

    def step(self, A):
        w = A.sum(axis=2)
        G = np.zeros_like(A)
        with np.errstate(divide="ignore", invalid="ignore"):
            for k, lq, c in zip(self.kernels, self.log_qy, self.c):
                py = (A @ k) / w[:, :, None]
                L = np.maximum(np.log(py) - lq, _NEG_BIG)
                L = np.where(np.isnan(L), 0.0, L)
                G = G + c * (L @ k.T)
            G = G + np.log(w)[:, :, None]
        G = G - G.max(axis=1, keepdims=True)
        E = np.exp(G)
        cond = E / E.sum(axis=1, keepdims=True)
        return cond * self.q[None, None, :]

    def decomposition(self, A) -> AuxDecomposition:
        w = A.sum(axis=1)
        keep = w > 1e-15
        comps = []
        for u in np.flatnonzero(keep):
            full = np.zeros(self.full_size)
            full[self.xs] = A[u] / w[u]
            comps.append(FiniteMeasure(full))
        return AuxDecomposition(w[keep] / w[keep].sum(), tuple(comps))


def dstar(q_x: FiniteMeasure, channels, weights, u_cap: int | None = None, *,
          restarts: int = 32, max_iter: int = 5000, tol: float = 1e-13, seed: int = 0,
          warm_start: AuxDecomposition | None = None):
    """``(d*, AuxDecomposition)``; ``u_cap`` defaults to ``|X| + 1``."""
    if not q_x.is_probability():
        raise ValueError("Q_X must be a probability measure")
    aux = _Aux(q_x, channels, weights)
    n = aux.xs.size
    u_cap = n + 1 if u_cap is None else int(u_cap)
    if u_cap < 1:
        raise ValueError("u_cap must be >= 1")
    trivial = AuxDecomposition(np.array([1.0]), (q_x,))
    if u_cap == 1 or n == 1:
        return 0.0, trivial
    rng = np.random.default_rng(seed)
    starts = []
    for _ in range(restarts):
        cond = rng.dirichlet(np.full(u_cap, 0.5), size=n).T      # (u, x)
        starts.append(cond)
    # near-deterministic splits
    for _ in range(max(2, restarts // 8)):
        lab = rng.integers(0, u_cap, size=n)
        cond = np.full((u_cap, n), 0.02 / u_cap)
        cond[lab, np.arange(n)] += 0.98
        starts.append(cond / cond.sum(axis=0))
    if warm_start is not None:
        comps = [c.weights[aux.xs] for c in warm_start.components]
        A0 = np.array([w * c for w, c in zip(warm_start.u_weights, comps)])
        if A0.shape[0] < u_cap:
            pad = np.tile(aux.q, (u_cap - A0.shape[0], 1)) * 1e-6
            A0 = np.vstack([A0 * (1 - 1e-6 * (u_cap - A0.shape[0])), pad])
        if A0.shape[0] == u_cap:
            starts.append(A0 / aux.q[None, :])
    A = np.array([s * aux.q[None, :] for s in starts])
    f = aux.value(A)
    active = np.ones(len(A), dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        An = aux.step(A[idx])
        fn = aux.value(An)
        up = fn >= f[idx]
        A[idx[up]] = An[up]
        done = ~up | (fn - f[idx] <= tol)
        f[idx[up]] = fn[up]
        active[idx[done]] = False
    best = int(np.argmax(f))
    if f[best] <= 0.0:
        return 0.0, trivial
    return float(f[best]), aux.decomposition(A[best])


def dstar_cap_sensitivity(q_x: FiniteMeasure, channels, weights, max_cap: int | None = None,
                          **kw):
    """``[(u_cap, d*)]`` for ``u_cap = 1..max_cap``, each warm-started from the previous."""
    max_cap = (q_x.alphabet_size + 2) if max_cap is None else max_cap
    out, prev = [], None
    for cap in range(1, max_cap + 1):
        val, dec = dstar(q_x, channels, weights, cap, warm_start=prev, **kw)
        out.append((cap, val))
        prev = dec
    return out


# ---------------------------------------------------------- grid-based oracles

def simplex_grid(k: int, steps: int) -> np.ndarray:
    """All points of the (k-1)-simplex with coordinates in ``{0, 1/steps, ..., 1}``."""
    pts = [c for c in itertools.combinations(range(steps + k - 1), k - 1)]
    out = np.empty((len(pts), k))
    for i, bars in enumerate(pts):
        prev = -1
        for j, b in enumerate(bars):
            out[i, j] = b - prev - 1
            prev = b
        out[i, k - 1] = steps + k - 2 - prev
    return out / steps


def _default_step(k):
    return {1: 1.0, 2: 1e-3, 3: 2e-2}.get(k)


def envelope_at(q_x: FiniteMeasure, channels, weights, grid_resolution: float | None = None) -> float:
    """Upper concave envelope of sigma at ``Q_X`` by LP over sigma on a simplex grid."""
    xs = q_x.support
    k = xs.size
    if k > 3:
        raise ValueError("envelope grid is limited to alphabets of size <= 3")
    if k == 1:
        return 0.0
    h = grid_resolution or _default_step(k)
    steps = int(round(1.0 / h))
    q = q_x.weights[xs]
    grid = np.vstack([simplex_grid(k, steps), q])
    kern = [kk[xs] for kk in _kernels(channels)]
    s = _sigma_batch(q, kern, weights, grid)
    res = linprog(-s, A_eq=grid.T, b_eq=q, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"envelope LP failed: {res.message}")
    return float(-res.fun)


def dstar_bruteforce(q_x: FiniteMeasure, channels, weights, grid_step: float = 1e-3,
                     u_max: int = 4) -> float:
    """Best decomposition over grid points with at most ``u_max`` components.

    Enumerates basic decompositions (support of at most ``|X|`` grid points,
    barycentric weights solved exactly); optimal LP solutions are basic, so
    this covers every decomposition with ``|U| <= u_max`` once
    ``u_max >= |X|``.  Binary alphabets use a vectorized chord search.
    """
    xs = q_x.support
    k = xs.size
    if k == 1:
        return 0.0
    q = q_x.weights[xs]
    kern = [kk[xs] for kk in _kernels(channels)]
    steps = int(round(1.0 / grid_step))
    grid = simplex_grid(k, steps)
    s = _sigma_batch(q, kern, weights, grid)
    best = 0.0
    if k == 2:
        t = grid[:, 0]
        lo = t < q[0]
        hi = t > q[0]
        t1, s1 = t[lo][:, None], s[lo][:, None]
        t2, s2 = t[hi][None, :], s[hi][None, :]
        if t1.size and t2.size:
            lam = (t2 - q[0]) / (t2 - t1)
            best = max(best, float(np.max(lam * s1 + (1 - lam) * s2)))
        return best
    size = min(u_max, k)
    for r in range(2, size + 1):
        for combo in itertools.combinations(range(len(grid)), r):
            pts = grid[list(combo)]
            w, *_ = np.linalg.lstsq(pts.T, q, rcond=None)
            if np.all(w >= -1e-12) and np.allclose(pts.T @ w, q, atol=1e-10):
                best = max(best, float(w @ s[list(combo)]))
    return best


# --------------------------------------------------- constrained single letter

def _feasible_point(tau: np.ndarray, eps: np.ndarray) -> np.ndarray:
    n = tau.shape[1]
    # maximize the minimum slack to get a well-interior feasible point
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([tau, np.ones((tau.shape[0], 1))])
    res = linprog(c, A_ub=A_ub, b_ub=eps, A_eq=np.r_[np.ones(n), 0.0][None, :], b_eq=[1.0],
                  bounds=[(0, None)] * n + [(None, 1.0)], method="highs")
    if res.status != 0 or res.x[-1] < -1e-12:
        raise ValueError("cost constraints are infeasible")
    return np.clip(res.x[:n], 0, None)


def _primal(mu, kernels, nus, c, tau, eps, u_cap, starts):
    n = mu.size
    log_mu = np.log(mu)
    log_nus = [np.log(v) for v in nus]

    def fg(v):
        A = np.maximum(v.reshape(u_cap, n), 1e-300)
        w = A.sum(axis=1)
        Pu = A / w[:, None]
        lp = np.log(Pu)
        val = -np.sum(A * (lp - log_mu))
        grad = -(lp - log_mu)
        for k, lnu, cj in zip(kernels, log_nus, c):
            B = A @ k
            lpy = np.log(B / w[:, None])
            val += cj * np.sum(B * (lpy - lnu))
            grad = grad + cj * ((lpy - lnu) @ k.T)
        return -val, -grad.ravel()

    cons = [{"type": "eq", "fun": lambda v: v.sum() - 1.0,
             "jac": lambda v: np.ones_like(v)}]
    if tau.shape[0]:
        tiled = np.tile(tau, (1, u_cap))
        cons.append({"type": "ineq", "fun": lambda v: eps - tiled @ v,
                     "jac": lambda v: -tiled})
    best_val, best_A = -np.inf, None
    for A0 in starts:
        res = minimize(fg, A0.ravel(), jac=True, method="SLSQP", constraints=cons,
                       bounds=[(0.0, 1.0)] * (u_cap * n),
                       options={"maxiter": 1000, "ftol": 1e-15})
        A = np.clip(res.x.reshape(u_cap, n), 0, None)
        A /= A.sum()
        if tau.shape[0] and np.any(tau @ A.sum(axis=0) > eps + 1e-9):
            continue
        val = -fg(A.ravel())[0]
        if val > best_val:
            best_val, best_A = val, A
    return best_val, best_A


def constrained_single_letter(inst: GbllInstance, costs, u_cap: int | None = None, *,
                              restarts: int = 8, seed: int = 0,
                              dual: bool = True) -> ConstrainedResult:
    """Cost-constrained single-letter value ``g(1)``.

    Primal: SLSQP over joints ``P_{UX}`` (``|U| = u_cap``) with the cost
    constraints, which are linear in ``P_X``.  Dual certificate:
    ``min_{lambda >= 0} d(mu e^{-lambda.tau}) + lambda.eps``.
    """
    costs = list(costs)
    mu_full = inst.mu.weights
    allowed = mu_full > 0
    active = []
    for cf in costs:
        if cf.values.size != mu_full.size:
            raise ValueError("cost function length does not match the input alphabet")
        if not np.isfinite(cf.epsilon):
            continue
        allowed &= np.isfinite(cf.values)
        active.append(cf)
    if not np.any(allowed):
        raise ValueError("cost constraints exclude every symbol")
    xs = np.flatnonzero(allowed)
    n = xs.size
    if not active:
        sub = inst
        if n < mu_full.size:
            w = np.where(allowed, mu_full, 0.0)
            sub = inst.with_mu(FiniteMeasure(w))
        r = gbll_constant(sub)
        dec = AuxDecomposition(np.array([1.0]), (r.maximizer_P,))
        return ConstrainedResult(r.constant_d, r.constant_d, dec)
    tau = np.array([cf.values[xs] for cf in active])
    eps = np.array([cf.epsilon for cf in active])
    p_feas = _feasible_point(tau, eps)
    mu = mu_full[xs]
    kernels, nus = [], []
    for ch, nu in zip(inst.channels, inst.nus):
        k = ch.kernel[xs]
        reach = k.sum(axis=0) > 0
        if np.any(nu.weights[reach] == 0):
            return ConstrainedResult(np.inf, np.inf, None)
        kernels.append(k[:, reach])
        nus.append(nu.weights[reach])
    c = np.array(inst.weights)
    u_cap = n + 1 if u_cap is None else int(u_cap)
    rng = np.random.default_rng(seed)
    starts = [np.tile(p_feas / u_cap, (u_cap, 1))]
    for _ in range(restarts):
        split = rng.dirichlet(np.ones(u_cap), size=n).T
        starts.append(split * p_feas[None, :])
    # starts from single-letter maximizers of tilted reference measures
    for lam in (0.5, 2.0, 8.0):
        expo = -lam * tau.sum(axis=0)
        tilt = mu * np.exp(expo - expo.max())
        full = np.zeros(mu_full.size)
        full[xs] = tilt
        p = gbll_constant(inst.with_mu(FiniteMeasure(full)),
                          OptimizerOptions(restarts=8, seed=seed)).maximizer_P.weights[xs]
        theta = 0.5
        split = np.zeros((u_cap, n))
        split[0] = theta * p
        split[1 % u_cap] += np.clip(p_feas - theta * p, 0, None)
        if split.sum() > 0 and np.all(tau @ split.sum(axis=0) <= eps * split.sum() + 1e-12):
            starts.append(split / split.sum())
    val, A = _primal(mu, kernels, nus, c, tau, eps, u_cap, starts)
    dec = None
    if A is not None:
        w = A.sum(axis=1)
        keep = w > 1e-15
        comps = []
        for u in np.flatnonzero(keep):
            full = np.zeros(mu_full.size)
            full[xs] = A[u] / w[u]
            comps.append(FiniteMeasure(full))
        dec = AuxDecomposition(w[keep] / w[keep].sum(), tuple(comps))
    bound = _dual_bound(inst, xs, tau, eps, seed) if dual else np.inf
    return ConstrainedResult(float(val), float(bound), dec)


def _dual_bound(inst, xs, tau, eps, seed):
    mu_full = inst.mu.weights
    cache = {}

    def dual(lam):
        key = tuple(np.round(lam, 14))
        if key not in cache:
            # shift the exponent to avoid underflow; d(s mu) = d(mu) + log s
            expo = -(lam @ tau)
            shift = expo.max()
            full = np.zeros(mu_full.size)
            full[xs] = mu_full[xs] * np.exp(expo - shift)
            r = gbll_constant(inst.with_mu(FiniteMeasure(full)),
                              OptimizerOptions(restarts=16, seed=seed))
            p = r.maximizer_P.weights[xs]
            cache[key] = (r.constant_d + shift + lam @ eps, eps - tau @ p)
        return cache[key]

    best = np.inf
    for lam0 in (np.zeros(len(eps)), np.ones(len(eps))):
        res = minimize(dual, lam0, jac=True, method="L-BFGS-B",
                       bounds=[(0, None)] * len(eps), options={"maxiter": 200})
        best = min(best, float(res.fun))
    return best
