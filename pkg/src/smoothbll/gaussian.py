"""Gaussian sources: the log-det program F(M), the constant C and d*.

Observations are ``Y_j = A_j X + Z_j`` with ``X ~ N(0, Sigma)`` and
``Z_j ~ N(0, N_j)``; reference measures are Lebesgue.  ``N_j`` may be zero
(deterministic linear maps, e.g. the omniscient setting ``X = (Y_1..Y_m)``)
provided ``A_j`` has full row rank.

``F(M) = sup_{0 <= S <= M} h(N(0,S)) - sum_j c_j h(N(0, A_j S A_j^T + N_j))``
is solved in the whitened variable ``S = M^{1/2} T M^{1/2}``, ``0 <= T <= I``,
by projected ascent along the direction ``T grad T`` with eigenvalue
clipping to ``[eta, 1]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_2PIE = np.log(2 * np.pi * np.e)
ETA = 1e-10
CAP = 50.0


def _sym(a) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return a


def _sqrtm_psd(m):
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def _logdet_pd(m) -> float:
    w = np.linalg.eigvalsh(m)
    if np.any(w <= 0):
        return -np.inf
    return float(np.sum(np.log(w)))


@dataclass(frozen=True)
class GaussianInstance:
    sigma: np.ndarray
    maps: tuple
    noise: tuple
    weights: tuple

    def __post_init__(self):
        sigma = _sym(self.sigma)
        k = sigma.shape[0]
        if sigma.shape != (k, k) or not np.allclose(sigma, sigma.T, atol=1e-12):
            raise ValueError("sigma must be a symmetric square matrix")
        if np.linalg.eigvalsh(sigma).min() <= 0:
            raise ValueError("sigma must be positive definite")
        maps = tuple(np.atleast_2d(np.asarray(a, dtype=float)) for a in self.maps)
        m = len(maps)
        if m < 1:
            raise ValueError("need at least one observation map")
        noise = self.noise
        if noise is None:
            noise = (None,) * m
        noise = tuple(np.zeros((a.shape[0], a.shape[0])) if n is None else _sym(n)
                      for a, n in zip(maps, noise))
        weights = tuple(float(c) for c in self.weights)
        if len(noise) != m or len(weights) != m:
            raise ValueError("maps, noise and weights must have equal length")
        for j, (a, n, c) in enumerate(zip(maps, noise, weights)):
            if a.shape[1] != k:
                raise ValueError(f"map A_{j} must have {k} columns")
            if n.shape != (a.shape[0], a.shape[0]) or not np.allclose(n, n.T, atol=1e-12):
                raise ValueError(f"noise N_{j} must be symmetric of size {a.shape[0]}")
            wn = np.linalg.eigvalsh(n)
            if wn.min() < -1e-12:
                raise ValueError(f"noise N_{j} must be positive semidefinite")
            if wn.min() <= 1e-12 and np.linalg.matrix_rank(a) < a.shape[0]:
                raise ValueError(f"A_{j} needs full row rank when N_{j} is singular")
            if not (c > 0 and np.isfinite(c)):
                raise ValueError(f"weight c_{j} must be positive")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "noise", noise)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    @property
    def m(self) -> int:
        return len(self.maps)

    def is_omniscient(self) -> bool:
        """``X = (Y_1, ..., Y_m)``: noiseless maps selecting disjoint coordinate blocks."""
        if any(np.any(n != 0) for n in self.noise):
            return False
        stacked = np.vstack(self.maps)
        return stacked.shape == (self.dim, self.dim) and np.allclose(
            np.sort(stacked, axis=None)[-self.dim:], 1.0) and np.allclose(
            np.abs(stacked).sum(axis=0), 1.0) and np.allclose(np.abs(stacked).sum(axis=1), 1.0)

    @classmethod
    def omniscient(cls, sigma, weights, block_sizes=None) -> "GaussianInstance":
        sigma = _sym(sigma)
        k = sigma.shape[0]
        block_sizes = [1] * k if block_sizes is None else list(block_sizes)
        if sum(block_sizes) != k:
            raise ValueError("block sizes must add up to the dimension")
        maps, start = [], 0
        for b in block_sizes:
            a = np.zeros((b, k))
            a[:, start:start + b] = np.eye(b)
            maps.append(a)
            start += b
        return cls(sigma, tuple(maps), None, tuple(weights))


@dataclass(frozen=True)
class GaussianFResult:
    value: float
    optimal_cov: np.ndarray | None
    diverged_reason: str | None = None


def gaussian_entropy(cov) -> float:
    """Differential entropy of ``N(0, cov)`` in nats; ``-inf`` for singular ``cov``."""
    cov = _sym(cov)
    if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T, atol=1e-12):
        raise ValueError("covariance must be symmetric")
    w = np.linalg.eigvalsh(cov)
    scale = max(1.0, float(np.abs(w).max()))
    if w.min() < -1e-12 * scale:
        raise ValueError("covariance must be positive semidefinite")
    if w.min() <= 1e-300:
        return -np.inf
    k = cov.shape[0]
    return 0.5 * (k * LOG_2PIE + float(np.sum(np.log(w))))


class _Program:
    """phi(T) = 1/2 logdet T - sum_j c_j/2 logdet(B_j T B_j^T + N_j)."""

    def __init__(self, M, inst: GaussianInstance):
        self.root = _sqrtm_psd(M)
        self.B = [a @ self.root for a in inst.maps]
        self.N = list(inst.noise)
        self.c = inst.weights
        self.k = M.shape[0]

    def value(self, T) -> float:
        v = 0.5 * _logdet_pd(T)
        for b, n, c in zip(self.B, self.N, self.c):
            ld = _logdet_pd(b @ T @ b.T + n)
            if ld == -np.inf:
                return np.inf
            v -= 0.5 * c * ld
        return v

    def direction(self, T):
        D = 0.5 * T
        for b, n, c in zip(self.B, self.N, self.c):
            bt = b @ T
            D = D - 0.5 * c * bt.T @ np.linalg.solve(b @ T @ b.T + n, bt)
        return 0.5 * (D + D.T)


def _project(T, eta=ETA):
    w, v = np.linalg.eigh(0.5 * (T + T.T))
    return (v * np.clip(w, eta, 1.0)) @ v.T


def _ascend(prog: _Program, T, max_iter=20000, tol=1e-15):
    f = prog.value(T)
    step = 1.0
    stall = 0
    for _ in range(max_iter):
        D = prog.direction(T)
        improved = False
        while step > 1e-12:
            Tn = _project(T + step * D)
            fn = prog.value(Tn)
            if fn > f - 1e-16:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        gain = fn - f
        T, f = Tn, fn
        if f > CAP:
            break
        step = min(step * 2.0, 1e3)
        stall = stall + 1 if gain <= tol else 0
        if stall >= 5:
            break
    return T, f


def _collapse_slope(prog: _Program, T):
    """Asymptotic d phi / d log(alpha) when eigenvalues at the floor shrink by alpha."""
    w, v = np.linalg.eigh(T)
    low = w <= 1e3 * ETA
    if not np.any(low):
        return 0.0

    def at(alpha):
        ww = np.where(low, alpha, w)
        return prog.value((v * ww) @ v.T)

    a1, a2 = 1e-6, 1e-8
    return (at(a2) - at(a1)) / np.log(a2 / a1)


def gaussian_F(M, inst: GaussianInstance, *, starts: int = 4, seed: int = 0,
               max_dim: int = 8) -> GaussianFResult:
    """Covariance-constrained log-det program ``F(M)`` (value in nats)."""
    M = _sym(M)
    if inst.dim > max_dim:
        raise ValueError(f"dimension {inst.dim} exceeds max_dim={max_dim}")
    if M.shape != (inst.dim, inst.dim) or not np.allclose(M, M.T, atol=1e-12):
        raise ValueError("M must be symmetric with the source dimension")
    if np.linalg.eigvalsh(M).min() <= 0:
        raise ValueError("M must be positive definite")
    prog = _Program(M, inst)
    k = inst.dim
    const = 0.5 * _logdet_pd(M) + 0.5 * k * LOG_2PIE - sum(
        0.5 * c * a.shape[0] * LOG_2PIE for a, c in zip(inst.maps, inst.weights))
    rng = np.random.default_rng(seed)
    inits = [np.eye(k), 0.5 * np.eye(k), 1e-3 * np.eye(k)]
    for _ in range(max(0, starts - len(inits))):
        g = rng.normal(size=(k, k))
        inits.append(_project(g @ g.T / k + 0.05 * np.eye(k)))
    best_T, best = None, -np.inf
    for T0 in inits:
        T, f = _ascend(prog, _project(T0))
        if f > best:
            best_T, best = T, f
    if best == np.inf or best > CAP:
        return GaussianFResult(np.inf, None, f"objective exceeded {CAP} nats")
    slope = min(_collapse_slope(prog, best_T), _collapse_slope(prog, ETA * np.eye(k)))
    if slope < -1e-6:
        return GaussianFResult(
            np.inf, None,
            f"unbounded as covariance directions collapse (slope {-slope:.6g} per log-scale)")
    S = prog.root @ best_T @ prog.root
    return GaussianFResult(float(best + const), 0.5 * (S + S.T), None)


def gaussian_C(inst: GaussianInstance) -> float:
    """``sum_j c_j h(Y_j) - h(X)`` (the source entropy is ``h(X)``)."""
    val = -gaussian_entropy(inst.sigma)
    for a, n, c in zip(inst.maps, inst.noise, inst.weights):
        val += c * gaussian_entropy(a @ inst.sigma @ a.T + n)
    return val


def gaussian_dstar(inst: GaussianInstance) -> float:
    F = gaussian_F(inst.sigma, inst)
    if not np.isfinite(F.value):
        return np.inf
    return F.value + gaussian_C(inst)


def _quadratic_form(inst: GaussianInstance) -> np.ndarray:
    if any(np.any(n != 0) for n in inst.noise):
        raise ValueError("variance_V needs noiseless maps (the X = Y^m configuration)")
    B = np.linalg.inv(inst.sigma)
    for a, c in zip(inst.maps, inst.weights):
        cov = a @ inst.sigma @ a.T
        if np.linalg.eigvalsh(cov).min() <= 0:
            raise ValueError("degenerate observation covariance")
        B = B - c * a.T @ np.linalg.solve(cov, a)
    return B


def variance_V(inst: GaussianInstance) -> float:
    """Variance of ``sum_j c_j i_{Q_Yj}(Y_j) - i_{Q_X}(X)`` under Lebesgue references.

    The statistic is ``const + x^T B x / 2`` with
    ``B = Sigma^{-1} - sum_j c_j A_j^T (A_j Sigma A_j^T)^{-1} A_j``, so
    ``V = tr((B Sigma)^2) / 2``.
    """
    BS = _quadratic_form(inst) @ inst.sigma
    return float(0.5 * np.trace(BS @ BS))


def information_statistic(inst: GaussianInstance, x: np.ndarray) -> np.ndarray:
    """Per-sample ``sum_j c_j log q_{Y_j}(A_j x) - log q_X(x)`` for rows of ``x``."""
    x = np.atleast_2d(x)
    out = -_gauss_logpdf(x, inst.sigma)
    for a, c in zip(inst.maps, inst.weights):
        out = out + c * _gauss_logpdf(x @ a.T, a @ inst.sigma @ a.T)
    return out


def _gauss_logpdf(x, cov):
    k = cov.shape[0]
    sol = np.linalg.solve(cov, x.T).T
    return -0.5 * (k * np.log(2 * np.pi) + _logdet_pd(cov)) - 0.5 * np.sum(x * sol, axis=1)
