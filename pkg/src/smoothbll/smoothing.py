"""Smoothed best constants over E_1-balls, typical restrictions and finite-n
smooth rates.

The smoothed constant is ``inf d(mu)`` over ``mu`` with ``E_1(Q || mu) <= delta``.
Because ``d`` is nondecreasing in ``mu`` pointwise and ``min(mu, Q)`` has the
same ``E_1`` distance to ``Q`` as ``mu``, the infimum may be taken over
mass-cutting measures ``mu = s * Q`` with ``0 <= s <= 1``.  Within that
family the outer search is exhaustive over maximal cut patterns on small
alphabets and greedy otherwise; both are followed by a continuous local
search on ``s`` driven by the envelope gradient ``d d / d s(x) = P*(x) / s(x)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .envelope import CostFunction, dstar
from .gbll import GbllResult, OptimizerOptions, gbll_constant
from .measures import (FiniteMeasure, GbllInstance, channel_power, measure_power,
                       push_forward, rel_entropy)

log = logging.getLogger(__name__)

ENUMERATION_CAP = 10 ** 6


class EnumerationCapError(RuntimeError):
    pass


@dataclass(frozen=True)
class SmoothOptions:
    exhaustive_limit: int = 20
    refine_top: int = 4
    s_max: float = 1.0
    inner: OptimizerOptions = field(default_factory=lambda: OptimizerOptions(restarts=16))
    max_patterns: int = 200000


@dataclass(frozen=True)
class SmoothResult:
    value: float
    smoothing_measure: FiniteMeasure
    e1_used: float
    inner: GbllResult
    uses_inflation: bool = False
    patterns_checked: int = 0


@dataclass(frozen=True)
class TypicalRestriction:
    base: FiniteMeasure
    kept_set: np.ndarray
    retained_mass: float

    @property
    def restriction(self) -> FiniteMeasure:
        return FiniteMeasure(np.where(self.kept_set, self.base.weights, 0.0))


class _Inner:
    """Cached, warm-started inner maximization for ``mu = s * Q``."""

    def __init__(self, q, channels, nus, weights, opts: OptimizerOptions):
        self.q = q
        self.channels, self.nus, self.weights = tuple(channels), tuple(nus), tuple(weights)
        self.opts = opts
        self.warm: list = []
        self.calls = 0

    def __call__(self, s: np.ndarray) -> GbllResult:
        self.calls += 1
        mu = FiniteMeasure(self.q * s)
        opts = OptimizerOptions(restarts=self.opts.restarts, max_iter=self.opts.max_iter,
                                tol=self.opts.tol, cap=self.opts.cap, seed=self.opts.seed,
                                warm_starts=tuple(self.warm[-4:]))
        r = gbll_constant(GbllInstance(mu, self.channels, self.nus, self.weights), opts)
        if not r.diverged:
            self.warm.append(r.maximizer_P.weights)
        return r


def maximal_cut_sets(masses: np.ndarray, budget: float, limit: int = 200000):
    """All maximal index sets with total mass ``<= budget`` (zero-mass points excluded)."""
    order = np.argsort(masses)
    m = masses[order]
    n = m.size
    out = []

    def rec(i, chosen, total):
        if len(out) >= limit:
            return
        if i == n:
            # maximal: no skipped point fits into the leftover
            left = budget - total
            skipped = np.setdiff1d(np.arange(n), chosen, assume_unique=True)
            if skipped.size == 0 or m[skipped].min() > left + 1e-15:
                out.append(order[list(chosen)])
            return
        if total + m[i] <= budget + 1e-15:
            rec(i + 1, chosen + [i], total + m[i])
        # skipping i is only useful if i cannot be added at the end
        rec(i + 1, chosen, total)

    rec(0, [], 0.0)
    return out


def _refine(inner: _Inner, q, s0, budget, s_max):
    """Local continuous search on ``s`` with ``sum q (1 - s)^+ <= budget``."""
    n = q.size

    def fg(s):
        s = np.clip(s, 0.0, s_max)
        if q @ s <= 1e-12:
            return 1e6, -np.ones(n)
        r = inner(s)
        if r.diverged:
            return 1e6, np.zeros(n)
        p = r.maximizer_P.weights
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(p > 0, p / np.maximum(s, 1e-300), 0.0)
        return r.constant_d, g

    cons = [{"type": "ineq", "fun": lambda s: budget - q @ (1 - np.minimum(s, 1.0)),
             "jac": lambda s: q * (s < 1.0)}]
    res = minimize(fg, s0, jac=True, method="SLSQP", bounds=[(0.0, s_max)] * n,
                   constraints=cons, options={"maxiter": 100, "ftol": 1e-10})
    s = np.clip(res.x, 0.0, s_max)
    # enforce feasibility exactly
    used = q @ np.clip(1 - s, 0, None)
    if used > budget:
        s = 1 - (1 - np.minimum(s, 1.0)) * (budget / used) if used > 0 else s
    return s


def smooth_constant(q_x: FiniteMeasure, channels, nus, weights, delta: float,
                    opts: SmoothOptions | None = None) -> SmoothResult:
    """Approximate ``inf_{E_1(Q_X || mu) <= delta} d(mu, nu_j, c)``."""
    if not (0.0 <= delta < 1.0):
        raise ValueError("delta must lie in [0, 1)")
    if not q_x.is_probability():
        raise ValueError("Q_X must be a probability measure")
    opts = opts or SmoothOptions()
    q = q_x.weights
    inner = _Inner(q, channels, nus, weights, opts.inner)
    ones = np.ones(q.size)
    base = inner(ones)
    if delta == 0.0 or base.diverged and base.note.startswith("some nu_j"):
        return SmoothResult(base.constant_d, q_x, 0.0, base)

    cands = []   # (value, s, result)
    cands.append((base.constant_d, ones, base))
    support = np.flatnonzero(q > 0)
    checked = 0
    if support.size <= opts.exhaustive_limit:
        for cut in maximal_cut_sets(q[support], delta, opts.max_patterns):
            s = ones.copy()
            s[support[cut]] = 0.0
            r = inner(s)
            checked += 1
            cands.append((r.constant_d, s, r))
    else:
        s = _greedy(inner, q, delta)
        r = inner(s)
        checked += 1
        cands.append((r.constant_d, s, r))
    cands.sort(key=lambda t: t[0])
    # continuous refinement from the best patterns and from a uniform shrink
    starts = [c[1] for c in cands[:opts.refine_top]] + [np.full(q.size, 1.0 - delta)]
    for s0 in starts:
        left = delta - q @ (1 - s0)
        s_init = s0.copy()
        if left > 1e-15:
            kept = s_init > 0
            s_init[kept] = np.clip(s_init[kept] - left / q[kept].sum(), 0, None)
        s = _refine(inner, q, s_init, delta, opts.s_max)
        r = inner(s)
        cands.append((r.constant_d, s, r))
    val, s, r = min(cands, key=lambda t: t[0])
    mu = FiniteMeasure(q * s)
    e1 = float(np.clip(q - mu.weights, 0, None).sum())
    return SmoothResult(val, mu, e1, r, uses_inflation=bool(np.any(s > 1 + 1e-9)),
                        patterns_checked=checked)


def _greedy(inner: _Inner, q, delta):
    """Cut whole points in order of ``P*(x) / Q(x)`` while the budget allows."""
    s = np.ones(q.size)
    left = delta
    while True:
        r = inner(s)
        p = r.maximizer_P.weights
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where((s > 0) & (q > 0), p / q, -np.inf)
        order = [i for i in np.argsort(-ratio) if np.isfinite(ratio[i]) and q[i] <= left + 1e-15]
        if not order or ratio[order[0]] <= 0:
            break
        i = order[0]
        s[i] = 0.0
        left -= q[i]
    return s


# --------------------------------------------------------- typical restriction

def _per_sequence_sums(values: np.ndarray, n: int) -> np.ndarray:
    out = values
    for _ in range(n - 1):
        out = (out[:, None] + values[None, :]).ravel()
    return out


def typical_restriction(q_x: FiniteMeasure, channels, nus, weights, n: int,
                        eps1: float, eps2: float, costs=(), mu: FiniteMeasure | None = None
                        ) -> TypicalRestriction:
    """Restriction of ``Q_X^n`` to cost-typical and information-density-typical sequences.

    Keeps ``x^n`` with ``mean tau_a(x_i) <= eps1`` for every cost and
    ``mean t(x_i) <= C + eps2`` where
    ``t(x) = i_{Q_X||mu}(x) - sum_j c_j E[i_{Q_Yj||nu_j}(Y_j) | X = x]`` and
    ``C = E_Q[t]``.  ``mu`` defaults to ``Q_X``.
    """
    k = q_x.alphabet_size
    if k ** n > ENUMERATION_CAP:
        raise EnumerationCapError(f"|X|^n = {k}^{n} exceeds the enumeration cap {ENUMERATION_CAP}")
    mu = q_x if mu is None else mu
    q = q_x.weights
    base = measure_power(q_x, n)
    kept = np.ones(k ** n, dtype=bool)
    slack = 1e-12
    for cf in costs:
        tau = cf.values if isinstance(cf, CostFunction) else np.asarray(cf, dtype=float)
        if np.isfinite(eps1):
            kept &= _per_sequence_sums(tau, n) / n <= eps1 + slack
    if np.isfinite(eps2):
        pos = q > 0
        t = np.zeros(k)
        t[pos] = np.log(q[pos] / mu.weights[pos])
        for ch, nu, c in zip(channels, nus, weights):
            qy = push_forward(q_x, ch).weights
            with np.errstate(divide="ignore"):
                dens = np.where(qy > 0, np.log(qy) - np.log(nu.weights), 0.0)
            t = t - c * (ch.kernel @ dens)
        C = rel_entropy(q_x, mu) - sum(c * rel_entropy(push_forward(q_x, ch), nu)
                                       for ch, nu, c in zip(channels, nus, weights))
        # symbols outside supp(Q) never occur in the product measure
        t[~pos] = 0.0
        kept &= _per_sequence_sums(t, n) / n <= C + eps2 + slack
    retained = float(base.weights[kept].sum())
    return TypicalRestriction(base, kept, retained)


# ------------------------------------------------------------------ rate curve

@dataclass(frozen=True)
class SmoothRateCurve:
    points: list          # [(n, smooth_constant_n / n)]
    d: float              # single-letter unsmoothed constant
    dstar: float
    slack: list           # [(n, max(0, dstar - value_n))]
    measures: list = field(default_factory=list)


def smooth_rate_curve(q_x: FiniteMeasure, channels, weights, delta: float, n_max: int,
                      nus=None, opts: SmoothOptions | None = None) -> SmoothRateCurve:
    channels = tuple(channels)
    if nus is None:
        nus = tuple(push_forward(q_x, ch) for ch in channels)
    if q_x.alphabet_size ** n_max > ENUMERATION_CAP:
        raise EnumerationCapError("n_max exceeds the enumeration cap")
    d1 = gbll_constant(GbllInstance(q_x, channels, nus, weights)).constant_d
    ds, _ = dstar(q_x, channels, weights)
    pts, slack, measures = [], [], []
    for n in range(1, n_max + 1):
        qn = measure_power(q_x, n)
        chn = [channel_power(ch, n) for ch in channels]
        nun = [measure_power(nu, n) for nu in nus]
        r = smooth_constant(qn, chn, nun, weights, delta, opts)
        v = r.value / n
        pts.append((n, v))
        slack.append((n, max(0.0, ds - v)))
        measures.append(r.smoothing_measure)
        log.info("n=%d smooth rate %.6f (patterns %d)", n, v, r.patterns_checked)
    return SmoothRateCurve(pts, d1, ds, slack, measures)
