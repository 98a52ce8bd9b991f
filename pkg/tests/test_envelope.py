import math

import numpy as np
import pytest

from smoothbll.envelope import (CostFunction, constrained_single_letter, dstar,
                                dstar_bruteforce, dstar_cap_sensitivity, envelope_at, sigma,
                                simplex_grid)
from smoothbll.gbll import OptimizerOptions, gbll_constant, gbll_objective
from smoothbll.measures import (FiniteMeasure, GbllInstance, bsc, identity_channel,
                                random_channel, random_probability, tensor_power, uniform)

from oracles import binary_dstar_chords

RHO = 1 - 2 * 0.11


def test_sigma_examples():
    rng = np.random.default_rng(0)
    q = random_probability(rng, 3, 0.05)
    chs = [random_channel(rng, 3, 2), random_channel(rng, 3, 4)]
    assert sigma(q, chs, [1.3, 0.7], q) == pytest.approx(0.0, abs=1e-15)
    for _ in range(20):
        p = random_probability(rng, 3)
        assert sigma(q, chs, [0.0, 0.0], p) <= 0.0
        inst = GbllInstance.matched(q, chs, [1.3, 0.7])
        assert sigma(q, chs, [1.3, 0.7], p) == pytest.approx(gbll_objective(inst, p), abs=1e-13)


def test_simplex_grid():
    g = simplex_grid(3, 4)
    assert g.shape == (15, 3)
    assert np.allclose(g.sum(axis=1), 1.0)
    assert len({tuple(r) for r in g}) == 15


def test_dstar_examples():
    rng = np.random.default_rng(1)
    for _ in range(5):
        q = random_probability(rng, 3, 0.05)
        val, dec = dstar(q, [random_channel(rng, 3, 3)], [1.0], restarts=8)
        assert abs(val) <= 1e-8
    val, dec = dstar(uniform(2), [identity_channel(2)], [2.0])
    assert val == pytest.approx(math.log(2), abs=1e-8)
    assert np.allclose(dec.barycenter(), 0.5, atol=1e-10)


def test_dstar_dsbs_threshold():
    q = uniform(2)
    low, _ = dstar(q, [bsc(0.11)], [1 / RHO ** 2])
    high, _ = dstar(q, [bsc(0.11)], [1 / RHO ** 2 + 0.05])
    assert low <= 1e-8
    assert high > 1e-4
    ref = binary_dstar_chords(0.5, [bsc(0.11).kernel], [1 / RHO ** 2 + 0.05])
    assert high == pytest.approx(ref, abs=1e-5)


def test_decomposition_witness():
    rng = np.random.default_rng(2)
    for _ in range(5):
        q = random_probability(rng, 3, 0.05)
        chs = [random_channel(rng, 3, 3)]
        c = [float(rng.uniform(1.5, 4.0))]
        val, dec = dstar(q, chs, c, restarts=8)
        assert val >= 0
        assert np.allclose(dec.barycenter(), q.weights, atol=1e-10)
        assert len(dec.u_weights) <= q.alphabet_size + 1
        achieved = sum(w * sigma(q, chs, c, comp) for w, comp in zip(dec.u_weights, dec.components))
        assert achieved == pytest.approx(val, abs=1e-9)


def test_envelope_vs_dstar_binary():
    rng = np.random.default_rng(3)
    for _ in range(8):
        q = random_probability(rng, 2, 0.05)
        chs = [random_channel(rng, 2, 3) for _ in range(2)]
        c = rng.uniform(0.5, 3.0, size=2)
        ds, _ = dstar(q, chs, c, restarts=8)
        env = envelope_at(q, chs, c)
        assert env == pytest.approx(ds, abs=2e-3)
        assert env <= ds + 1e-9          # grid envelope is a lower approximation
        ref = binary_dstar_chords(q.weights[0], [ch.kernel for ch in chs], c)
        assert ds == pytest.approx(ref, abs=2e-4)


def test_envelope_ternary_and_bruteforce():
    rng = np.random.default_rng(4)
    q = random_probability(rng, 3, 0.1)
    chs = [random_channel(rng, 3, 2)]
    c = [3.0]
    ds, _ = dstar(q, chs, c)
    env = envelope_at(q, chs, c)
    bf = dstar_bruteforce(q, chs, c, grid_step=0.1, u_max=3)
    assert env <= ds + 1e-9 and bf <= ds + 1e-9
    assert env == pytest.approx(ds, abs=2e-2)


def test_envelope_trivial_cases():
    rng = np.random.default_rng(5)
    q = random_probability(rng, 3, 0.05)
    chs = [random_channel(rng, 3, 2)]
    assert envelope_at(q, chs, [0.0]) == pytest.approx(0.0, abs=1e-12)
    assert envelope_at(q, chs, [1.0]) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        envelope_at(random_probability(rng, 4), [random_channel(rng, 4, 2)], [1.0])


def test_dstar_cap_sensitivity():
    rng = np.random.default_rng(6)
    q = random_probability(rng, 3, 0.05)
    chs = [random_channel(rng, 3, 3)]
    rows = dstar_cap_sensitivity(q, chs, [3.0], restarts=8)
    vals = [v for _, v in rows]
    assert vals[0] == 0.0
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(vals[q.alphabet_size], abs=1e-8)
    with pytest.raises(ValueError):
        dstar(q, chs, [3.0], u_cap=0)


def test_hypercontractivity_zero_consistency():
    q = uniform(2)
    for c in (0.5, 1.0, 0.9 / RHO ** 2, 1 / RHO ** 2):
        ds, _ = dstar(q, [bsc(0.11)], [c])
        d = gbll_constant(GbllInstance.matched(q, [bsc(0.11)], [c])).constant_d
        assert ds <= 1e-6
        assert abs(d) <= 1e-4


# ------------------------------------------------------------- constrained

def test_constrained_without_costs_is_gbll():
    rng = np.random.default_rng(7)
    q = random_probability(rng, 3, 0.05)
    inst = GbllInstance.matched(q, [random_channel(rng, 3, 2)], [2.5])
    inactive = CostFunction(rng.normal(size=3), math.inf)
    r = constrained_single_letter(inst, [inactive])
    assert r.value == pytest.approx(gbll_constant(inst).constant_d, abs=1e-12)


def test_constrained_singleton_partition_is_dstar():
    rng = np.random.default_rng(8)
    for _ in range(3):
        q = random_probability(rng, 3, 0.05)
        ch = random_channel(rng, 3, 2)
        c = float(rng.uniform(1.5, 3.0))
        inst = GbllInstance.matched(q, [ch], [c])
        costs = [CostFunction((np.arange(3) == x) / q.weights[x] - 1, 0.0) for x in range(3)]
        r = constrained_single_letter(inst, costs)
        ds, _ = dstar(q, [ch], [c])
        assert r.value <= ds + 1e-6
        assert r.value == pytest.approx(ds, abs=1e-5)
        assert r.dual_bound >= r.value - 1e-8


def test_constrained_two_letters_not_above_one():
    rng = np.random.default_rng(9)
    for _ in range(2):
        q = random_probability(rng, 2, 0.1)
        ch = random_channel(rng, 2, 2)
        inst = GbllInstance.matched(q, [ch], [2.5])
        tau = rng.normal(size=2)
        eps = float(tau.min() + 0.4 * (q.weights @ tau - tau.min()))
        g1 = constrained_single_letter(inst, [CostFunction(tau, eps)])
        tau2 = (tau[:, None] + tau[None, :]).ravel() / 2
        g2 = constrained_single_letter(tensor_power(inst, 2), [CostFunction(tau2, eps)], u_cap=3)
        assert g2.value / 2 <= g1.value + 1e-5
        assert g1.dual_bound >= g1.value - 1e-8


def test_infinite_costs_remove_symbols():
    q = FiniteMeasure([0.5, 0.3, 0.2])
    ch = random_channel(np.random.default_rng(10), 3, 2)
    inst = GbllInstance.matched(q, [ch], [2.0])
    cf = CostFunction([0.0, 0.0, math.inf], 0.0)
    r = constrained_single_letter(inst, [cf])
    sub = GbllInstance(FiniteMeasure([0.5, 0.3, 0.0]), inst.channels, inst.nus, inst.weights)
    assert r.value <= gbll_constant(sub).constant_d + 1e-8
    for comp in r.decomposition.components:
        assert comp.weights[2] == 0.0


def test_infeasible_cost():
    with pytest.raises(ValueError):
        CostFunction([1.0, 2.0], 0.5)
