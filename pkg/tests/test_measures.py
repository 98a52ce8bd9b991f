import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smoothbll.measures import (Channel, FiniteMeasure, GbllInstance, bsc, channel_power,
                                coordinate_channels, dsbs_joint, e_gamma, identity_channel,
                                info_density, measure_power, product_channel, product_measure,
                                push_forward, random_channel, random_probability, rel_entropy,
                                renyi_div, tensor, tensor_power, uniform)

from oracles import e_gamma_bruteforce


def prob_vectors(k_min=2, k_max=6):
    return st.integers(k_min, k_max).flatmap(
        lambda k: st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k)).map(
        lambda w: FiniteMeasure(np.array(w) / np.sum(w)))


# ------------------------------------------------------------------ types

def test_measure_validation():
    with pytest.raises(ValueError):
        FiniteMeasure([0.0, 0.0])
    with pytest.raises(ValueError):
        FiniteMeasure([-0.1, 1.1])
    with pytest.raises(ValueError):
        FiniteMeasure([[0.5, 0.5]])
    m = FiniteMeasure([0.25, 0.75])
    assert m.is_probability()
    assert not FiniteMeasure([0.25, 0.25]).is_probability()
    assert FiniteMeasure([0.5, 0.5 + 1e-13]).is_probability()
    with pytest.raises(ValueError):
        m.weights[0] = 1.0


def test_channel_validation():
    with pytest.raises(ValueError):
        Channel([[0.5, 0.4]])
    with pytest.raises(ValueError):
        Channel([[1.5, -0.5]])
    ch = bsc(0.11)
    assert ch.input_size == 2 and ch.output_size == 2


def test_instance_validation():
    q = uniform(2)
    with pytest.raises(ValueError):
        GbllInstance(q, (bsc(0.1),), (uniform(2),), (0.0,))
    with pytest.raises(ValueError):
        GbllInstance(q, (bsc(0.1),), (uniform(3),), (1.0,))
    with pytest.raises(ValueError):
        GbllInstance(uniform(3), (bsc(0.1),), (uniform(2),), (1.0,))
    with pytest.raises(ValueError):
        GbllInstance(q, (), (), ())


# ------------------------------------------------------------ divergences

def test_rel_entropy_examples():
    assert rel_entropy(FiniteMeasure([0.5, 0.5]), FiniteMeasure([0.5, 0.5])) == 0.0
    assert rel_entropy(FiniteMeasure([1, 0]), FiniteMeasure([0.5, 0.5])) == pytest.approx(math.log(2), abs=1e-15)
    assert rel_entropy(FiniteMeasure([0.5, 0.5]), FiniteMeasure([0.25, 0.25])) == pytest.approx(math.log(2), abs=1e-15)
    assert rel_entropy(FiniteMeasure([0.5, 0.5]), FiniteMeasure([1.0, 0.0])) == math.inf
    with pytest.raises(ValueError):
        rel_entropy(uniform(2), uniform(3))


def test_renyi_examples():
    assert renyi_div(0.5, uniform(2), uniform(2)) == pytest.approx(0.0, abs=1e-15)
    assert renyi_div(2.0, FiniteMeasure([1, 0]), uniform(2)) == pytest.approx(math.log(2), abs=1e-15)
    with mp.workdps(40):
        s = mp.sqrt(mp.mpf("0.9") * mp.mpf("0.5")) + mp.sqrt(mp.mpf("0.1") * mp.mpf("0.5"))
        ref = float(mp.log(s) / (mp.mpf("0.5") - 1))
    assert renyi_div(0.5, FiniteMeasure([0.9, 0.1]), uniform(2)) == pytest.approx(ref, abs=1e-14)
    assert renyi_div(2.0, FiniteMeasure([0.5, 0.5]), FiniteMeasure([1.0, 0.0])) == math.inf
    with pytest.raises(ValueError):
        renyi_div(1.0, uniform(2), uniform(2))


def test_e_gamma_examples():
    p = FiniteMeasure([0.3, 0.7])
    assert e_gamma(p, p) == 0.0
    assert e_gamma(FiniteMeasure([1, 0]), uniform(2)) == pytest.approx(0.5)
    assert e_gamma(uniform(2), FiniteMeasure([0.1, 0.9]), 2.0) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        e_gamma(p, p, 0.5)


def test_e_gamma_matches_bruteforce_random_floats():
    rng = np.random.default_rng(3)
    for _ in range(200):
        k = int(rng.integers(1, 11))
        nu = FiniteMeasure(rng.random(k) + 1e-3)
        mu = FiniteMeasure(rng.random(k) * rng.uniform(0.2, 2.0) + 1e-3)
        g = float(rng.choice([1.0, 1.3, 2.0, 5.0]))
        assert e_gamma(nu, mu, g) == pytest.approx(e_gamma_bruteforce(nu.weights, mu.weights, g),
                                                   abs=1e-14)


def test_push_forward_examples():
    p = random_probability(np.random.default_rng(0), 4)
    assert np.array_equal(push_forward(p, identity_channel(4)).weights, p.weights)
    assert np.allclose(push_forward(FiniteMeasure([1, 0]), bsc(0.11)).weights, [0.89, 0.11])
    ds = Channel([[0.2, 0.3, 0.5], [0.5, 0.2, 0.3], [0.3, 0.5, 0.2]])
    assert np.allclose(push_forward(uniform(3), ds).weights, 1 / 3)
    with pytest.raises(ValueError):
        push_forward(uniform(3), bsc(0.1))


def test_info_density():
    p = FiniteMeasure([0.5, 0.5])
    assert np.all(info_density(p, p) == 0)
    assert np.allclose(info_density(p, FiniteMeasure([0.25, 0.25])), math.log(2))
    assert info_density(FiniteMeasure([1, 0]), uniform(2), 1) == -math.inf
    rng = np.random.default_rng(1)
    for _ in range(50):
        a = random_probability(rng, 5, 0.01)
        b = FiniteMeasure(rng.random(5) + 0.01)
        assert a.weights @ info_density(a, b) == pytest.approx(rel_entropy(a, b), abs=1e-12)


# ------------------------------------------------------------- properties

@settings(max_examples=200, deadline=None)
@given(prob_vectors(), st.floats(1e-3, 1e3))
def test_rel_entropy_scaling(p, s):
    mu = FiniteMeasure(np.linspace(1, 2, p.alphabet_size))
    assert rel_entropy(p, mu.scaled(s)) == pytest.approx(rel_entropy(p, mu) - math.log(s),
                                                         abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0, 1))
def test_rel_entropy_joint_convexity(seed, lam):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 6))
    p1, p2 = random_probability(rng, k), random_probability(rng, k)
    m1 = FiniteMeasure(rng.random(k) + 0.01)
    m2 = FiniteMeasure(rng.random(k) + 0.01)
    mix = lambda a, b: FiniteMeasure(lam * a.weights + (1 - lam) * b.weights)
    lhs = rel_entropy(mix(p1, p2), mix(m1, m2))
    rhs = lam * rel_entropy(p1, m1) + (1 - lam) * rel_entropy(p2, m2)
    assert lhs <= rhs + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_data_processing(seed):
    rng = np.random.default_rng(seed)
    k, l = int(rng.integers(2, 6)), int(rng.integers(2, 6))
    p, mu = random_probability(rng, k), random_probability(rng, k, 0.01)
    ch = random_channel(rng, k, l)
    assert rel_entropy(push_forward(p, ch), push_forward(mu, ch)) <= rel_entropy(p, mu) + 1e-12


# ---------------------------------------------------------------- tensors

def test_tensor_power():
    inst = GbllInstance.matched(FiniteMeasure([0.7, 0.3]), [bsc(0.1)], [2.0])
    one = tensor_power(inst, 1)
    assert one.mu == inst.mu and one.channels == inst.channels
    three = tensor_power(inst, 3)
    assert three.mu.alphabet_size == 8
    assert three.mu.weights[0] == pytest.approx(0.7 ** 3)
    assert three.mu.weights[5] == pytest.approx(0.3 * 0.7 * 0.3)
    with pytest.raises(ValueError):
        tensor(inst, GbllInstance.matched(FiniteMeasure([0.7, 0.3]), [bsc(0.1)], [1.0]))


def test_push_forward_commutes_with_tensor():
    rng = np.random.default_rng(2)
    p = random_probability(rng, 3)
    ch = random_channel(rng, 3, 4)
    lhs = push_forward(product_measure(p, p), product_channel(ch, ch)).weights
    rhs = product_measure(push_forward(p, ch), push_forward(p, ch)).weights
    assert np.allclose(lhs, rhs, atol=1e-15)
    assert np.allclose(push_forward(measure_power(p, 3), channel_power(ch, 3)).weights,
                       measure_power(push_forward(p, ch), 3).weights, atol=1e-15)


def test_coordinate_channels_and_dsbs():
    q = dsbs_joint(0.11)
    c1, c2 = coordinate_channels((2, 2))
    assert np.allclose(push_forward(q, c1).weights, 0.5)
    assert np.allclose(push_forward(q, c2).weights, 0.5)
    # X = (y1, y2) with index 2*y1 + y2
    assert c1.kernel[2, 1] == 1 and c2.kernel[2, 0] == 1
