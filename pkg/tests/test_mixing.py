import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csma_partite.errors import CapacityError, ValidationError
from csma_partite.hitting import HittingQuery, mean_hitting_time
from csma_partite.mixing import (
    branch_set,
    conductance,
    conductance_star,
    leaf_crossing_mean,
    mixing_bounds,
    mixing_report,
    mixing_time,
    tv_distance,
    worst_case_distance,
)
from csma_partite.model import CENTER, AggState, Distribution, build_generator, build_network, stationary_agg
from csma_partite.spectral import uniformization_distribution


def test_tv_distance_examples():
    states = ("a", "b")
    p = Distribution.from_probabilities(states, [0.7, 0.3])
    q = Distribution.from_probabilities(states, [0.5, 0.5])
    assert tv_distance(p, p) == 0.0
    assert tv_distance(p, q) == pytest.approx(0.2)
    assert tv_distance(Distribution.point_mass(states, "a"), Distribution.point_mass(states, "b")) == 1.0
    with pytest.raises(ValidationError):
        tv_distance(p, Distribution.from_probabilities(("a", "c"), [0.5, 0.5]))


def test_worst_case_distance_endpoints():
    net = build_network([3, 2], 10.0)
    pi = stationary_agg(net).probabilities
    assert worst_case_distance(net, 0.0) == pytest.approx(1 - pi.min())
    assert worst_case_distance(net, 0.0) >= 0.5
    assert worst_case_distance(net, 1e9) < 1e-10
    with pytest.raises(ValidationError):
        worst_case_distance(net, -1.0)


@pytest.mark.parametrize("sizes,nu,t", [([1, 1], 1.0, 1.0), ([3, 2], 5.0, 0.4), ([2, 2, 1], 2.0, 2.0)])
def test_worst_case_distance_matches_uniformization(sizes, nu, t):
    net = build_network(sizes, nu)
    gen = build_generator(net)
    pi = stationary_agg(net)
    oracle = max(tv_distance(uniformization_distribution(gen, x, t), pi) for x in gen.states)
    assert worst_case_distance(net, t) == pytest.approx(oracle, abs=1e-10)


def test_mixing_time_bracket():
    net = build_network([3, 2], 50.0)
    for eps in (0.25, 0.125):
        t = mixing_time(net, eps)
        assert worst_case_distance(net, t) <= eps + 1e-6
        assert worst_case_distance(net, t * (1 - 2e-6)) >= eps - 1e-6
    t = mixing_time(build_network([1, 1], 1.0), 0.25)
    assert 0 < t < math.inf
    for eps in (0.0, 1.0):
        with pytest.raises(ValidationError):
            mixing_time(net, eps)


def test_mixing_time_slope():
    nus = [1e2, 1e3, 1e4]
    t = [mixing_time(build_network([3, 2], nu), 0.25) for nu in nus]
    slope = np.polyfit(np.log(nus), np.log(t), 1)[0]
    assert slope == pytest.approx(1.0, rel=0.05)


def test_conductance_examples():
    net = build_network([2, 2], 10.0)
    phi = conductance(net, branch_set(net, 2))
    assert phi == pytest.approx(1 / 6, abs=1e-12)
    assert phi / 0.2 < 1
    big = build_network([2, 2], 1e4)
    assert conductance(big, branch_set(big, 2)) / (2 * 1e4 ** -1) == pytest.approx(1.0, abs=1e-3)
    others = [s for s in build_generator(net).states if s != AggState(1, 2)]
    assert conductance(net, others) > 0
    with pytest.raises(ValidationError):
        conductance(net, [])
    with pytest.raises(ValidationError):
        conductance(net, build_generator(net).states)


def test_conductance_closed_form():
    # Phi(C_2) = pi_(2,1) * 1 / pi(C_2) with pi from binomial weights
    for sizes, nu in [([3, 2], 10.0), ([3, 3], 100.0), ([4, 2, 2], 3.0)]:
        net = build_network(sizes, nu)
        L2 = sizes[1]
        w = [math.comb(L2, l) * nu ** l for l in range(1, L2 + 1)]
        assert conductance(net, branch_set(net, 2)) == pytest.approx(w[0] / sum(w), rel=1e-12)


def test_conductance_star_examples():
    phi, S = conductance_star(build_network([1, 1], 1.0))
    assert phi == pytest.approx(1.0) and len(S) == 1 and next(iter(S)).k in (1, 2)
    phi, S = conductance_star(build_network([2, 2], 100.0))
    assert S in (frozenset(branch_set(build_network([2, 2], 1.0), 1)),
                 frozenset(branch_set(build_network([2, 2], 1.0), 2)))
    with pytest.raises(CapacityError):
        conductance_star(build_network([20, 10], 1.0))


def test_conductance_star_brute_force():
    net = build_network([2, 1, 1], 3.0)
    states = build_generator(net).states
    pi = stationary_agg(net)
    best = math.inf
    for r in range(1, len(states)):
        for S in itertools.combinations(states, r):
            if sum(pi.prob(s) for s in S) <= 0.5:
                best = min(best, conductance(net, S))
    assert conductance_star(net)[0] == pytest.approx(best, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=2, max_size=3), st.floats(1.5, 1e3))
def test_conductance_star_below_branch_conductance(sizes, nu):
    net = build_network(sizes, nu)
    pi = stationary_agg(net)
    k2 = sorted(range(1, net.K + 1), key=lambda k: (-net.size(k), k))[1]
    C2 = branch_set(net, k2)
    if sum(pi.prob(s) for s in C2) <= 0.5:
        assert conductance_star(net)[0] <= conductance(net, C2) * (1 + 1e-12)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=1, max_size=3), st.floats(0.5, 500.0),
       st.lists(st.floats(0.0, 1e4), min_size=2, max_size=6))
def test_distance_nonincreasing(sizes, nu, times):
    net = build_network(sizes, nu)
    ts = sorted(times)
    d = [worst_case_distance(net, t) for t in ts]
    assert all(b <= a + 1e-10 for a, b in zip(d, d[1:]))


@pytest.mark.parametrize("sizes,nu", [([3, 2], 1e2), ([3, 2], 1e3), ([2, 2], 50.0), ([3, 2, 1], 30.0)])
def test_coupling_inequality(sizes, nu):
    net = build_network(sizes, nu)
    ET = leaf_crossing_mean(net)
    for t in np.logspace(-1, 6, 20):
        assert worst_case_distance(net, t) <= ET / t


def test_leaf_crossing_mean_uses_two_largest():
    net = build_network([2, 3, 1], 40.0)
    expected = mean_hitting_time(build_generator(build_network([3, 2], 40.0)),
                                 HittingQuery(AggState(2, 2), AggState(1, 3)))
    assert leaf_crossing_mean(net) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("sizes", [[3, 2], [2, 2], [3, 3], [3, 2, 2]])
@pytest.mark.parametrize("eps", [1 / 8, 1 / 16])
def test_sandwich(sizes, eps):
    for nu in (1e2, 1e3):
        net = build_network(sizes, nu)
        lower, upper = mixing_bounds(net, eps)
        assert lower <= mixing_time(net, eps) <= upper


def test_bounds_asymptotics():
    net = build_network([3, 2], 1e4)
    eps = 1 / 8
    lower, upper = mixing_bounds(net, eps)
    assert upper == pytest.approx((5 / 6) * 1e4 / eps, rel=0.01)
    assert lower == pytest.approx((0.5 - 2 * eps) * 1e4 / 2, rel=0.01)
    none_lower, _ = mixing_bounds(net, 0.3)
    assert none_lower is None


def test_mixing_report_fields():
    rep = mixing_report(build_network([2, 3], 100.0), 0.125)
    d = rep.as_dict()
    assert d["permutation"] == [2, 1]
    assert d["lower_bound"] <= d["t_mix"] <= d["upper_bound"]
    assert d["phi_star"] <= d["conductance_C2"] * (1 + 1e-12)
