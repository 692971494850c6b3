import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csma_partite.errors import ConditioningError, StructureError, ValidationError
from csma_partite.hitting import HittingQuery, mean_hitting_time
from csma_partite.model import CENTER, AggState, build_generator, build_network, stationary_agg
from csma_partite.spectral import (
    PhaseType,
    absorption_spectrum,
    eigen_time_products,
    gershgorin_discs,
    killed_states,
    phase_type_cdf,
    potential_coefficients,
    symmetrize,
    transient_distribution,
    uniformization_distribution,
)


def _gen(sizes, nu, absorbing=None):
    return build_generator(build_network(sizes, nu), absorbing)


def test_potential_coefficients_examples():
    assert list(potential_coefficients(_gen([1], 3.0), CENTER).values()) == [1.0]
    theta = potential_coefficients(_gen([2], 1.0), CENTER)
    assert theta == {AggState(1, 2): 1.0, AggState(1, 1): 2.0}
    theta = potential_coefficients(_gen([3], 2.0), CENTER)
    assert list(theta.values()) == pytest.approx([1.0, 1.5, 0.75], rel=1e-15)


def test_potential_coefficients_match_stationary_ratios():
    net = build_network([4, 2], 37.0)
    theta = potential_coefficients(build_generator(net), AggState(2, 2))
    pi = stationary_agg(net)
    far = AggState(1, 4)
    for s, t in theta.items():
        assert t == pytest.approx(pi.prob(s) / pi.prob(far), rel=1e-12)


def test_potential_coefficients_reject_star():
    with pytest.raises(StructureError):
        potential_coefficients(_gen([2, 2, 2], 5.0), AggState(1, 2))
    with pytest.raises(StructureError):
        potential_coefficients(_gen([2, 2, 2], 5.0), CENTER)


def test_symmetrize_examples():
    sym = symmetrize(_gen([2], 1.0), CENTER)
    assert np.allclose(sym.matrix, [[2, -math.sqrt(2)], [-math.sqrt(2), 2]], atol=1e-15)
    assert symmetrize(_gen([1], 4.0), CENTER).matrix.tolist() == [[1.0]]
    for sizes, target in [([3, 2], CENTER), ([3, 3, 2], AggState(3, 2)), ([4], AggState(1, 1))]:
        G = symmetrize(_gen(sizes, 123.0), target).matrix
        assert np.array_equal(G, G.T)


def test_symmetrize_unknown_absorbing():
    with pytest.raises(ValidationError):
        symmetrize(_gen([2], 1.0), AggState(2, 1))


def test_absorption_spectrum_examples():
    assert absorption_spectrum(_gen([1], 9.0), CENTER).rates == (1.0,)
    pt = absorption_spectrum(_gen([2], 1.0), CENTER)
    assert pt.rates == pytest.approx((2 - math.sqrt(2), 2 + math.sqrt(2)), rel=1e-14)
    assert pt.mean == pytest.approx(2.0, rel=1e-14)
    assert mean_hitting_time(_gen([2], 1.0), HittingQuery(AggState(1, 2), CENTER)) == pytest.approx(2.0)


def test_absorption_spectrum_star_flag():
    pt = absorption_spectrum(_gen([2, 2, 2], 3.0), AggState(1, 2))
    assert not pt.birth_death and len(pt.rates) == 6 and pt.rates[0] > 0
    assert absorption_spectrum(_gen([2, 3], 3.0), AggState(2, 3)).birth_death


def test_absorption_spectrum_unreachable():
    gen = _gen([2, 2], 1.0, absorbing={CENTER})
    with pytest.raises(ValidationError):
        absorption_spectrum(gen, AggState(2, 2), AggState(1, 2))


def test_phase_type_cdf_examples():
    assert float(phase_type_cdf(PhaseType((1.0,)), 1.0)) == pytest.approx(1 - math.exp(-1), rel=1e-15)
    pt = absorption_spectrum(_gen([2], 1.0), CENTER)
    assert float(phase_type_cdf(pt, 0.0)) == 0.0
    killed = _gen([2], 1.0, absorbing={CENTER})
    oracle = uniformization_distribution(killed, AggState(1, 2), 2.0).prob(CENTER)
    assert float(phase_type_cdf(pt, 2.0)) == pytest.approx(oracle, abs=1e-10)
    with pytest.raises(ValidationError):
        phase_type_cdf(pt, -1.0)


def test_phase_type_cdf_near_coincident_rates():
    with pytest.raises(ConditioningError, match="transient_distribution"):
        phase_type_cdf(PhaseType((1.0, 1.0 + 1e-12)), 1.0)


def test_gershgorin_examples():
    sym = symmetrize(_gen([2], 100.0), CENTER)
    rep = gershgorin_discs(sym)
    assert rep.discs[0] == pytest.approx((2.0, math.sqrt(200)))
    assert rep.discs[1] == pytest.approx((101.0, math.sqrt(200)))
    assert rep.separated
    assert not gershgorin_discs(symmetrize(_gen([2], 1.0), CENTER)).separated


def test_transient_limits():
    gen = _gen([3, 2], 10.0)
    assert transient_distribution(gen, AggState(1, 3), 0.0).prob(AggState(1, 3)) == 1.0
    pi = stationary_agg(build_network([3, 2], 10.0)).probabilities
    far = transient_distribution(gen, AggState(2, 2), 1e9).probabilities
    assert np.abs(far - pi).max() < 1e-10
    with pytest.raises(ValidationError):
        transient_distribution(gen, CENTER, -1.0)


@pytest.mark.parametrize("sizes,nu,init,t", [([1, 1], 1.0, CENTER, 0.1), ([3, 2], 2.0, AggState(1, 3), 0.7),
                                             ([2, 2, 2], 5.0, AggState(2, 1), 1.3)])
def test_transient_matches_uniformization(sizes, nu, init, t):
    gen = _gen(sizes, nu)
    a = transient_distribution(gen, init, t).probabilities
    b = uniformization_distribution(gen, init, t).probabilities
    assert np.abs(a - b).max() < 1e-12


def test_killed_transient_matches_uniformization():
    gen = _gen([3, 2], 3.0, absorbing={AggState(2, 2)})
    a = transient_distribution(gen, AggState(1, 3), 2.5).probabilities
    b = uniformization_distribution(gen, AggState(1, 3), 2.5).probabilities
    assert np.abs(a - b).max() < 1e-12


def test_phase_type_cdf_matches_transient_mass():
    for sizes, target, nu in [([3], CENTER, 30.0), ([2, 3], AggState(2, 3), 20.0)]:
        gen = _gen(sizes, nu)
        start = AggState(1, sizes[0])
        pt = absorption_spectrum(gen, target, start)
        killed = _gen(sizes, nu, absorbing={target})
        for t in np.logspace(-2, 1, 20) * pt.mean:
            mass = transient_distribution(killed, start, float(t)).prob(target)
            assert abs(float(phase_type_cdf(pt, t)) - mass) < 1e-8


def test_eigen_time_products_examples():
    for nu in (0.5, 7.0, 1e5):
        assert eigen_time_products(build_network([1], nu)) == pytest.approx([1.0], rel=1e-14)
    prod = eigen_time_products(build_network([3], 1e4))
    assert abs(prod[0] - 1) < 1e-3 and prod[1] > 1e3


@pytest.mark.parametrize("L", [2, 3, 4])
def test_smallest_rate_times_mean_tends_to_one(L):
    firsts = [eigen_time_products(build_network([L], nu))[0] for nu in (10.0, 1e2, 1e3, 1e4)]
    gaps = [abs(f - 1) for f in firsts]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_bipartite_eigen_time_products():
    prod = eigen_time_products(build_network([3, 3], 1e3))
    assert abs(prod[0] - 1) < 1e-2 and np.all(prod[1:] > 10)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=3), st.floats(0.1, 50.0), st.data())
def test_spectrum_properties(sizes, nu, data):
    gen = _gen(sizes, nu)
    target = data.draw(st.sampled_from(gen.states))
    pt = absorption_spectrum(gen, target)
    rates = np.array(pt.rates)
    assert np.all(rates > 0)
    if pt.birth_death:
        assert pt.is_distinct
    killed = _gen(sizes, nu, absorbing={target})
    idx = [killed.index(s) for s in killed_states(killed, target)]
    dense = np.sort(np.linalg.eigvals(-killed.matrix[np.ix_(idx, idx)]).real)
    # dense eigvals is only accurate to ~eps * ||T|| in absolute terms
    assert np.allclose(dense, rates, rtol=1e-9, atol=1e-12 * rates.max())
    rep = gershgorin_discs(symmetrize(gen, target))
    assert all(rep.contains(a) for a in rates)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=2), st.floats(0.5, 1e3))
def test_phase_type_mean_identity(sizes, nu):
    gen = _gen(sizes, nu)
    target = CENTER if len(sizes) == 1 else AggState(2, sizes[1])
    start = AggState(1, sizes[0])
    pt = absorption_spectrum(gen, target, start)
    assert pt.mean == pytest.approx(mean_hitting_time(gen, HittingQuery(start, target)), rel=1e-9)
