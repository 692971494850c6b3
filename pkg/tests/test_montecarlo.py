import math

import numpy as np
import pytest
from scipy import stats

from csma_partite.errors import ValidationError
from csma_partite.hitting import HittingQuery, LimitLaw, excursion_pmf, limit_law_cdf, mean_hitting_time
from csma_partite.model import CENTER, AggState, FullState, build_generator, build_network, stationary_agg
from csma_partite.montecarlo import (
    SampleSet,
    batch,
    dominance_fraction,
    empirical_excursions,
    excursion_chi_square,
    excursion_counts,
    full_chain_occupation,
    ks_critical,
    ks_statistic,
    occupation_times,
    sample_hitting_time,
    sample_limit_law,
    simulate_trajectory,
)
from csma_partite.spectral import absorption_spectrum, phase_type_cdf


def _gen(sizes, nu, absorbing=None):
    return build_generator(build_network(sizes, nu), absorbing)


def test_trajectory_absorbing_start():
    gen = _gen([2], 3.0, absorbing={CENTER})
    tr = simulate_trajectory(gen, CENTER, seed=1, horizon=10.0)
    assert tr.events == [(0.0, CENTER)]


def test_trajectory_deterministic_and_adjacent():
    gen = _gen([3, 2], 5.0)
    a = simulate_trajectory(gen, CENTER, seed=42, horizon=50.0)
    b = simulate_trajectory(gen, CENTER, seed=42, horizon=50.0)
    assert a.events == b.events and len(a.events) > 10
    assert np.all(np.diff(a.times) > 0)
    for (_, x), (_, y) in zip(a.events, a.events[1:]):
        assert gen.rate(x, y) > 0
    assert simulate_trajectory(gen, CENTER, seed=43, horizon=50.0).events != a.events
    assert sum(a.occupation().values()) == pytest.approx(50.0)


def test_long_run_fraction_single_node():
    nu = 1e6
    occ = occupation_times(_gen([1], nu), AggState(1, 1), horizon=20.0, n=400, seed=7)
    frac = occ[:, 1] / 20.0
    se = frac.std(ddof=1) / math.sqrt(frac.size)
    assert abs(frac.mean() - nu / (1 + nu)) < 3 * se + 1e-12


def test_seed_validation():
    gen = _gen([1], 1.0)
    q = HittingQuery(AggState(1, 1), CENTER)
    for bad in (-1, 2 ** 64, 1.5, None, True):
        with pytest.raises(ValidationError):
            sample_hitting_time(gen, q, 10, seed=bad)


def test_single_transmission_is_exponential():
    ss = sample_hitting_time(_gen([1], 2.0), HittingQuery(AggState(1, 1), CENTER), 10 ** 6, seed=5)
    assert abs(ss.mean - 1) < 3 / math.sqrt(1e6)
    assert ks_statistic(ss, lambda x: -np.expm1(-x)) < ks_critical(ss.n)


def test_hitting_mean_large_sample():
    gen = _gen([2, 3], 10.0)
    q = HittingQuery(AggState(1, 2), AggState(2, 3))
    ss = sample_hitting_time(gen, q, 10 ** 6, seed=11)
    assert abs(ss.mean - mean_hitting_time(gen, q)) < 3 * ss.stderr


@pytest.mark.parametrize("sizes,nu,src,dst", [
    ([1], 3.0, AggState(1, 1), CENTER), ([3], 2.0, AggState(1, 3), CENTER),
    ([2, 2], 5.0, AggState(1, 2), AggState(2, 2)), ([3, 2], 4.0, CENTER, AggState(1, 3)),
    ([2, 2, 2], 3.0, AggState(1, 1), AggState(3, 2)), ([4, 1], 2.0, AggState(2, 1), AggState(1, 2)),
])
def test_mean_consistency_grid(sizes, nu, src, dst):
    gen = _gen(sizes, nu)
    q = HittingQuery(src, dst)
    ss = sample_hitting_time(gen, q, 50_000, seed=2024)
    assert abs(ss.mean - mean_hitting_time(gen, q)) < 3 * ss.stderr


def test_escape_time_matches_phase_type_law():
    gen = _gen([3], 100.0)
    q = HittingQuery(AggState(1, 3), CENTER)
    pt = absorption_spectrum(gen, CENTER, AggState(1, 3))
    ss = sample_hitting_time(gen, q, 10_000, seed=31)
    scaled = ss.values / pt.mean
    assert ks_statistic(scaled, lambda x: phase_type_cdf(pt, x * pt.mean)) < ks_critical(ss.n)


def test_unreachable_target_rejected():
    gen = _gen([2, 2], 1.0, absorbing={CENTER})
    with pytest.raises(ValidationError):
        sample_hitting_time(gen, HittingQuery(AggState(1, 2), AggState(2, 2)), 10, seed=1)


def test_excursions_symmetric_pair():
    freq = empirical_excursions(_gen([1, 1], 1.0), 2, 100_000, seed=3)
    p0 = freq[(0,)]
    assert abs(p0 - 0.5) < 3 * math.sqrt(0.25 / 1e5)
    with pytest.raises(ValidationError):
        excursion_counts(_gen([3], 1.0), 1, 10, seed=1)


def test_excursions_joint_cell_and_chi_square():
    net = build_network([2, 3, 5], 1.0)
    rows = excursion_counts(build_generator(net), 3, 100_000, seed=17)
    p = excursion_pmf(net, 3, {1: 1, 2: 1})
    hat = np.mean((rows[:, 0] == 1) & (rows[:, 1] == 1))
    assert abs(hat - p) < 3 * math.sqrt(p * (1 - p) / rows.shape[0])
    _, pval, _ = excursion_chi_square(net, 3, rows)
    assert pval > 0.01
    # marginal total is Geo(1 - p_k2) on {0, 1, ...}
    totals = rows.sum(axis=1)
    cells = np.arange(0, 12)
    expected = 0.5 ** (cells + 1)
    observed = np.array([np.sum(totals == c) for c in cells] + [np.sum(totals >= 12)])
    expected = np.append(expected, 0.5 ** 12) * totals.size
    assert stats.chisquare(observed, expected).pvalue > 0.01


def test_limit_law_sampling():
    ones = sample_limit_law(LimitLaw(0.4, 1), 10 ** 6, seed=8)
    assert abs(ones.mean - 1) < 3 * ones.stderr
    assert ks_statistic(ones, lambda x: -np.expm1(-x)) < ks_critical(ones.n)
    zeros = sample_limit_law(LimitLaw(0.75, 0), 10 ** 6, seed=9)
    atom = np.mean(zeros.values == 0)
    assert abs(atom - 0.25) < 3 * math.sqrt(0.25 * 0.75 / 1e6)
    assert abs(zeros.mean - 1) < 3 * zeros.stderr


def test_ks_statistic_behaviour():
    rng = np.random.default_rng(0)
    x = rng.exponential(size=10_000)
    d = ks_statistic(x, lambda t: -np.expm1(-t))
    assert d == pytest.approx(stats.kstest(x, "expon").statistic, abs=1e-15)
    assert d < ks_critical(x.size)
    assert ks_statistic(np.full(100, 1.0), lambda t: -np.expm1(-t)) == pytest.approx(1 - math.exp(-1))
    with pytest.raises(ValidationError):
        ks_statistic(np.ones(5), lambda t: t)
    assert ks_critical(10_000) == pytest.approx(0.01628)


def test_batch_worker_independence():
    gen = _gen([2, 3], 10.0)
    q = HittingQuery(AggState(1, 2), AggState(2, 3))
    a = sample_hitting_time(gen, q, 5_000, seed=77, workers=1)
    b = sample_hitting_time(gen, q, 5_000, seed=77, workers=8)
    assert np.array_equal(a.values, b.values)
    la = sample_limit_law(LimitLaw(0.5, 0), 1_000, seed=4, workers=1).values
    lb = sample_limit_law(LimitLaw(0.5, 0), 1_000, seed=4, workers=3).values
    assert np.array_equal(la, lb)
    with pytest.raises(ValidationError):
        batch(lambda s, lo, hi: np.zeros(hi - lo), 0, seed=1)


def test_sample_set_csv():
    ss = SampleSet(np.array([0.5, 2.0]))
    assert ss.to_csv() == "index,value\n0,0.5\n1,2.0\n"
    with pytest.raises(ValidationError):
        SampleSet(np.array([-1.0]))


@pytest.mark.parametrize("direct", [False, True])
def test_full_chain_reproduces_aggregated_occupation(direct):
    net = build_network([2, 2], 2.0)
    horizon, n = 200.0, 200
    occ = full_chain_occupation(net, FullState(), horizon, n, seed=12, direct=direct)
    frac = occ.sum(axis=0) / (horizon * n)
    pi = stationary_agg(net).probabilities
    assert 0.5 * np.abs(frac - pi).sum() < 4 / math.sqrt(n)
    agg = occupation_times(build_generator(net), CENTER, horizon, n, seed=12).sum(axis=0) / (horizon * n)
    assert 0.5 * np.abs(frac - agg).sum() < 4 / math.sqrt(n)


def test_full_chain_per_branch_start():
    net = build_network([3, 1], 50.0)
    occ = full_chain_occupation(net, FullState(((1, 1), (1, 2), (1, 3))), 5.0, 50, seed=1)
    assert occ.shape == (50, 5) and np.allclose(occ.sum(axis=1), 5.0)


def test_bistability_witness():
    net = build_network([3, 3], 100.0)
    cross = mean_hitting_time(build_generator(net), HittingQuery(AggState(1, 3), AggState(2, 3)))
    horizon = 0.1 * cross
    assert dominance_fraction(build_generator(net), AggState(1, 3), horizon, 1000, seed=5) > 0.5
    control = build_network([3, 3], 1.0)
    assert dominance_fraction(build_generator(control), AggState(1, 3), horizon, 200, seed=5) < 0.1
