"""Built-in invariant suite run by ``csma-partite validate``.

Every check is deterministic (fixed instances, fixed seeds) so two runs on the
same machine give byte-identical reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .hitting import (
    HittingQuery,
    LimitLaw,
    asymptotic_mean,
    bd_path_mean,
    escape_params,
    excursion_pmf,
    limit_law_cdf,
    mean_hitting_time,
)
from .mixing import (
    branch_set,
    conductance,
    conductance_star,
    leaf_crossing_mean,
    mixing_bounds,
    mixing_time,
    worst_case_distance,
)
from .model import (
    CENTER,
    AggState,
    aggregate,
    build_generator,
    build_network,
    stationary_agg,
    stationary_full,
)
from .montecarlo import sample_hitting_time
from .spectral import (
    absorption_spectrum,
    far_end,
    gershgorin_discs,
    killed_states,
    phase_type_cdf,
    symmetrize,
    transient_distribution,
)

STATIONARY_SIZES = [(2,), (3,), (2, 2), (3, 2), (2, 2, 2), (3, 3, 2)]
STATIONARY_NUS = [0.5, 1.0, 10.0, 1e3]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    relation: str

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "value": self.value,
                "tolerance": self.tolerance, "relation": self.relation}


def _le(name: str, value: float, tol: float) -> CheckResult:
    value = float(value)
    return CheckResult(name, bool(value <= tol), value, float(tol), "<=")


def _ge(name: str, value: float, tol: float) -> CheckResult:
    value = float(value)
    return CheckResult(name, bool(value >= tol), value, float(tol), ">=")


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


def check_stationary() -> list[CheckResult]:
    resid = balance = agg_err = 0.0
    for sizes in STATIONARY_SIZES:
        for nu in STATIONARY_NUS:
            net = build_network(sizes, nu)
            gen = build_generator(net)
            pi = stationary_agg(net).probabilities
            resid = max(resid, np.abs(pi @ gen.matrix).max())
            for i, j in gen.edges():
                flow_ij = pi[i] * gen.rates[i, j]
                balance = max(balance, abs(flow_ij - pi[j] * gen.rates[j, i]) / flow_ij)
            agg = aggregate(stationary_full(net), net).probabilities
            agg_err = max(agg_err, np.abs(agg - pi).max())
    return [
        _le("stationary: pi Q residual", resid, 1e-10),
        _le("stationary: detailed balance (relative)", balance, 1e-12),
        _le("stationary: aggregated full law equals star law", agg_err, 1e-12),
    ]


def check_step_sums() -> list[CheckResult]:
    worst = 0.0
    cases = [((2,), (1, 2), CENTER), ((3,), (1, 3), CENTER), ((4,), (1, 4), CENTER),
             ((2, 3), (1, 2), (2, 3)), ((2, 3), (2, 3), (1, 1)), ((3, 3), (1, 3), CENTER)]
    for sizes, src, dst in cases:
        for nu in (1.0, 10.0, 100.0):
            net = build_network(sizes, nu)
            q = HittingQuery(AggState(*src), AggState(*dst))
            worst = max(worst, _rel(bd_path_mean(net, q.source, q.target),
                                    mean_hitting_time(build_generator(net), q)))
    return [_le("hitting: step sums equal linear-solve mean", worst, 1e-10)]


def check_spectra() -> list[CheckResult]:
    mean_err = sim_err = 0.0
    contained = True
    positive_distinct = True
    for sizes, target in [((1,), CENTER), ((3,), CENTER), ((4,), CENTER), ((2, 3), AggState(2, 3)),
                          ((3, 2), CENTER)]:
        for nu in (1.0, 10.0, 1e2, 1e3):
            net = build_network(sizes, nu)
            gen = build_generator(net)
            start = far_end(net, target)
            pt = absorption_spectrum(gen, target, start)
            positive_distinct &= pt.rates[0] > 0 and pt.is_distinct
            mean_err = max(mean_err, _rel(pt.mean, mean_hitting_time(gen, HittingQuery(start, target))))
            sym = symmetrize(gen, target, start)
            report = gershgorin_discs(sym)
            contained &= all(report.contains(a) for a in pt.rates)
            if nu <= 10:
                killed = build_generator(net, absorbing={target})
                idx = [killed.index(s) for s in killed_states(killed, target, start)]
                T = killed.matrix[np.ix_(idx, idx)]
                dense = np.sort(np.linalg.eigvals(-T).real)
                sim_err = max(sim_err, np.max(np.abs(dense - np.array(pt.rates)) / np.array(pt.rates)))
    return [
        _le("spectral: sum of 1/alpha equals mean absorption time", mean_err, 1e-9),
        _le("spectral: symmetrized spectrum equals dense eigensolve", sim_err, 1e-9),
        CheckResult("spectral: Gershgorin discs contain every eigenvalue", bool(contained),
                    float(contained), 1.0, "=="),
        CheckResult("spectral: rates positive and distinct", bool(positive_distinct),
                    float(positive_distinct), 1.0, "=="),
    ]


def check_phase_type_cdf() -> list[CheckResult]:
    worst = 0.0
    for sizes, target, nu in [((3,), CENTER, 10.0), ((2, 3), AggState(2, 3), 5.0)]:
        net = build_network(sizes, nu)
        gen = build_generator(net)
        start = far_end(net, target)
        pt = absorption_spectrum(gen, target, start)
        killed = build_generator(net, absorbing={target})
        for t in np.logspace(-2, 1, 20) * pt.mean:
            absorbed = transient_distribution(killed, start, float(t)).prob(target)
            worst = max(worst, abs(float(phase_type_cdf(pt, t)) - absorbed))
    return [_le("spectral: phase-type CDF equals absorbed transient mass", worst, 1e-8)]


def check_asymptotics() -> list[CheckResult]:
    nu = 1e4
    cases = [((3,), (1, 3), (0, 0)), ((4,), (1, 4), (1, 1)), ((2, 3), (1, 2), (2, 3)),
             ((3, 2), (1, 3), (2, 2)), ((3, 3), (1, 3), (2, 3))]
    worst = 0.0
    for sizes, src, dst in cases:
        net = build_network(sizes, nu)
        q = HittingQuery(AggState(*src), AggState(*dst))
        law = asymptotic_mean(net, q)
        worst = max(worst, abs(mean_hitting_time(build_generator(net), q) / law.value(nu) - 1))
    net = build_network((3, 3, 2), nu)
    q = HittingQuery(AggState(1, 3), AggState(3, 2))
    star = abs(mean_hitting_time(build_generator(net), q) / asymptotic_mean(net, q).value(nu) - 1)
    # two theorems give the same bipartite coefficient for a weakly dominant start
    gap = 0.0
    for L1, L2 in [(2, 3), (3, 2), (3, 3), (4, 2)]:
        net2 = build_network((L1, L2), 1.0)
        gap = max(gap, abs(escape_params(net2, 1, 2).coefficient - (L1 + L2) / (L1 * L2)))
    return [
        _le("hitting: exact/asymptotic mean - 1 at nu=1e4 (max L_k <= 4)", worst, 0.02),
        _le("hitting: star cross-branch ratio - 1 at nu=1e4", star, 0.05),
        _le("hitting: bipartite and K-partite coefficients agree", gap, 1e-12),
    ]


def check_excursions_and_limits() -> list[CheckResult]:
    net = build_network((2, 3, 5), 1.0)
    p2 = 5 / 10
    norm = 0.0
    for n in range(6):
        s = math.fsum(excursion_pmf(net, 3, {1: a, 2: n - a}) for a in range(n + 1))
        norm = max(norm, abs(s - (1 - p2) ** n * p2))
    mean_err = 0.0
    for pstar, ind in [(0.75, 0), (0.5, 0), (0.4, 1), (0.75, 1)]:
        law = LimitLaw(pstar, ind)
        m, _ = integrate.quad(lambda x: 1.0 - float(limit_law_cdf(law, x)), 0, np.inf,
                              epsabs=1e-12, epsrel=1e-12)
        mean_err = max(mean_err, abs(m - 1))
    return [
        _le("hitting: excursion law marginal is geometric", norm, 1e-12),
        _le("hitting: limit law has unit mean", mean_err, 1e-6),
    ]


def check_mixing() -> list[CheckResult]:
    net = build_network((3, 2), 100.0)
    ts = np.logspace(-1, 5, 40)
    d = np.array([worst_case_distance(net, float(t)) for t in ts])
    increase = float(np.max(np.diff(d)))
    ET = leaf_crossing_mean(net)
    coupling = max(float(worst_case_distance(net, float(t)) - ET / t)
                   for t in np.logspace(0, 6, 20))
    sandwich_ok = True
    margin = math.inf
    for nu in (1e2, 1e3):
        n2 = build_network((3, 2), nu)
        for eps in (1 / 8, 1 / 16):
            lower, upper = mixing_bounds(n2, eps)
            t = mixing_time(n2, eps)
            sandwich_ok &= lower <= t <= upper
            margin = min(margin, t / lower - 1, upper / t - 1)
    phi = conductance(build_network((2, 2), 10.0), branch_set(build_network((2, 2), 10.0), 2))
    phi_star, _ = conductance_star(build_network((2, 2), 10.0))
    return [
        _le("mixing: d(t) nonincreasing (max increase)", increase, 1e-10),
        _le("mixing: coupling inequality d(t) - E T/t", coupling, 0.0),
        _ge("mixing: sandwich lower <= t_mix <= upper (relative margin)", margin, 0.0),
        _le("mixing: conductance of C2 equals 1/6 for (2,2), nu=10", abs(phi - 1 / 6), 1e-12),
        _le("mixing: Phi_* minus Phi(C2)", phi_star - phi, 1e-12),
    ]


def check_simulation() -> list[CheckResult]:
    net = build_network((2, 3), 10.0)
    gen = build_generator(net)
    q = HittingQuery(AggState(1, 2), AggState(2, 3))
    a = sample_hitting_time(gen, q, 20000, seed=20240601, workers=1)
    b = sample_hitting_time(gen, q, 20000, seed=20240601, workers=4)
    identical = bool(np.array_equal(a.values, b.values))
    z = abs(a.mean - mean_hitting_time(gen, q)) / a.stderr
    return [
        CheckResult("montecarlo: samples identical for 1 and 4 workers", identical,
                    float(identical), 1.0, "=="),
        _le("montecarlo: |sample mean - exact| in standard errors", z, 3.0),
    ]


CHECKS: list[Callable[[], list[CheckResult]]] = [
    check_stationary,
    check_step_sums,
    check_spectra,
    check_phase_type_cdf,
    check_asymptotics,
    check_excursions_and_limits,
    check_mixing,
    check_simulation,
]


def run_validation() -> list[CheckResult]:
    results: list[CheckResult] = []
    for check in CHECKS:
        results.extend(check())
    return results
