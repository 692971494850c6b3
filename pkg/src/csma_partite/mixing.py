"""Distance to stationarity, mixing times, conductance and the coupling/bottleneck bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np
from scipy.special import logsumexp

from .errors import CapacityError, ValidationError
from .model import AggState, Distribution, PartiteNetwork, agg_states, build_generator, build_network, log_stationary_weights
from .spectral import _eigensystem, mean_absorption_time

CONDUCTANCE_ENUMERATION_LIMIT = 24
_BISECTION_RTOL = 1e-6
_MONOTONE_SLACK = 1e-10


def tv_distance(p: Distribution, q: Distribution) -> float:
    if tuple(p.states) != tuple(q.states):
        raise ValidationError("distributions live on different state lists")
    return float(0.5 * np.abs(p.probabilities - q.probabilities).sum())


@lru_cache(maxsize=128)
def _deviation_modes(sizes: tuple[int, ...], nu: float):
    """Non-stationary eigenmodes of the symmetrized generator.

    ``P_t(x, y) - pi_y = sqrt(pi_y / pi_x) * sum_k exp(-lam_k t) v_k(x) v_k(y)``,
    so distances to equilibrium never subtract two nearly equal numbers.
    """
    states, lp, lam, V = _eigensystem(sizes, nu, frozenset())
    sqrt_pi = np.exp(0.5 * (lp - logsumexp(lp)))
    stat = int(np.argmax(np.abs(V.T @ sqrt_pi)))
    keep = np.arange(lam.size) != stat
    return sqrt_pi, lam[keep], V[:, keep]


def _distance_rows(net: PartiteNetwork, t: float) -> np.ndarray:
    sqrt_pi, lam, V = _deviation_modes(net.sizes, net.nu)
    core = (V * np.exp(-lam * t)) @ V.T
    dev = core * sqrt_pi[None, :] / sqrt_pi[:, None]
    return 0.5 * np.abs(dev).sum(axis=1)


def worst_case_distance(net: PartiteNetwork, t: float) -> float:
    """``d(t) = max_x || P(X_t^x in .) - pi ||_TV``."""
    if t < 0:
        raise ValidationError("t must be nonnegative")
    if t == 0:
        pi = np.exp(log_stationary_weights(net) - logsumexp(log_stationary_weights(net)))
        return float(1.0 - pi.min())
    return float(_distance_rows(net, t).max())


def mixing_time(net: PartiteNetwork, epsilon: float) -> float:
    """Smallest ``t`` with ``d(t) <= epsilon``, by doubling then bisection."""
    if not 0 < epsilon < 1:
        raise ValidationError("epsilon must lie in (0, 1)")
    if worst_case_distance(net, 0.0) <= epsilon:
        return 0.0
    hi = 1.0
    while worst_case_distance(net, hi) > epsilon:
        hi *= 2.0
        if hi > 1e300:
            raise ArithmeticError("d(t) does not fall below epsilon")
    lo = 0.0 if hi == 1.0 else hi / 2.0
    while hi - lo > _BISECTION_RTOL * hi:
        mid = 0.5 * (lo + hi)
        if worst_case_distance(net, mid) > epsilon:
            lo = mid
        else:
            hi = mid
    if worst_case_distance(net, 2 * hi) > worst_case_distance(net, hi) + _MONOTONE_SLACK:
        raise ArithmeticError("d(t) is numerically non-monotone near the mixing time")
    return hi


def _pi_and_conductances(net: PartiteNetwork):
    gen = build_generator(net)
    lw = log_stationary_weights(net)
    pi = np.exp(lw - logsumexp(lw))
    edges = gen.edges()
    # stationary flow across each undirected edge (same in both directions by reversibility)
    flow = np.array([math.exp(lw[i] - logsumexp(lw) + math.log(gen.rates[i, j])) for i, j in edges])
    return gen, pi, edges, flow


def conductance(net: PartiteNetwork, S: Iterable[AggState]) -> float:
    """``Phi(S) = Q(S, S^c) / pi(S)``."""
    gen, pi, edges, flow = _pi_and_conductances(net)
    members = set(S)
    for s in members:
        gen.index(s)
    if not members or len(members) == len(gen.states):
        raise ValidationError("S must be a nonempty proper subset of the state space")
    inside = np.array([s in members for s in gen.states])
    lw = log_stationary_weights(net)
    # log of pi_u q(u, v) for every edge leaving S; pi's normalizer cancels
    log_out = []
    for i, j in edges:
        if inside[i] != inside[j]:
            u, v = (i, j) if inside[i] else (j, i)
            log_out.append(lw[u] + math.log(gen.rates[u, v]))
    return math.exp(logsumexp(log_out) - logsumexp(lw[inside]))


def branch_set(net: PartiteNetwork, k: int) -> list[AggState]:
    """All states of component ``k`` (the set called C_k)."""
    return [AggState(k, l) for l in range(1, net.size(k) + 1)]


def conductance_star(net: PartiteNetwork) -> tuple[float, frozenset[AggState]]:
    """Exact ``min Phi(S)`` over nonempty ``S`` with ``pi(S) <= 1/2``, with a minimizer."""
    gen, pi, edges, flow = _pi_and_conductances(net)
    n = len(gen.states)
    if n > CONDUCTANCE_ENUMERATION_LIMIT:
        raise CapacityError(
            f"conductance enumeration is capped at {CONDUCTANCE_ENUMERATION_LIMIT} states, "
            f"chain has {n}; fall back to the branch conductance Phi(C_2)"
        )
    ei = np.array([e[0] for e in edges])
    ej = np.array([e[1] for e in edges])
    best, best_mask = math.inf, 0
    bits = np.arange(n)
    chunk = 1 << 16
    for start in range(1, 1 << n, chunk):
        masks = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        member = ((masks[:, None] >> bits) & 1).astype(bool)
        mass = member @ pi
        cut = (member[:, ei] != member[:, ej]) @ flow
        ok = mass <= 0.5
        if not ok.any():
            continue
        phi = np.where(ok, cut / np.where(ok, mass, 1.0), np.inf)
        i = int(np.argmin(phi))
        if phi[i] < best:
            best, best_mask = float(phi[i]), int(masks[i])
    S = frozenset(s for b, s in enumerate(gen.states) if best_mask >> b & 1)
    return best, S


def sorted_components(net: PartiteNetwork) -> tuple[int, ...]:
    """Component indices ordered by decreasing size (stable in index)."""
    return tuple(sorted(range(1, net.K + 1), key=lambda k: (-net.size(k), k)))


def leaf_crossing_mean(net: PartiteNetwork) -> float:
    """``E T`` from the leaf of the second-largest branch to the leaf of the largest.

    The walk lives on the two largest branches and the center only.
    """
    if net.K < 2:
        raise ValidationError("the coupling bound needs at least two components")
    k1, k2 = sorted_components(net)[:2]
    line = build_network([net.size(k1), net.size(k2)], net.nu)
    gen = build_generator(line)
    return mean_absorption_time(gen, AggState(2, line.sizes[1]), AggState(1, line.sizes[0]))


@dataclass(frozen=True)
class MixingReport:
    epsilon: float
    t_mix: float
    lower_bound: float | None
    upper_bound: float
    conductance_C2: float
    phi_star: float | None
    permutation: tuple[int, ...] = field(default=())

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "t_mix": self.t_mix,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "conductance_C2": self.conductance_C2,
            "phi_star": self.phi_star,
            "permutation": list(self.permutation),
        }


def mixing_bounds(net: PartiteNetwork, epsilon: float) -> tuple[float | None, float]:
    """Bottleneck lower bound ``(1/2 - 2 eps) / Phi_*`` and coupling upper bound ``E T / eps``.

    The lower bound is None for ``epsilon >= 1/4``.  Past the enumeration cap
    ``Phi(C_2)`` replaces ``Phi_*``, which keeps the bound valid since it is larger.
    """
    if not 0 < epsilon < 1:
        raise ValidationError("epsilon must lie in (0, 1)")
    upper = leaf_crossing_mean(net) / epsilon
    if epsilon >= 0.25:
        return None, upper
    try:
        phi, _ = conductance_star(net)
    except CapacityError:
        phi = conductance(net, branch_set(net, sorted_components(net)[1]))
    return (0.5 - 2 * epsilon) / phi, upper


def mixing_report(net: PartiteNetwork, epsilon: float) -> MixingReport:
    lower, upper = mixing_bounds(net, epsilon)
    order = sorted_components(net)
    phi_c2 = conductance(net, branch_set(net, order[1]))
    try:
        phi_star = conductance_star(net)[0]
    except CapacityError:
        phi_star = None
    return MixingReport(epsilon, mixing_time(net, epsilon), lower, upper, phi_c2, phi_star, order)
