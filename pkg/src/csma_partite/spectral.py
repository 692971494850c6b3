"""Spectra of killed generators, phase-type absorption laws and transient laws.

Everything here goes through the detailed-balance symmetrization
``G = -D^{1/2} T D^{-1/2}`` (``D = diag(pi)``) of the killed generator ``T``,
so eigenvalues are real by construction.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import mpmath
import numpy as np
from scipy.special import logsumexp
from scipy.stats import poisson

from .errors import ConditioningError, StructureError, ValidationError
from .linalg import gth_solve
from .model import (
    CENTER,
    AggState,
    Distribution,
    Generator,
    PartiteNetwork,
    build_generator,
    log_stationary_weights,
)

# above this many states the transient law falls back to double-precision eigh
EXTENDED_PRECISION_LIMIT = 24
_MP_DPS = 50
DISTINCT_RATE_GAP = 1e-9


def _absorbing_set(gen: Generator, target: AggState | None) -> set[AggState]:
    absorbing = set(gen.absorbing)
    if target is not None:
        gen.index(target)
        absorbing.add(target)
    return absorbing


def killed_states(gen: Generator, target: AggState | None = None,
                  start: AggState | None = None) -> list[AggState]:
    """Transient states of ``gen`` killed at ``target`` (plus its own absorbing states).

    With ``start`` only the states reachable from it before absorption are kept.
    """
    absorbing = _absorbing_set(gen, target)
    if not absorbing:
        raise ValidationError("a killed chain needs at least one absorbing state")
    if start is None:
        return [s for s in gen.states if s not in absorbing]
    gen.index(start)
    if start in absorbing:
        raise ValidationError(f"start state {start} is absorbing")
    unkilled = build_generator(gen.net)
    return [s for s in unkilled.reachable(start, avoid=absorbing) if s not in absorbing]


def _adjacency(net: PartiteNetwork) -> dict[AggState, list[AggState]]:
    gen = build_generator(net)
    return {s: gen.neighbors(s) for s in gen.states}


def chain_order(gen: Generator, target: AggState, start: AggState | None = None) -> list[AggState]:
    """Transient states ordered along the path from the far end to ``target``.

    Raises StructureError unless the killed chain is a path ending at ``target``.
    """
    states = killed_states(gen, target, start)
    inside = set(states)
    adj = _adjacency(gen.net)
    nbrs = {s: [y for y in adj[s] if y in inside] for s in states}
    touching = [s for s in states if target in adj[s]]
    if len(touching) != 1 or any(len(v) > 2 for v in nbrs.values()):
        raise StructureError("killed chain is not a birth-death path ending at the target")
    order = [touching[0]]
    prev = None
    while True:
        nxt = [y for y in nbrs[order[-1]] if y != prev]
        if not nxt:
            break
        if len(nxt) > 1:
            raise StructureError("killed chain branches")
        prev = order[-1]
        order.append(nxt[0])
    if len(order) != len(states):
        raise StructureError("killed chain is not connected")
    return order[::-1]


def potential_coefficients(gen: Generator, absorbing: AggState,
                           start: AggState | None = None) -> dict[AggState, float]:
    """Detailed-balance weights along a birth-death path, 1 at the far end.

    Walking from the far end toward the absorbing state,
    ``theta_next = theta_prev * q(prev, next) / q(next, prev)``; for a single
    branch of size L this is ``theta_{l-1} = l / ((L - l + 1) nu) * theta_l``.
    """
    order = chain_order(gen, absorbing, start)
    unkilled = build_generator(gen.net)
    log_theta = [0.0]
    for x, y in zip(order, order[1:]):
        log_theta.append(log_theta[-1] + math.log(unkilled.rate(x, y)) - math.log(unkilled.rate(y, x)))
    return {s: math.exp(v) for s, v in zip(order, log_theta)}


@dataclass(frozen=True, eq=False)
class SymmetrizedChain:
    transient_states: tuple[AggState, ...]
    theta: np.ndarray
    matrix: np.ndarray
    target: AggState | None = None


def _log_pi(net: PartiteNetwork, states: Sequence[AggState]) -> np.ndarray:
    full = build_generator(net)
    lw = log_stationary_weights(net)
    return np.array([lw[full.index(s)] for s in states])


def _symmetric_matrix(net: PartiteNetwork, states: Sequence[AggState],
                      absorbing: set[AggState]) -> np.ndarray:
    """``-D^{1/2} T D^{-1/2}`` built entrywise from rate products."""
    full = build_generator(net)
    n = len(states)
    G = np.zeros((n, n))
    pos = {s: i for i, s in enumerate(states)}
    for i, x in enumerate(states):
        if x in absorbing:
            continue
        G[i, i] = full.exit_rates[full.index(x)]
        for y in full.neighbors(x):
            j = pos.get(y)
            if j is None or j <= i or y in absorbing:
                continue
            # sqrt(q(x,y) q(y,x)) in log form so huge nu cannot overflow
            g = -math.exp(0.5 * (math.log(full.rate(x, y)) + math.log(full.rate(y, x))))
            G[i, j] = G[j, i] = g
    return G


def symmetrize(gen: Generator, absorbing: AggState, start: AggState | None = None) -> SymmetrizedChain:
    try:
        states = chain_order(gen, absorbing, start)
    except StructureError:
        states = killed_states(gen, absorbing, start)
    lp = _log_pi(gen.net, states)
    theta = np.exp(lp - lp[0])
    G = _symmetric_matrix(gen.net, states, _absorbing_set(gen, absorbing))
    return SymmetrizedChain(tuple(states), theta, G, absorbing)


def _log_green_matrix(net: PartiteNetwork, states: Sequence[AggState],
                      absorbing: set[AggState]) -> np.ndarray | None:
    """Log of ``D^{1/2} (-T)^{-1} D^{-1/2}`` via the tree formula, or None.

    On a tree killed at a single boundary state ``a``, the expected time spent
    in ``y`` before absorption starting from ``x`` is
    ``pi_y * sum(1 / c_e)`` over the edges shared by the paths x->a and y->a,
    with edge conductance ``c_e = pi_u q(u, v)``.  All terms are positive, so
    the result is accurate even when the matrix is astronomically stiff.
    """
    full = build_generator(net)
    inside = set(states)
    lw = log_stationary_weights(net)
    log_pi = {s: lw[full.index(s)] for s in full.states}
    parent: dict[AggState, AggState] = {}
    for comp in _components(full, inside):
        boundary = [(x, a) for x in comp for a in full.neighbors(x) if a in absorbing]
        if len(boundary) != 1:
            return None
        root, a = boundary[0]
        parent[root] = a
        queue = deque([root])
        while queue:
            x = queue.popleft()
            for y in full.neighbors(x):
                if y in inside and y not in parent:
                    parent[y] = x
                    queue.append(y)
    # log resistance of the edge from each state toward the boundary
    log_r = {x: -(log_pi[x] + math.log(full.rate(x, parent[x]))) for x in states}
    ancestors = {}
    for x in states:
        chain = []
        z = x
        while z in inside:
            chain.append(z)
            z = parent[z]
        ancestors[x] = set(chain)
    n = len(states)
    M = np.full((n, n), -np.inf)
    for i, x in enumerate(states):
        for j in range(i, n):
            y = states[j]
            common = ancestors[x] & ancestors[y]
            if not common:
                continue
            v = 0.5 * (log_pi[x] + log_pi[y]) + logsumexp([log_r[z] for z in common])
            M[i, j] = M[j, i] = v
    return M


def _components(full: Generator, inside: set[AggState]) -> list[list[AggState]]:
    seen: set[AggState] = set()
    comps = []
    for s in full.states:
        if s not in inside or s in seen:
            continue
        comp, queue = [], deque([s])
        seen.add(s)
        while queue:
            x = queue.popleft()
            comp.append(x)
            for y in full.neighbors(x):
                if y in inside and y not in seen:
                    seen.add(y)
                    queue.append(y)
        comps.append(comp)
    return comps


@dataclass(frozen=True)
class PhaseType:
    """Sum of independent exponentials with the given rates (ascending).

    ``birth_death`` is False for killed chains that are not paths; their
    spectrum is still valid but the sum-of-exponentials reading is not.
    """

    rates: tuple[float, ...]
    birth_death: bool = True

    def __post_init__(self):
        rates = tuple(sorted(float(r) for r in self.rates))
        if not rates:
            raise ValidationError("a phase-type law needs at least one rate")
        if rates[0] <= 0 or not all(math.isfinite(r) for r in rates):
            raise ValidationError("phase-type rates must be positive and finite")
        object.__setattr__(self, "rates", rates)

    @property
    def mean(self) -> float:
        return math.fsum(1.0 / r for r in self.rates)

    @property
    def min_relative_gap(self) -> float:
        r = self.rates
        if len(r) == 1:
            return math.inf
        return min((b - a) / b for a, b in zip(r, r[1:]))

    @property
    def is_distinct(self) -> bool:
        return self.min_relative_gap > DISTINCT_RATE_GAP

    def cdf(self, t):
        return phase_type_cdf(self, t)


def _spectrum_pair(net: PartiteNetwork, states: Sequence[AggState],
                   absorbing: set[AggState]) -> np.ndarray:
    G = _symmetric_matrix(net, states, absorbing)
    direct = np.linalg.eigvalsh(G)
    logM = _log_green_matrix(net, states, absorbing)
    if logM is None:
        return direct
    scale = logM.max()
    mu = np.linalg.eigvalsh(np.exp(logM - scale))[::-1]
    with np.errstate(divide="ignore"):
        via_green = np.where(mu > 0, np.exp(-(np.log(np.maximum(mu, 1e-300)) + scale)), np.inf)
    # eigh errors: eps*|G| absolute on G, eps*alpha_i/alpha_1 relative through the Green matrix
    norm_G = np.abs(G).sum(axis=1).max()
    alpha1 = via_green[0]
    use_green = via_green / alpha1 < norm_G / np.maximum(direct, 1e-300)
    return np.where(use_green & np.isfinite(via_green), via_green, direct)


def absorption_spectrum(gen: Generator, absorbing: AggState, start: AggState | None = None) -> PhaseType:
    """Nonzero eigenvalues of the negated killed generator, ascending."""
    states = killed_states(gen, absorbing, start)
    if not states:
        raise ValidationError("no transient states")
    absorbing_set = _absorbing_set(gen, absorbing)
    full = build_generator(gen.net)
    inside = set(states)
    for comp in _components(full, inside):
        if not any(absorbing in full.neighbors(x) for x in comp):
            raise ValidationError(f"absorbing state {absorbing} is unreachable from {comp[0]}")
    try:
        chain_order(gen, absorbing, start)
        is_path = True
    except StructureError:
        is_path = False
    rates = _spectrum_pair(gen.net, states, absorbing_set)
    return PhaseType(tuple(rates), birth_death=is_path)


def phase_type_cdf(pt: PhaseType, t):
    """``P(sum Exp(alpha_i) <= t)`` by the distinct-rate hypoexponential formula."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValidationError("t must be nonnegative")
    if not pt.is_distinct:
        raise ConditioningError(
            "rates are nearly coincident (relative gap below 1e-9); "
            "use transient_distribution on the killed chain instead"
        )
    a = np.array(pt.rates)
    d = a.size
    coef = np.empty(d)
    for i in range(d):
        others = np.delete(a, i)
        coef[i] = np.prod(others / (others - a[i]))
    surv = np.exp(-np.multiply.outer(t_arr, a)) @ coef
    return np.clip(1.0 - surv, 0.0, 1.0)


@dataclass(frozen=True)
class GershgorinReport:
    discs: tuple[tuple[float, float], ...]
    separated: bool

    def contains(self, z: float, rtol: float = 1e-12) -> bool:
        # rtol absorbs rounding in eigenvalues that sit exactly on a disc edge
        return any(abs(z - c) <= r + rtol * max(1.0, abs(c)) for c, r in self.discs)


def gershgorin_discs(sym: SymmetrizedChain) -> GershgorinReport:
    """Row discs of the symmetrized matrix.

    ``separated`` says whether the first row's disc (the far end of the chain)
    is disjoint from the union of all others, in which case it holds exactly
    one eigenvalue, the smallest.
    """
    G = sym.matrix
    centers = np.diag(G)
    radii = np.abs(G).sum(axis=1) - np.abs(centers)
    discs = tuple((float(c), float(r)) for c, r in zip(centers, radii))
    c0, r0 = discs[0]
    separated = all(abs(c - c0) > r + r0 for c, r in discs[1:])
    return GershgorinReport(discs, separated)


@lru_cache(maxsize=256)
def _eigensystem(sizes: tuple[int, ...], nu: float, absorbing: frozenset) -> tuple:
    """Eigenpairs of the symmetrized (possibly killed) generator.

    Returns ``(states, log_pi, lam, V)`` with ``-T = D^{-1/2} V diag(lam) V^T D^{1/2}``
    restricted to the transient states.  Small chains are diagonalized in
    50-digit arithmetic from the exact rates.
    """
    net = PartiteNetwork(sizes, nu)
    full = build_generator(net)
    states = [s for s in full.states if s not in absorbing]
    lp = _log_pi(net, states)
    n = len(states)
    if n <= EXTENDED_PRECISION_LIMIT:
        with mpmath.workdps(_MP_DPS):
            mnu = mpmath.mpf(nu)
            G = mpmath.zeros(n, n)
            pos = {s: i for i, s in enumerate(states)}
            for x, y, r in _exact_rates(net, mnu):
                if x in absorbing:
                    continue
                i = pos[x]
                G[i, i] += r
                if y in pos and x not in absorbing and y not in absorbing and pos[y] > i:
                    j = pos[y]
                    G[i, j] = G[j, i] = -mpmath.sqrt(r * _reverse_rate(net, mnu, x, y))
            lam_mp, V_mp = mpmath.eigsy(G)
            lam = np.array([float(v) for v in lam_mp])
            V = np.array(V_mp.tolist(), dtype=float)
    else:
        G = _symmetric_matrix(net, states, set(absorbing))
        lam, V = np.linalg.eigh(G)
    order = np.argsort(lam)
    return tuple(states), lp, lam[order], V[:, order]


def _exact_rates(net: PartiteNetwork, mnu):
    for k, size in enumerate(net.sizes, start=1):
        yield CENTER, AggState(k, 1), size * mnu
        yield AggState(k, 1), CENTER, mpmath.mpf(1)
        for l in range(1, size):
            yield AggState(k, l), AggState(k, l + 1), (size - l) * mnu
            yield AggState(k, l + 1), AggState(k, l), mpmath.mpf(l + 1)


def _reverse_rate(net: PartiteNetwork, mnu, x: AggState, y: AggState):
    # rate y -> x for adjacent x, y
    if y.l > x.l:  # y is further from the center
        return mpmath.mpf(y.l)
    size = net.sizes[x.k - 1] if not x.is_center else net.sizes[y.k - 1]
    return (size - y.l) * mnu


def _as_distribution(gen: Generator, init) -> Distribution:
    if isinstance(init, Distribution):
        if tuple(init.states) != gen.states:
            raise ValidationError("initial distribution is not over the generator's states")
        return init
    return Distribution.point_mass(gen.states, init)


def transient_distribution(gen: Generator, init, t: float) -> Distribution:
    """Law of ``X_t`` from an initial state or distribution, by spectral decomposition."""
    if t < 0:
        raise ValidationError("t must be nonnegative")
    p0 = _as_distribution(gen, init)
    if t == 0:
        return p0
    probs0 = p0.probabilities
    states, lp, lam, V = _eigensystem(gen.net.sizes, gen.net.nu, frozenset(gen.absorbing))
    idx = np.array([gen.index(s) for s in states])
    sqrt_pi = np.exp(0.5 * (lp - lp.max()))
    x0 = probs0[idx]
    result = np.zeros(len(gen.states))
    if not gen.absorbing:
        # drop the stationary mode and add pi back exactly
        stat = int(np.argmax(np.abs(V.T @ (sqrt_pi / np.linalg.norm(sqrt_pi)))))
        keep = np.arange(lam.size) != stat
        coeffs = V[:, keep].T @ (x0 / sqrt_pi)
        pi = np.exp(lp - logsumexp(lp))
        result[idx] = pi + sqrt_pi * (V[:, keep] @ (np.exp(-lam[keep] * t) * coeffs))
    else:
        coeffs = V.T @ (x0 / sqrt_pi)
        result[idx] = sqrt_pi * (V @ (np.exp(-lam * t) * coeffs))
        full = build_generator(gen.net)
        # integrated transient occupation feeds each absorbing state
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(lam > 0, -np.expm1(-lam * t) / lam, t)
        occupation = sqrt_pi * (V @ (w * coeffs))
        for a in gen.absorbing:
            ia = gen.index(a)
            into = np.array([full.rate(s, a) if a in full.neighbors(s) else 0.0 for s in states])
            result[ia] = probs0[ia] + occupation @ into
    result = np.clip(result, 0.0, None)
    result /= result.sum()
    return Distribution.from_probabilities(gen.states, result)


def uniformization_distribution(gen: Generator, init, t: float, tol: float = 1e-12) -> Distribution:
    """Independent oracle for the transient law: Poisson-weighted powers of ``I + Q/Lambda``."""
    if t < 0:
        raise ValidationError("t must be nonnegative")
    p = _as_distribution(gen, init).probabilities
    Q = gen.matrix
    lam_max = float(np.max(-np.diag(Q)))
    if t == 0 or lam_max == 0:
        return Distribution.from_probabilities(gen.states, p)
    P = np.eye(len(p)) + Q / lam_max
    mean = lam_max * t
    n_max = int(poisson.isf(tol, mean)) + 1
    weights = poisson.pmf(np.arange(n_max + 1), mean)
    acc = np.zeros_like(p)
    term = p.copy()
    for w in weights:
        acc += w * term
        term = term @ P
    acc = np.clip(acc, 0.0, None)
    return Distribution.from_probabilities(gen.states, acc / acc.sum())


def far_end(net: PartiteNetwork, target: AggState) -> AggState:
    """Default start for birth-death escape problems.

    K = 1: the leaf.  K = 2: the leaf of the branch not holding ``target``
    (or of branch 1 when the target is the center).
    """
    if net.K == 1:
        return AggState(1, net.sizes[0])
    if net.K == 2:
        k = 1 if target.is_center or target.k == 2 else 2
        return AggState(k, net.sizes[k - 1])
    raise StructureError("far end is only defined for one or two components")


def eigen_time_products(net: PartiteNetwork, target: AggState | None = None,
                        start: AggState | None = None) -> np.ndarray:
    """``alpha_i * E T(start -> target)`` for each absorption rate ``alpha_i``.

    The first product tends to 1 and the rest diverge as ``nu`` grows.
    """
    if net.K > 2:
        raise StructureError("eigen-time products need a single branch or a bipartite line")
    if target is None:
        target = CENTER if net.K == 1 else AggState(2, net.sizes[1])
    if start is None:
        start = far_end(net, target)
    gen = build_generator(net)
    pt = absorption_spectrum(gen, target, start)
    mean = mean_absorption_time(gen, start, target)
    return np.array(pt.rates) * mean


def mean_absorption_time(gen: Generator, start: AggState, target: AggState) -> float:
    """First-step mean of the hitting time of ``target``; see hitting.mean_hitting_time."""
    if start == target:
        raise ValidationError("start and target coincide")
    if gen.absorbing - {target}:
        raise ValidationError("generator has absorbing states other than the target")
    absorbing = {target}
    unkilled = build_generator(gen.net)
    transient = [s for s in unkilled.reachable(start, avoid=absorbing) if s not in absorbing]
    idx = [unkilled.index(s) for s in transient]
    R = unkilled.rates
    rates = R[np.ix_(idx, idx)]
    exit_rates = R[idx].sum(axis=1) - rates.sum(axis=1)
    h = gth_solve(rates, exit_rates, np.ones(len(idx)))
    return float(h[transient.index(start)])
