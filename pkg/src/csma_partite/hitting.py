"""Transition times between aggregated states: exact means, growth laws and limit laws."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np
from scipy.special import logsumexp

from .errors import StructureError, UnsupportedCaseError, ValidationError
from .model import AggState, Generator, PartiteNetwork, build_generator, log_stationary_weights
from .spectral import mean_absorption_time


@dataclass(frozen=True)
class HittingQuery:
    source: AggState
    target: AggState

    def __post_init__(self):
        if self.source == self.target:
            raise ValidationError("source and target of a hitting query must differ")

    def check(self, net: PartiteNetwork) -> None:
        for s in (self.source, self.target):
            if not net.contains(s):
                raise ValidationError(f"state {s} is not in the state space")


def mean_hitting_time(gen: Generator, q: HittingQuery) -> float:
    """Exact ``E T`` by first-step analysis, ``(-T) h = 1`` with the target absorbing."""
    q.check(gen.net)
    return mean_absorption_time(gen, q.source, q.target)


# --- birth-death closed forms -------------------------------------------------

def line_position(net: PartiteNetwork, state: AggState) -> int:
    """Coordinate of ``state`` on the birth-death line.

    K = 1: the level.  K = 2: ``-l`` on branch 1, ``+l`` on branch 2, 0 at the center.
    """
    if net.K > 2:
        raise StructureError("the chain is a star with more than two branches, not a line")
    if not net.contains(state):
        raise ValidationError(f"state {state} is not in the state space")
    if state.is_center:
        return 0
    return -state.l if (net.K == 2 and state.k == 1) else state.l


def line_state(net: PartiteNetwork, pos: int) -> AggState:
    if net.K > 2:
        raise StructureError("the chain is a star with more than two branches, not a line")
    if pos == 0:
        return AggState(0, 0)
    if net.K == 1:
        state = AggState(1, pos)
    else:
        state = AggState(1, -pos) if pos < 0 else AggState(2, pos)
    if not net.contains(state):
        raise ValidationError(f"position {pos} is off the line")
    return state


def _line_log_pi(net: PartiteNetwork) -> dict[int, float]:
    gen = build_generator(net)
    lw = log_stationary_weights(net)
    return {line_position(net, s): lw[i] for i, s in enumerate(gen.states)}


def bd_step_mean(net: PartiteNetwork, position: int, direction: int) -> float:
    """Mean time to move one step along the line from ``position``.

    Up (direction +1): ``(1 / q(x, x+1)) * sum_{n <= x} pi_n / pi_x``;
    down (direction -1): ``(1 / q(x, x-1)) * sum_{n >= x} pi_n / pi_x``.
    """
    if direction not in (1, -1):
        raise ValidationError("direction must be +1 or -1")
    log_pi = _line_log_pi(net)
    x, y = position, position + direction
    if x not in log_pi or y not in log_pi:
        raise ValidationError(f"step {x} -> {y} leaves the line")
    gen = build_generator(net)
    rate = gen.rate(line_state(net, x), line_state(net, y))
    side = [n for n in log_pi if (n <= x if direction > 0 else n >= x)]
    return math.exp(logsumexp([log_pi[n] for n in side]) - log_pi[x]) / rate


def bd_path_mean(net: PartiteNetwork, source: AggState, target: AggState) -> float:
    """Sum of step means along the line from ``source`` to ``target``."""
    a, b = line_position(net, source), line_position(net, target)
    if a == b:
        raise ValidationError("source and target coincide")
    d = 1 if b > a else -1
    return math.fsum(bd_step_mean(net, x, d) for x in range(a, b, d))


# --- asymptotic growth laws -----------------------------------------------------

@dataclass(frozen=True)
class AsymptoticLaw:
    """``E T(nu) ~ coefficient * nu ** exponent`` as ``nu`` grows.

    ``degenerate`` marks same-branch upward moves toward a larger branch: the
    time itself shrinks to 0 in distribution even when its mean diverges, so
    there is no nondegenerate limit law.
    """

    coefficient: float
    exponent: int
    regime: str
    degenerate: bool = False

    def __post_init__(self):
        if not self.coefficient > 0:
            raise ValidationError("coefficient must be positive")

    def value(self, nu: float) -> float:
        return self.coefficient * nu ** self.exponent


@dataclass(frozen=True)
class EscapeParams:
    Lstar: int
    Kstar: frozenset[int]
    pstar: float
    indicator: int
    meanM: float

    @property
    def coefficient(self) -> float:
        """Leading coefficient of the cross-branch mean transition time."""
        return self.indicator / self.Lstar + len(self.Kstar) / self.target_size

    target_size: int = 0


def escape_params(net: PartiteNetwork, k1: int, k2: int) -> EscapeParams:
    net.size(k1)
    L2 = net.size(k2)
    if k1 == k2:
        raise ValidationError("k1 and k2 must differ")
    if net.K < 2:
        raise ValidationError("escape parameters need at least two components")
    others = {k: net.size(k) for k in range(1, net.K + 1) if k != k2}
    Lstar = max(others.values())
    Kstar = frozenset(k for k, s in others.items() if s == Lstar)
    pstar = Fraction(len(Kstar) * Lstar, len(Kstar) * Lstar + L2)
    indicator = int(k1 in Kstar)
    meanM = indicator + pstar / (1 - pstar)
    return EscapeParams(Lstar, Kstar, float(pstar), indicator, float(meanM), target_size=L2)


def asymptotic_mean(net: PartiteNetwork, q: HittingQuery) -> AsymptoticLaw:
    """Leading-order growth of ``E T`` for the query classes with known asymptotics."""
    q.check(net)
    src, dst = q.source, q.target
    same_branch = not src.is_center and not dst.is_center and src.k == dst.k
    if dst.is_center or (same_branch and src.l > dst.l):
        # downward inside one branch, other components irrelevant
        L = net.size(src.k)
        l2 = 0 if dst.is_center else dst.l
        coef = math.factorial(l2) * math.factorial(L - l2 - 1) / math.factorial(L)
        return AsymptoticLaw(coef, L - l2 - 1, "same-branch-down")
    if not src.is_center and not dst.is_center and src.k != dst.k:
        p = escape_params(net, src.k, dst.k)
        regime = "cross-branch" if net.K > 2 else "bipartite-cross"
        return AsymptoticLaw(p.coefficient, p.Lstar - 1, regime)
    # upward toward dst within its own branch (source is the center or lower on it)
    if net.K != 2:
        raise UnsupportedCaseError(
            f"no known asymptotics for the upward query {src} -> {dst} with K = {net.K}"
        )
    Ls = net.size(dst.k)
    Lo = net.size(3 - dst.k)
    l1 = 0 if src.is_center else src.l
    if l1 < Lo:
        coef = math.factorial(Ls - l1 - 1) * math.factorial(l1) / math.factorial(Ls)
        return AsymptoticLaw(coef, Lo - l1 - 1, "same-branch-up", degenerate=True)
    if l1 == Lo:
        coef = (math.factorial(Ls) + math.factorial(Lo) * math.factorial(Ls - Lo)) / (
            (Ls - Lo) * math.factorial(Ls))
        return AsymptoticLaw(coef, -1, "same-branch-up", degenerate=True)
    return AsymptoticLaw(1.0 / (Ls - l1), -1, "same-branch-up", degenerate=True)


# --- excursion counts and limit laws -----------------------------------------------

def excursion_pmf(net: PartiteNetwork, k2: int, counts: Mapping[int, int]) -> float:
    """``P(N_k = n_k for all k != k2)``: visits to other branches before entering ``k2``.

    Equals ``p_{k2} * multinomial(sum n; n) * prod p_k^{n_k}`` with ``p_k = L_k / L``.
    """
    net.size(k2)
    others = [k for k in range(1, net.K + 1) if k != k2]
    if k2 in counts:
        raise ValidationError(f"counts must not include the target component {k2}")
    unknown = set(counts) - set(others)
    if unknown:
        raise ValidationError(f"unknown component(s) in counts: {sorted(unknown)}")
    n = {k: int(counts.get(k, 0)) for k in others}
    if any(v < 0 for v in n.values()):
        raise ValidationError("counts must be nonnegative")
    L = net.total_nodes
    total = sum(n.values())
    log_p = math.log(net.size(k2) / L) + math.lgamma(total + 1)
    for k, nk in n.items():
        log_p += nk * math.log(net.size(k) / L) - math.lgamma(nk + 1)
    return math.exp(log_p)


@dataclass(frozen=True)
class LimitLaw:
    """Law of ``(1 / E M) * sum_{i=1}^{M} Y_i`` with ``M = Geo(pstar) + indicator``.

    ``Geo(p)`` lives on {0, 1, 2, ...} with ``P(n) = (1 - p) p^n``; ``Y_i`` are Exp(1).
    """

    pstar: float
    indicator: int

    def __post_init__(self):
        if not 0 < self.pstar < 1:
            raise ValidationError("pstar must lie in (0, 1)")
        if self.indicator not in (0, 1):
            raise ValidationError("indicator must be 0 or 1")

    @property
    def meanM(self) -> float:
        return self.indicator + self.pstar / (1 - self.pstar)

    @property
    def atom(self) -> float:
        """Mass at 0 (only when M can be 0)."""
        return 0.0 if self.indicator else 1.0 - self.pstar

    @classmethod
    def from_params(cls, p: EscapeParams) -> "LimitLaw":
        return cls(p.pstar, p.indicator)


def limit_law(net: PartiteNetwork, k1: int, k2: int) -> LimitLaw:
    return LimitLaw.from_params(escape_params(net, k1, k2))


def limit_law_cdf(law: LimitLaw, x):
    """CDF of the limit law.

    With indicator 1 the random sum is Exp(1).  With indicator 0 it is an atom
    ``1 - p`` at 0 plus ``p`` times an Exp(p) variable.
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0):
        raise ValidationError("x must be nonnegative")
    if law.indicator:
        return -np.expm1(-x_arr)
    p = law.pstar
    return (1 - p) - p * np.expm1(-p * x_arr)
