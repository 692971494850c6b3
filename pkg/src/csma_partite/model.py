"""State spaces, generators and stationary laws of the partite CSMA activity process.

Nodes of a complete K-partite interference graph activate at rate ``nu`` when
unblocked and transmit for an Exp(1) duration.  Since nodes block each other
exactly when they lie in different components, all active nodes sit in one
component and the process lumps onto a star: the center (nothing active)
plus one branch per component, level ``l`` meaning ``l`` active nodes.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import CapacityError, ValidationError

FULL_ENUMERATION_LIMIT = 24


class AggState(NamedTuple):
    """Aggregated state: ``(0, 0)`` is the center, ``(k, l)`` means l active nodes in component k."""

    k: int
    l: int

    @property
    def is_center(self) -> bool:
        return self.k == 0

    def __str__(self) -> str:
        return "0" if self.is_center else f"{self.k}:{self.l}"


CENTER = AggState(0, 0)


def branch(k: int, l: int) -> AggState:
    if k < 1 or l < 1:
        raise ValidationError(f"branch state needs k >= 1 and l >= 1, got ({k}, {l})")
    return AggState(k, l)


def parse_state(text: str) -> AggState:
    """Parse ``"0"`` or ``"k:l"``."""
    text = text.strip()
    if text == "0":
        return CENTER
    try:
        k, l = text.split(":")
        return branch(int(k), int(l))
    except ValueError as exc:
        raise ValidationError(f"malformed state {text!r}; expected '0' or 'k:l'") from exc


@dataclass(frozen=True)
class PartiteNetwork:
    sizes: tuple[int, ...]
    nu: float

    def __post_init__(self):
        sizes = tuple(self.sizes)
        if not sizes:
            raise ValidationError("sizes: at least one component is required")
        for s in sizes:
            if isinstance(s, bool) or int(s) != s:
                raise ValidationError(f"sizes: component size must be an integer, got {s!r}")
            if s < 1:
                raise ValidationError(f"sizes: size must be >= 1, got {s}")
        nu = float(self.nu)
        if not math.isfinite(nu) or nu <= 0:
            raise ValidationError(f"nu: activation rate must be positive and finite, got {self.nu!r}")
        object.__setattr__(self, "sizes", tuple(int(s) for s in sizes))
        object.__setattr__(self, "nu", nu)

    @property
    def K(self) -> int:
        return len(self.sizes)

    @property
    def total_nodes(self) -> int:
        return sum(self.sizes)

    def size(self, k: int) -> int:
        """Size of component ``k`` (1-based)."""
        if not 1 <= k <= self.K:
            raise ValidationError(f"component index {k} outside 1..{self.K}")
        return self.sizes[k - 1]

    def contains(self, state: AggState) -> bool:
        if state.is_center:
            return state.l == 0
        return 1 <= state.k <= self.K and 1 <= state.l <= self.sizes[state.k - 1]

    def with_nu(self, nu: float) -> "PartiteNetwork":
        return PartiteNetwork(self.sizes, nu)


def build_network(sizes: Sequence[int], nu: float) -> PartiteNetwork:
    return PartiteNetwork(tuple(sizes), nu)


def load_network(path: str | Path) -> PartiteNetwork:
    """Read a network file: a JSON object ``{"sizes": [3, 2], "nu": 100.0}``."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValidationError("network file must hold a JSON object")
    missing = {"sizes", "nu"} - data.keys()
    if missing:
        raise ValidationError(f"network file is missing field(s): {', '.join(sorted(missing))}")
    if not isinstance(data["sizes"], list):
        raise ValidationError("sizes: expected an integer array")
    return build_network(data["sizes"], data["nu"])


def dump_network(net: PartiteNetwork) -> str:
    return json.dumps({"sizes": list(net.sizes), "nu": net.nu})


def agg_states(net: PartiteNetwork) -> list[AggState]:
    """Center first, then branches in component order, levels ascending."""
    states = [CENTER]
    for k, size in enumerate(net.sizes, start=1):
        states.extend(AggState(k, l) for l in range(1, size + 1))
    return states


@dataclass(frozen=True, eq=False)
class Generator:
    """Rate matrix of the aggregated chain.

    ``rates`` holds only off-diagonal transition rates; ``matrix`` adds the
    diagonal.  Rows of absorbing states are zero.
    """

    net: PartiteNetwork
    states: tuple[AggState, ...]
    rates: np.ndarray
    absorbing: frozenset[AggState] = frozenset()
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.states)})
        self.rates.setflags(write=False)

    def index(self, state: AggState) -> int:
        try:
            return self._index[state]
        except KeyError:
            raise ValidationError(f"state {state} is not in the state space") from None

    def rate(self, x: AggState, y: AggState) -> float:
        return float(self.rates[self.index(x), self.index(y)])

    @property
    def matrix(self) -> np.ndarray:
        Q = np.array(self.rates, dtype=float)
        Q[np.diag_indices_from(Q)] = -Q.sum(axis=1)
        return Q

    @property
    def exit_rates(self) -> np.ndarray:
        return self.rates.sum(axis=1)

    def neighbors(self, state: AggState) -> list[AggState]:
        i = self.index(state)
        return [self.states[j] for j in np.flatnonzero(self.rates[i])]

    def edges(self) -> list[tuple[int, int]]:
        """Undirected adjacency of the unkilled star, as index pairs ``i < j``."""
        return edge_list(self.net, self.states)

    def killed(self, absorbing: Iterable[AggState]) -> "Generator":
        return build_generator(self.net, set(self.absorbing) | set(absorbing))

    def reachable(self, start: AggState, avoid: Iterable[AggState] = ()) -> list[AggState]:
        """States reachable from ``start`` along positive rates without entering ``avoid``."""
        avoid = set(avoid)
        seen = {start}
        queue = deque([start])
        while queue:
            x = queue.popleft()
            if x in avoid:
                continue
            for y in self.neighbors(x):
                if y not in seen:
                    seen.add(y)
                    queue.append(y)
        return [s for s in self.states if s in seen]


def edge_list(net: PartiteNetwork, states: Sequence[AggState]) -> list[tuple[int, int]]:
    index = {s: i for i, s in enumerate(states)}
    edges = []
    for k, size in enumerate(net.sizes, start=1):
        prev = CENTER
        for l in range(1, size + 1):
            cur = AggState(k, l)
            edges.append(tuple(sorted((index[prev], index[cur]))))
            prev = cur
    return edges


def _raw_rates(net: PartiteNetwork) -> list[tuple[AggState, AggState, float]]:
    nu = net.nu
    out = []
    for k, size in enumerate(net.sizes, start=1):
        out.append((CENTER, AggState(k, 1), size * nu))
        out.append((AggState(k, 1), CENTER, 1.0))
        for l in range(1, size):
            out.append((AggState(k, l), AggState(k, l + 1), (size - l) * nu))
            out.append((AggState(k, l + 1), AggState(k, l), float(l + 1)))
    return out


def build_generator(net: PartiteNetwork, absorbing: Iterable[AggState] | None = None) -> Generator:
    states = tuple(agg_states(net))
    absorbing = frozenset(absorbing or ())
    for s in absorbing:
        if not net.contains(s):
            raise ValidationError(f"absorbing state {s} is not in the state space")
    index = {s: i for i, s in enumerate(states)}
    rates = np.zeros((len(states), len(states)))
    for x, y, r in _raw_rates(net):
        if x not in absorbing:
            rates[index[x], index[y]] = r
    return Generator(net, states, rates, absorbing)


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability vector stored as unnormalized natural-log weights."""

    states: tuple
    logweights: np.ndarray

    def __post_init__(self):
        lw = np.asarray(self.logweights, dtype=float)
        if lw.shape != (len(self.states),):
            raise ValidationError("one log weight per state is required")
        if np.any(np.isnan(lw)) or np.any(lw == np.inf):
            raise ValidationError("log weights must be finite or -inf")
        lw.setflags(write=False)
        object.__setattr__(self, "logweights", lw)

    @property
    def log_norm(self) -> float:
        return float(logsumexp(self.logweights))

    @property
    def log_probabilities(self) -> np.ndarray:
        return self.logweights - self.log_norm

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_probabilities)

    def prob(self, state) -> float:
        return float(self.probabilities[self.states.index(state)])

    def as_dict(self) -> dict:
        return dict(zip(self.states, self.probabilities))

    @classmethod
    def from_probabilities(cls, states: Sequence, probs: Sequence[float]) -> "Distribution":
        p = np.asarray(probs, dtype=float)
        if np.any(p < 0):
            raise ValidationError("probabilities must be nonnegative")
        with np.errstate(divide="ignore"):
            return cls(tuple(states), np.log(p))

    @classmethod
    def point_mass(cls, states: Sequence, state) -> "Distribution":
        states = tuple(states)
        if state not in states:
            raise ValidationError(f"state {state} is not in the state space")
        lw = np.full(len(states), -np.inf)
        lw[states.index(state)] = 0.0
        return cls(states, lw)

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["state", "log_weight", "probability"])
        for s, lw, p in zip(self.states, self.logweights, self.probabilities):
            writer.writerow([str(s), repr(float(lw)), repr(float(p))])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def log_stationary_weights(net: PartiteNetwork) -> np.ndarray:
    """Unnormalized log weights ``log C(L_k, l) + l log nu`` in ``agg_states`` order."""
    log_nu = math.log(net.nu)
    lw = [0.0]
    for size in net.sizes:
        for l in range(1, size + 1):
            lw.append(math.lgamma(size + 1) - math.lgamma(l + 1) - math.lgamma(size - l + 1) + l * log_nu)
    return np.array(lw)


def stationary_agg(net: PartiteNetwork) -> Distribution:
    return Distribution(tuple(agg_states(net)), log_stationary_weights(net))


@dataclass(frozen=True, order=True)
class FullState:
    """Set of active nodes; a node is ``(component, index)`` with both 1-based."""

    active: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        active = tuple(sorted(set(self.active)))
        if len({k for k, _ in active}) > 1:
            raise ValidationError("active nodes must share one component")
        object.__setattr__(self, "active", active)

    @property
    def component(self) -> int:
        return self.active[0][0] if self.active else 0

    @property
    def weight(self) -> int:
        return len(self.active)

    def aggregate(self) -> AggState:
        return AggState(self.component, self.weight)

    def __str__(self) -> str:
        if not self.active:
            return "0"
        return f"{self.component}:{{{';'.join(str(i) for _, i in self.active)}}}"


def _check_enumerable(net: PartiteNetwork) -> None:
    if net.total_nodes > FULL_ENUMERATION_LIMIT:
        raise CapacityError(
            f"full state space enumeration is capped at {FULL_ENUMERATION_LIMIT} nodes, "
            f"network has {net.total_nodes}"
        )


def full_states(net: PartiteNetwork) -> list[FullState]:
    """Empty set, then per component all nonempty subsets by size, lexicographically."""
    _check_enumerable(net)
    states = [FullState()]
    for k, size in enumerate(net.sizes, start=1):
        nodes = [(k, i) for i in range(1, size + 1)]
        for r in range(1, size + 1):
            states.extend(FullState(c) for c in itertools.combinations(nodes, r))
    return states


def stationary_full(net: PartiteNetwork) -> Distribution:
    states = full_states(net)
    log_nu = math.log(net.nu)
    return Distribution(tuple(states), np.array([s.weight * log_nu for s in states]))


def aggregate(full: Distribution, net: PartiteNetwork) -> Distribution:
    """Push a law on the full state space forward onto the star."""
    if tuple(full.states) != tuple(full_states(net)):
        raise ValidationError("distribution is not over the full state space of this network")
    states = agg_states(net)
    index = {s: i for i, s in enumerate(states)}
    buckets: list[list[float]] = [[] for _ in states]
    for s, lw in zip(full.states, full.logweights):
        buckets[index[s.aggregate()]].append(lw)
    lw = np.array([logsumexp(b) if b else -np.inf for b in buckets])
    return Distribution(tuple(states), lw)


def node_components(net: PartiteNetwork) -> np.ndarray:
    """Component (1-based) of every node, nodes numbered component-major."""
    return np.repeat(np.arange(1, net.K + 1), net.sizes)


def full_state_mask(state: FullState, net: PartiteNetwork) -> int:
    offsets = np.concatenate([[0], np.cumsum(net.sizes)])
    mask = 0
    for k, i in state.active:
        mask |= 1 << int(offsets[k - 1] + i - 1)
    return mask
