"""Stochastic simulation of the activity process and goodness-of-fit harnesses."""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from . import _kernels
from .errors import ValidationError
from .hitting import HittingQuery, LimitLaw, excursion_pmf
from .model import (
    CENTER,
    AggState,
    FullState,
    Generator,
    PartiteNetwork,
    agg_states,
    full_state_mask,
    node_components,
)

# asymptotic one-sample Kolmogorov-Smirnov critical values: D_n > c / sqrt(n) rejects
KS_CRITICAL = {0.10: 1.224, 0.05: 1.358, 0.01: 1.628}
MAX_EVENTS = 10**10
_UINT64 = 2**64


def ks_critical(n: int, alpha: float = 0.01) -> float:
    try:
        return KS_CRITICAL[alpha] / math.sqrt(n)
    except KeyError:
        raise ValidationError(f"no tabulated KS critical value for alpha={alpha}") from None


def _check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed < _UINT64:
        raise ValidationError("seed must be an unsigned 64-bit integer")
    return int(seed)


@dataclass(frozen=True, eq=False)
class SampleSet:
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    branches_visited: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v < 0) or np.any(np.isnan(v)):
            raise ValidationError("samples must be nonnegative numbers")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def stderr(self) -> float:
        return float(self.values.std(ddof=1) / math.sqrt(self.n)) if self.n > 1 else math.inf

    def to_csv(self) -> str:
        lines = ["index,value"]
        lines.extend(f"{i},{v!r}" for i, v in enumerate(self.values.tolist()))
        return "\n".join(lines) + "\n"


def batch(runner: Callable[[int, int, int], np.ndarray], n: int, seed: int, workers: int = 1) -> np.ndarray:
    """Run ``runner(seed, lo, hi)`` over contiguous index chunks and stitch them in order.

    Each sample's randomness depends only on ``(seed, index)``, so the result
    is identical for every worker count.
    """
    seed = _check_seed(seed)
    if n < 1:
        raise ValidationError("n must be at least 1")
    if workers < 1:
        raise ValidationError("workers must be at least 1")
    bounds = np.linspace(0, n, min(workers, n) + 1).astype(int)
    chunks = list(zip(bounds[:-1], bounds[1:]))
    if len(chunks) == 1:
        parts = [runner(seed, 0, n)]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(lambda c: runner(seed, int(c[0]), int(c[1])), chunks))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p) for p in zip(*parts))
    return np.concatenate(parts)


@dataclass(frozen=True)
class _Compiled:
    indptr: np.ndarray
    nbr: np.ndarray
    cum: np.ndarray
    total: np.ndarray
    branch_of: np.ndarray


def _compile(gen: Generator) -> _Compiled:
    indptr, nbr, cum = [0], [], []
    R = gen.rates
    for i in range(len(gen.states)):
        js = np.flatnonzero(R[i])
        row = R[i, js]
        if js.size:
            c = np.cumsum(row) / row.sum()
            c[-1] = 1.0
            nbr.extend(js.tolist())
            cum.extend(c.tolist())
        indptr.append(len(nbr))
    branch_of = np.array([s.k for s in gen.states], dtype=np.int64)
    return _Compiled(np.array(indptr, dtype=np.int64), np.array(nbr, dtype=np.int64),
                     np.array(cum), R.sum(axis=1), branch_of)


@dataclass(frozen=True, eq=False)
class Trajectory:
    events: list[tuple[float, AggState]]
    seed: int
    horizon: float

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.events])

    def occupation(self) -> dict[AggState, float]:
        occ: Counter = Counter()
        ends = [t for t, _ in self.events[1:]] + [self.horizon]
        for (t, s), end in zip(self.events, ends):
            occ[s] += end - t
        return dict(occ)


def simulate_trajectory(gen: Generator, init: AggState, seed: int, horizon: float) -> Trajectory:
    """Competing-exponentials path of the aggregated chain on ``[0, horizon]``."""
    seed = _check_seed(seed)
    if not horizon > 0:
        raise ValidationError("horizon must be positive")
    c = _compile(gen)
    start = gen.index(init)
    capacity = 1024
    while True:
        times, states, count = _kernels.trajectory(c.indptr, c.nbr, c.cum, c.total, start,
                                                   seed, 0, float(horizon), capacity)
        if count >= 0:
            break
        capacity *= 4
    events = [(float(times[i]), gen.states[states[i]]) for i in range(count)]
    return Trajectory(events, seed, float(horizon))


def sample_hitting_time(gen: Generator, q: HittingQuery, n: int, seed: int,
                        workers: int = 1, max_events: int = MAX_EVENTS) -> SampleSet:
    """``n`` independent first-passage times from ``q.source`` to ``q.target``."""
    q.check(gen.net)
    if gen.absorbing - {q.target}:
        raise ValidationError("generator has absorbing states other than the target")
    c = _compile(gen)
    start, target = gen.index(q.source), gen.index(q.target)
    if q.target not in gen.reachable(q.source):
        raise ValidationError(f"target {q.target} is unreachable from {q.source}")

    def runner(seed, lo, hi):
        t, masks, _ = _kernels.first_passage_batch(c.indptr, c.nbr, c.cum, c.total, c.branch_of,
                                                   start, target, seed, lo, hi, max_events)
        return t, masks

    values, masks = batch(runner, n, seed, workers)
    if np.any(np.isnan(values)):
        raise RuntimeError(f"some runs exceeded {max_events} events")
    meta = {"sizes": list(gen.net.sizes), "nu": gen.net.nu, "query": [str(q.source), str(q.target)],
            "n": n, "seed": seed}
    return SampleSet(values, meta, branches_visited=masks)


def occupation_times(gen: Generator, init: AggState, horizon: float, n: int, seed: int,
                     workers: int = 1) -> np.ndarray:
    """Per-run time spent in each aggregated state over ``[0, horizon]`` (rows: runs)."""
    c = _compile(gen)
    start = gen.index(init)

    def runner(seed, lo, hi):
        return _kernels.occupation_batch(c.indptr, c.nbr, c.cum, c.total, start, seed, lo, hi, float(horizon))

    return batch(runner, n, seed, workers)


def full_chain_occupation(net: PartiteNetwork, init: FullState, horizon: float, n: int, seed: int,
                          direct: bool = False, workers: int = 1) -> np.ndarray:
    """Aggregated occupation times obtained by simulating every node.

    ``direct`` gives each node its own exponential clock; otherwise the
    equivalent total-rate scheme is used.
    """
    if net.total_nodes > 62:
        raise ValidationError("per-node simulation supports at most 62 nodes")
    comp = node_components(net).astype(np.int64)
    sizes = np.array(net.sizes, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    mask = full_state_mask(init, net)

    def runner(seed, lo, hi):
        return _kernels.full_occupation_batch(comp, sizes, offsets, net.nu, mask, seed, lo, hi,
                                              float(horizon), bool(direct))

    return batch(runner, n, seed, workers)


def excursion_counts(gen: Generator, k2: int, n: int, seed: int, workers: int = 1) -> np.ndarray:
    """Rows ``(N_k)_{k != k2}``: entries into each other branch before branch ``k2``."""
    net = gen.net
    if net.K < 2:
        raise ValidationError("excursion counts need at least two components")
    net.size(k2)
    c = _compile(gen)
    center = gen.index(CENTER)

    def runner(seed, lo, hi):
        return _kernels.excursion_batch(c.indptr, c.nbr, c.cum, c.branch_of, center, k2, net.K, seed, lo, hi)

    counts = batch(runner, n, seed, workers)
    others = [k for k in range(1, net.K + 1) if k != k2]
    return counts[:, others]


def empirical_excursions(gen: Generator, k2: int, n: int, seed: int, workers: int = 1) -> dict[tuple, float]:
    """Empirical joint law of the excursion counts, keyed by count vector over ``k != k2``."""
    rows = excursion_counts(gen, k2, n, seed, workers)
    freq = Counter(map(tuple, rows.tolist()))
    return {k: v / n for k, v in sorted(freq.items())}


def excursion_chi_square(net: PartiteNetwork, k2: int, rows: np.ndarray, min_expected: float = 5.0):
    """Pearson chi-square of observed count vectors against ``excursion_pmf``.

    Cells with expected count below ``min_expected`` are pooled into one tail cell.
    Returns ``(statistic, p_value, degrees_of_freedom)``.
    """
    n = rows.shape[0]
    others = [k for k in range(1, net.K + 1) if k != k2]
    observed = Counter(map(tuple, rows.tolist()))
    cells, expected_mass = [], []
    # enumerate count vectors by total until the remaining mass is negligible
    total = 0
    covered = 0.0
    while covered < 1 - 1e-12 and total < 10_000:
        for vec in _compositions(total, len(others)):
            p = excursion_pmf(net, k2, dict(zip(others, vec)))
            covered += p
            if n * p >= min_expected:
                cells.append(vec)
                expected_mass.append(p)
        total += 1
    obs = [observed.get(c, 0) for c in cells]
    tail_obs = n - sum(obs)
    tail_mass = max(0.0, 1.0 - sum(expected_mass))
    obs.append(tail_obs)
    expected_mass.append(tail_mass)
    exp = np.array(expected_mass) * n
    obs = np.array(obs, dtype=float)
    if exp[-1] < min_expected:
        # fold a tiny tail into the last regular cell
        obs[-2] += obs[-1]
        exp[-2] += exp[-1]
        obs, exp = obs[:-1], exp[:-1]
    exp *= n / exp.sum()
    statistic, p_value = stats.chisquare(obs, exp)
    return float(statistic), float(p_value), int(obs.size - 1)


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def sample_limit_law(law: LimitLaw, n: int, seed: int, workers: int = 1) -> SampleSet:
    """Samples of the limit law drawn from its defining geometric random sum."""

    def runner(seed, lo, hi):
        return _kernels.limit_law_batch(law.pstar, law.indicator, law.meanM, seed, lo, hi)

    values = batch(runner, n, seed, workers)
    return SampleSet(values, {"pstar": law.pstar, "indicator": law.indicator, "n": n, "seed": seed})


def ks_statistic(samples, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """One-sample Kolmogorov-Smirnov distance ``sup |F_n - F|``."""
    x = np.sort(np.asarray(samples.values if isinstance(samples, SampleSet) else samples, dtype=float))
    n = x.size
    if n < 10:
        raise ValidationError("KS statistic needs at least 10 samples")
    F = np.asarray(cdf(x), dtype=float)
    upper = np.arange(1, n + 1) / n - F
    lower = F - np.arange(n) / n
    return float(max(upper.max(), lower.max()))


def dominance_fraction(gen: Generator, init: AggState, horizon: float, n: int, seed: int,
                       threshold: float = 0.9, workers: int = 1) -> float:
    """Fraction of runs in which one branch holds more than ``threshold`` of the time."""
    occ = occupation_times(gen, init, horizon, n, seed, workers)
    states = agg_states(gen.net)
    per_branch = np.zeros((occ.shape[0], gen.net.K))
    for j, s in enumerate(states):
        if not s.is_center:
            per_branch[:, s.k - 1] += occ[:, j]
    return float(np.mean(per_branch.max(axis=1) / horizon > threshold))
