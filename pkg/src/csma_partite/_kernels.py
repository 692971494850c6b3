"""Compiled simulation kernels and the counter-based random stream they share.

Every sample draws from its own SplitMix64 stream whose starting point is a
hash of ``(seed, sample index)``; the k-th draw of a stream is
``mix(start + k * GAMMA)``.  Results therefore never depend on how samples
are split across workers.
"""

import numpy as np
from numba import njit

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def stream_start(seed, index):
    s = _mix(np.uint64(seed) ^ _mix(np.uint64(index) * _GAMMA + np.uint64(1)))
    return s


@njit(cache=True, inline="always")
def next_uniform(s):
    """Advance the stream; return the new state and a uniform in [0, 1)."""
    s = s + _GAMMA
    return s, float(_mix(s) >> _S11) * _INV53


@njit(cache=True, inline="always")
def next_exponential(s):
    s, u = next_uniform(s)
    return s, -np.log1p(-u)


@njit(cache=True)
def uniforms(seed, index, n):
    out = np.empty(n)
    s = stream_start(seed, index)
    for i in range(n):
        s, out[i] = next_uniform(s)
    return out


@njit(cache=True, inline="always")
def _choose(s, indptr, cum, x):
    s, u = next_uniform(s)
    j = indptr[x]
    end = indptr[x + 1] - 1
    while j < end and u >= cum[j]:
        j += 1
    return s, j


@njit(cache=True, nogil=True)
def first_passage_batch(indptr, nbr, cum, total, branch_of, start, target,
                        seed, lo, hi, max_events):
    """Hitting times of ``target`` from ``start`` for samples lo..hi-1.

    Also returns, per sample, the bitmask of branches entered on the way and
    the number of jumps.  A sample that exceeds ``max_events`` yields NaN.
    """
    n = hi - lo
    times = np.empty(n)
    masks = np.zeros(n, dtype=np.int64)
    events = np.zeros(n, dtype=np.int64)
    for i in range(n):
        s = stream_start(seed, lo + i)
        x = start
        t = 0.0
        mask = np.int64(0)
        if branch_of[x] > 0:
            mask |= np.int64(1) << branch_of[x]
        count = 0
        while x != target:
            if count >= max_events:
                t = np.nan
                break
            s, e = next_exponential(s)
            t += e / total[x]
            s, j = _choose(s, indptr, cum, x)
            x = nbr[j]
            if branch_of[x] > 0:
                mask |= np.int64(1) << branch_of[x]
            count += 1
        times[i] = t
        masks[i] = mask
        events[i] = count
    return times, masks, events


@njit(cache=True, nogil=True)
def trajectory(indptr, nbr, cum, total, start, seed, index, horizon, capacity):
    """Jump times and states up to ``horizon``; ``count == -1`` means capacity was too small."""
    times = np.empty(capacity)
    states = np.empty(capacity, dtype=np.int64)
    s = stream_start(seed, index)
    x = start
    t = 0.0
    times[0] = 0.0
    states[0] = x
    count = 1
    while total[x] > 0:
        s, e = next_exponential(s)
        t += e / total[x]
        if t > horizon:
            break
        s, j = _choose(s, indptr, cum, x)
        x = nbr[j]
        if count >= capacity:
            return times, states, -1
        times[count] = t
        states[count] = x
        count += 1
    return times, states, count


@njit(cache=True, nogil=True)
def occupation_batch(indptr, nbr, cum, total, start, seed, lo, hi, horizon):
    """Time spent in each state during [0, horizon], one row per sample."""
    nstates = total.size
    occ = np.zeros((hi - lo, nstates))
    for i in range(hi - lo):
        s = stream_start(seed, lo + i)
        x = start
        t = 0.0
        while True:
            if total[x] == 0:
                occ[i, x] += horizon - t
                break
            s, e = next_exponential(s)
            dt = e / total[x]
            if t + dt >= horizon:
                occ[i, x] += horizon - t
                break
            occ[i, x] += dt
            t += dt
            s, j = _choose(s, indptr, cum, x)
            x = nbr[j]
    return occ


@njit(cache=True, nogil=True)
def excursion_batch(indptr, nbr, cum, branch_of, center, k2, nbranches, seed, lo, hi):
    """Entries into each branch before the first jump from the center into branch ``k2``.

    Runs the embedded jump chain from the center; column k counts entries into
    branch k (column 0 unused).
    """
    counts = np.zeros((hi - lo, nbranches + 1), dtype=np.int64)
    for i in range(hi - lo):
        s = stream_start(seed, lo + i)
        x = center
        while True:
            s, j = _choose(s, indptr, cum, x)
            y = nbr[j]
            if x == center:
                b = branch_of[y]
                if b == k2:
                    break
                counts[i, b] += 1
            x = y
    return counts


@njit(cache=True, nogil=True)
def limit_law_batch(pstar, indicator, mean_m, seed, lo, hi):
    """Samples of ``(1 / E M) * sum_{i<=M} Y_i`` drawn term by term."""
    out = np.empty(hi - lo)
    for i in range(hi - lo):
        s = stream_start(seed, lo + i)
        m = indicator
        while True:
            s, u = next_uniform(s)
            if u < pstar:
                m += 1
            else:
                break
        acc = 0.0
        for _ in range(m):
            s, e = next_exponential(s)
            acc += e
        out[i] = acc / mean_m
    return out


@njit(cache=True, nogil=True)
def full_occupation_batch(comp, sizes, offsets, nu, start_mask, seed, lo, hi, horizon, direct):
    """Aggregated occupation times from simulating every node of the full chain.

    ``comp[i]`` is node i's component (1-based).  With ``direct`` each eligible
    node draws its own exponential clock and the earliest one fires; otherwise
    one exponential with the total rate is drawn and the node picked
    proportionally.  Occupation is accumulated on the aggregated index
    ``offsets[k] + active count`` (0 for the empty state).
    """
    L = comp.size
    nagg = offsets[-1] + sizes[-1] + 1
    occ = np.zeros((hi - lo, nagg))
    rates = np.empty(L)
    for i in range(hi - lo):
        s = stream_start(seed, lo + i)
        mask = np.int64(start_mask)
        t = 0.0
        while True:
            active = 0
            kc = 0
            for v in range(L):
                if (mask >> v) & 1:
                    active += 1
                    kc = comp[v]
            total = 0.0
            for v in range(L):
                if (mask >> v) & 1:
                    rates[v] = 1.0
                elif active == 0 or comp[v] == kc:
                    rates[v] = nu
                else:
                    rates[v] = 0.0
                total += rates[v]
            agg = 0 if active == 0 else offsets[kc - 1] + active
            if direct:
                dt = np.inf
                fire = -1
                for v in range(L):
                    if rates[v] > 0:
                        s, e = next_exponential(s)
                        c = e / rates[v]
                        if c < dt:
                            dt = c
                            fire = v
            else:
                s, e = next_exponential(s)
                dt = e / total
                s, u = next_uniform(s)
                target = u * total
                acc = 0.0
                fire = -1
                for v in range(L):
                    if rates[v] > 0:
                        fire = v
                        acc += rates[v]
                        if target < acc:
                            break
            if t + dt >= horizon:
                occ[i, agg] += horizon - t
                break
            occ[i, agg] += dt
            t += dt
            mask ^= np.int64(1) << fire
    return occ
