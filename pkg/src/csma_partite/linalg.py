"""Subtraction-free elimination for killed-chain linear systems.

Killed generators of this model are extremely stiff at large ``nu``: row sums
vanish except next to the target, so partial-pivoting LU loses most of its
digits to cancellation (about 1e-5 relative error for a 4-node branch at
nu = 1e4).  Grassmann-Taksar-Heyman style elimination keeps every quantity a
sum of positive terms and stays accurate to a few ulps.
"""

import numpy as np

from .errors import SingularSystemError


def gth_solve(rates: np.ndarray, exit_rates: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``out_i h_i = b_i + sum_j q_ij h_j`` for a killed chain.

    ``rates`` are nonnegative transition rates among the transient states
    (diagonal ignored), ``exit_rates`` the rates into the absorbing set, and
    ``out_i`` their combined total.  ``rhs`` may be a vector or a matrix of
    nonnegative right-hand sides (one per column).
    """
    q = np.array(rates, dtype=float)
    np.fill_diagonal(q, 0.0)
    a = np.array(exit_rates, dtype=float)
    b = np.array(rhs, dtype=float)
    vector = b.ndim == 1
    if vector:
        b = b[:, None]
    n = q.shape[0]
    out = np.empty(n)
    alive = np.ones(n, dtype=bool)
    # eliminate states n-1, ..., 0; row k keeps its reduced rates for back substitution
    for k in range(n - 1, -1, -1):
        alive[k] = False
        out[k] = q[k, alive].sum() + a[k]
        if not out[k] > 0:
            raise SingularSystemError("target is unreachable from some transient state")
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            continue
        w = q[idx, k] / out[k]
        q[np.ix_(idx, idx)] += np.outer(w, q[k, idx])
        a[idx] += w * a[k]
        b[idx] += np.outer(w, b[k])
        q[idx, idx] = 0.0
    h = np.empty_like(b)
    for k in range(n):
        h[k] = (b[k] + q[k, :k] @ h[:k]) / out[k]
    return h[:, 0] if vector else h
