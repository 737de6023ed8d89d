"""Hot numeric kernels, JIT-compiled with numba by default.

Set ``COREFKIT_NUMBA=0`` in the environment to select the pure-numpy
fallback path instead (handy for debugging, and used by
``benchmarks/bench_kernels.py`` to measure the JIT payoff).  Both paths
compute identical results; the test suite asserts this.
"""

from __future__ import annotations

import os

import numpy as np

NUMBA_ENABLED = os.environ.get("COREFKIT_NUMBA", "1").lower() not in ("0", "false", "no")

if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False


# ---------------------------------------------------------------------------
# Entity-membership recursion (soft clustering of spans into entities).
#
# Given, for each span x, the dense row pdense[x, k] of antecedent probability
# mass assigned to preceding span k (zero for non-candidates) and the
# discourse-new mass peps[x], membership is defined recursively:
#   Q[x, x]  = peps[x]
#   Q[x, y'] = sum_k pdense[x, k] * Q[k, y']   for y' < x
#   Q[x, y'] = 0                               for y' > x
# Rows sum to 1 exactly when each pdense row plus peps sums to 1 (induction);
# no renormalisation is applied.
# ---------------------------------------------------------------------------


def _py_entity_membership_forward(pdense, peps):
    n = peps.shape[0]
    q = np.zeros((n, n), dtype=np.float64)
    for x in range(n):
        if x:
            # Q[k, y'] is already zero above the diagonal, so the full
            # matmul equals the restricted sum over y' <= k < x.
            q[x, :x] = pdense[x, :x] @ q[:x, :x]
        q[x, x] = peps[x]
    return q


def _py_entity_membership_backward(pdense, q, dq):
    n = q.shape[0]
    dq = dq.copy()
    dpdense = np.zeros_like(pdense)
    dpeps = np.zeros(n, dtype=np.float64)
    for x in range(n - 1, -1, -1):
        dpeps[x] = dq[x, x]
        if x:
            dpdense[x, :x] = dq[x, :x] @ q[:x, :x].T
            dq[:x, :x] += np.outer(pdense[x, :x], dq[x, :x])
    return dpdense, dpeps


def _nb_entity_membership_forward(pdense, peps):
    n = peps.shape[0]
    q = np.zeros((n, n), dtype=np.float64)
    for x in range(n):
        for yp in range(x):
            acc = 0.0
            for k in range(yp, x):
                acc += pdense[x, k] * q[k, yp]
            q[x, yp] = acc
        q[x, x] = peps[x]
    return q


def _nb_entity_membership_backward(pdense, q, dq):
    n = q.shape[0]
    dq = dq.copy()
    dpdense = np.zeros_like(pdense)
    dpeps = np.zeros(n, dtype=np.float64)
    for x in range(n - 1, -1, -1):
        dpeps[x] = dq[x, x]
        for k in range(x):
            acc = 0.0
            for yp in range(x):
                acc += dq[x, yp] * q[k, yp]
            dpdense[x, k] = acc
        for k in range(x):
            pxk = pdense[x, k]
            if pxk != 0.0:
                for yp in range(x):
                    dq[k, yp] += pxk * dq[x, yp]
    return dpdense, dpeps


# ---------------------------------------------------------------------------
# Maximum-weight one-to-one assignment (rectangular, nonnegative weights).
#
# Shortest-augmenting-path variant with row/column potentials, O(n^3).
# Used for the entity-alignment metric; weights there are overlap scores
# in [0, 1].  Returns parallel index arrays (rows, cols) of the matching
# restricted to real (unpadded) cells.
# ---------------------------------------------------------------------------


def _assignment_core(cost, n):
    # cost: square n x n, minimisation.  1-based helper arrays, e-maxx style.
    inf = np.inf
    u = np.zeros(n + 1, dtype=np.float64)
    v = np.zeros(n + 1, dtype=np.float64)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j] = row matched to column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf, dtype=np.float64)
        used = np.zeros(n + 1, dtype=np.bool_)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    return p


def _py_assignment_core(cost, n):
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    cols = np.arange(1, n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = cols[~used[1:]]
            cur = cost[i0 - 1, free - 1] - u[i0] - v[free]
            better = cur < minv[free]
            minv[free] = np.where(better, cur, minv[free])
            way[free[better]] = j0
            k = np.argmin(minv[free])
            delta = minv[free][k]
            j1 = free[k]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    return p


def _max_assignment(weights, core):
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2:
        raise ValueError("weight matrix must be 2-D")
    if weights.size and weights.min() < 0:
        raise ValueError("assignment weights must be nonnegative")
    nr, nc = weights.shape
    if nr == 0 or nc == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    n = max(nr, nc)
    cost = np.zeros((n, n), dtype=np.float64)
    cost[:nr, :nc] = -weights  # maximise by minimising the negation
    p = core(cost, n)
    rows, cols = [], []
    for j in range(1, n + 1):
        i = p[j]
        if 1 <= i <= nr and j <= nc:
            rows.append(i - 1)
            cols.append(j - 1)
    order = np.argsort(rows)
    return np.asarray(rows, dtype=np.int64)[order], np.asarray(cols, dtype=np.int64)[order]


# ---------------------------------------------------------------------------
# Crossing-aware span pruning acceptance.
#
# Visits candidate spans in score order and accepts each unless it partially
# overlaps (crosses without nesting) an already-accepted span, until `limit`
# spans are accepted.
# ---------------------------------------------------------------------------


def _nb_prune_accept(starts, ends, order, limit):
    n = order.shape[0]
    accepted = np.zeros(n, dtype=np.bool_)
    acc_start = np.empty(limit, dtype=np.int64)
    acc_end = np.empty(limit, dtype=np.int64)
    n_acc = 0
    for oi in range(n):
        if n_acc >= limit:
            break
        idx = order[oi]
        s, e = starts[idx], ends[idx]
        ok = True
        for a in range(n_acc):
            s2, e2 = acc_start[a], acc_end[a]
            if (s < s2 <= e < e2) or (s2 < s <= e2 < e):
                ok = False
                break
        if ok:
            accepted[idx] = True
            acc_start[n_acc] = s
            acc_end[n_acc] = e
            n_acc += 1
    return accepted


def _py_prune_accept(starts, ends, order, limit):
    accepted = np.zeros(order.shape[0], dtype=bool)
    acc_s = np.empty(limit, dtype=np.int64)
    acc_e = np.empty(limit, dtype=np.int64)
    n_acc = 0
    for idx in order:
        if n_acc >= limit:
            break
        s, e = starts[idx], ends[idx]
        a_s, a_e = acc_s[:n_acc], acc_e[:n_acc]
        crosses = ((s < a_s) & (a_s <= e) & (e < a_e)) | ((a_s < s) & (s <= a_e) & (a_e < e))
        if not crosses.any():
            accepted[idx] = True
            acc_s[n_acc] = s
            acc_e[n_acc] = e
            n_acc += 1
    return accepted


if NUMBA_ENABLED:
    _jit = njit(cache=True)
    entity_membership_forward = _jit(_nb_entity_membership_forward)
    entity_membership_backward = _jit(_nb_entity_membership_backward)
    _jit_assignment_core = _jit(_assignment_core)
    prune_accept = _jit(_nb_prune_accept)

    def max_assignment(weights):
        return _max_assignment(weights, _jit_assignment_core)

else:
    entity_membership_forward = _py_entity_membership_forward
    entity_membership_backward = _py_entity_membership_backward
    prune_accept = _py_prune_accept

    def max_assignment(weights):
        return _max_assignment(weights, _py_assignment_core)


def py_max_assignment(weights):
    """Pure-numpy assignment path, kept importable for benchmarks/tests."""
    return _max_assignment(weights, _py_assignment_core)
