"""Pure-Python kernels, used when the compiled extension is unavailable.

Both backends must return bit-identical results, so the floating-point
operations here are performed in exactly the order of ``_kernels.pyx``.
"""

from __future__ import annotations

import numpy as np


def coupling_pairs(indptr, indices, n_refs):
    """Shared-reference counts for every paper pair ``i < j`` with a nonzero count.

    ``indptr``/``indices`` are the CSR rows of the paper x reference incidence
    matrix.  Returns ``(rows, cols, counts)`` sorted by ``(row, col)``.
    """
    indptr = [int(v) for v in indptr]
    indices = [int(v) for v in indices]
    n = len(indptr) - 1
    cited_by = [[] for _ in range(n_refs)]
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            cited_by[indices[p]].append(i)
    rows, cols, counts = [], [], []
    for i in range(n):
        tally: dict[int, int] = {}
        for p in range(indptr[i], indptr[i + 1]):
            for j in cited_by[indices[p]]:
                if j > i:
                    tally[j] = tally.get(j, 0) + 1
        for j in sorted(tally):
            rows.append(i)
            cols.append(j)
            counts.append(tally[j])
    return (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64),
            np.asarray(counts, dtype=np.int64))


def louvain_move(indptr, indices, weights, degree, comm, tot, order, m2, min_gain):
    """Local-moving phase of Louvain on a symmetric CSR graph.

    ``comm`` and ``tot`` are updated in place.  Sweeps over ``order`` until a
    full sweep makes no move.  Returns ``(moves, gain_sum)`` where ``gain_sum``
    is the total modularity gained.
    """
    indptr_l = indptr.tolist()
    indices_l = indices.tolist()
    weights_l = weights.tolist()
    degree_l = degree.tolist()
    comm_l = comm.tolist()
    tot_l = tot.tolist()
    order_l = order.tolist()
    n = len(comm_l)
    neigh_w = [0.0] * n
    seen = [False] * n
    moves = 0
    gain_sum = 0.0
    improved = True
    while improved:
        improved = False
        for i in order_l:
            ci = comm_l[i]
            ki = degree_l[i]
            neigh = []
            for p in range(indptr_l[i], indptr_l[i + 1]):
                j = indices_l[p]
                if j == i:
                    continue
                c = comm_l[j]
                if not seen[c]:
                    seen[c] = True
                    neigh_w[c] = 0.0
                    neigh.append(c)
                neigh_w[c] += weights_l[p]
            tot_ci = tot_l[ci]
            tot_l[ci] = tot_ci - ki
            w_old = neigh_w[ci] if seen[ci] else 0.0
            base = w_old - tot_l[ci] * ki / m2
            best = ci
            best_dq = 0.0
            for c in neigh:
                if c == ci:
                    continue
                dq = 2.0 * ((neigh_w[c] - tot_l[c] * ki / m2) - base) / m2
                if dq > best_dq:
                    best_dq = dq
                    best = c
            for c in neigh:
                seen[c] = False
            if best != ci and best_dq > min_gain:
                comm_l[i] = best
                tot_l[best] += ki
                moves += 1
                gain_sum += best_dq
                improved = True
            else:
                tot_l[ci] = tot_ci
    comm[:] = comm_l
    tot[:] = tot_l
    return moves, gain_sum
