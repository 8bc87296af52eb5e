# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for reference-overlap counting and Louvain local moves.

Semantics and floating-point operation order match ``_kernels_py`` exactly.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def coupling_pairs(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices, Py_ssize_t n_refs):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t nnz = indices.shape[0]
    cdef Py_ssize_t i, j, p, q, r, t, n_touched
    cdef cnp.int64_t[::1] ref_ptr = np.zeros(n_refs + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] ref_papers = np.empty(nnz, dtype=np.int64)
    cdef cnp.int64_t[::1] fill = np.zeros(n_refs, dtype=np.int64)
    cdef cnp.int64_t[::1] count = np.zeros(max(n, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] touched = np.empty(max(n, 1), dtype=np.int64)

    for p in range(nnz):
        ref_ptr[indices[p] + 1] += 1
    for r in range(n_refs):
        ref_ptr[r + 1] += ref_ptr[r]
    # rows are visited in order, so each reference's paper list is ascending
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            r = indices[p]
            ref_papers[ref_ptr[r] + fill[r]] = i
            fill[r] += 1

    rows_out = []
    cols_out = []
    counts_out = []
    for i in range(n):
        n_touched = 0
        for p in range(indptr[i], indptr[i + 1]):
            r = indices[p]
            for q in range(ref_ptr[r], ref_ptr[r + 1]):
                j = ref_papers[q]
                if j > i:
                    if count[j] == 0:
                        touched[n_touched] = j
                        n_touched += 1
                    count[j] += 1
        if n_touched:
            block = np.sort(np.asarray(touched[:n_touched]))
            for t in range(n_touched):
                j = block[t]
                rows_out.append(i)
                cols_out.append(j)
                counts_out.append(count[j])
                count[j] = 0
    return (np.asarray(rows_out, dtype=np.int64), np.asarray(cols_out, dtype=np.int64),
            np.asarray(counts_out, dtype=np.int64))


def louvain_move(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                 const double[::1] weights, const double[::1] degree,
                 cnp.int64_t[::1] comm, double[::1] tot, const cnp.int64_t[::1] order,
                 double m2, double min_gain):
    cdef Py_ssize_t n = comm.shape[0]
    cdef Py_ssize_t n_order = order.shape[0]
    cdef Py_ssize_t idx, i, j, p, c, ci, best, t, n_neigh
    cdef double ki, w_old, base, best_dq, dq, tot_ci
    cdef double gain_sum = 0.0
    cdef long moves = 0
    cdef bint improved = True
    cdef double[::1] neigh_w = np.zeros(max(n, 1), dtype=np.float64)
    cdef cnp.uint8_t[::1] seen = np.zeros(max(n, 1), dtype=np.uint8)
    cdef cnp.int64_t[::1] neigh = np.empty(max(n, 1), dtype=np.int64)

    while improved:
        improved = False
        for idx in range(n_order):
            i = order[idx]
            ci = comm[i]
            ki = degree[i]
            n_neigh = 0
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j == i:
                    continue
                c = comm[j]
                if not seen[c]:
                    seen[c] = 1
                    neigh_w[c] = 0.0
                    neigh[n_neigh] = c
                    n_neigh += 1
                neigh_w[c] += weights[p]
            tot_ci = tot[ci]
            tot[ci] = tot_ci - ki
            w_old = neigh_w[ci] if seen[ci] else 0.0
            base = w_old - tot[ci] * ki / m2
            best = ci
            best_dq = 0.0
            for t in range(n_neigh):
                c = neigh[t]
                if c == ci:
                    continue
                dq = 2.0 * ((neigh_w[c] - tot[c] * ki / m2) - base) / m2
                if dq > best_dq:
                    best_dq = dq
                    best = c
            for t in range(n_neigh):
                seen[neigh[t]] = 0
            if best != ci and best_dq > min_gain:
                comm[i] = best
                tot[best] += ki
                moves += 1
                gain_sum += best_dq
                improved = True
            else:
                tot[ci] = tot_ci
    return moves, gain_sum
