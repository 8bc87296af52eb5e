"""Independent reference implementations used as test oracles."""

from __future__ import annotations

import itertools
from fractions import Fraction

import mpmath
import numpy as np

mpmath.mp.dps = 50


def set_partitions(n: int):
    """Every partition of range(n) as a label list (restricted growth strings)."""
    labels = [0] * n

    def rec(i, k):
        if i == n:
            yield list(labels)
            return
        for c in range(k + 1):
            labels[i] = c
            yield from rec(i + 1, max(k, c + 1))

    if n == 0:
        yield []
        return
    yield from rec(1, 1)


def dense_modularity(w: np.ndarray, labels) -> float:
    """Newman-Girvan modularity from a dense symmetric weight matrix, zero diagonal."""
    m2 = w.sum()
    if m2 == 0:
        return 0.0
    k = w.sum(axis=1)
    q = 0.0
    n = w.shape[0]
    for i in range(n):
        for j in range(n):
            if labels[i] == labels[j]:
                q += w[i, j] - k[i] * k[j] / m2
    return q / m2


def best_modularity(w: np.ndarray) -> float:
    return max(dense_modularity(w, p) for p in set_partitions(w.shape[0]))


def brute_coupling(refs: list[set[str]]):
    """Shared-reference counts for every pair with a nonzero intersection."""
    out = {}
    for i, j in itertools.combinations(range(len(refs)), 2):
        s = len(refs[i] & refs[j])
        if s:
            out[(i, j)] = s
    return out


def mp_pcc(t, df):
    t, df = mpmath.mpf(t), mpmath.mpf(df)
    root = mpmath.sqrt(t * t + df)
    pcc = t / root
    return pcc, mpmath.sqrt((1 - pcc * pcc) / df)


def mp_pool(pcc, se, model):
    x = [mpmath.mpf(v) for v in pcc]
    v = [mpmath.mpf(s) ** 2 for s in se]
    w = [1 / vi for vi in v]
    sw = mpmath.fsum(w)
    mean_f = mpmath.fsum(wi * xi for wi, xi in zip(w, x)) / sw
    q = mpmath.fsum(wi * (xi - mean_f) ** 2 for wi, xi in zip(w, x))
    k = len(x)
    c = sw - mpmath.fsum(wi * wi for wi in w) / sw
    tau2 = max(mpmath.mpf(0), (q - (k - 1)) / c) if c > 0 else mpmath.mpf(0)
    i2 = max(mpmath.mpf(0), (q - (k - 1)) / q) * 100 if q > 0 else mpmath.mpf(0)
    if model == "FEM":
        ws = w
        t2 = mpmath.mpf(0)
    else:
        ws = [1 / (vi + tau2) for vi in v]
        t2 = tau2
    mean = mpmath.fsum(wi * xi for wi, xi in zip(ws, x)) / mpmath.fsum(ws)
    half = mpmath.mpf("1.959964") * mpmath.sqrt(1 / mpmath.fsum(ws))
    return {"mean": mean, "fem_mean": mean_f, "ci_low": mean - half, "ci_high": mean + half, "Q": q, "I2": i2,
            "tau2": t2, "Q_pvalue": mpmath.gammainc(mpmath.mpf(k - 1) / 2, q / 2, mpmath.inf,
                                                      regularized=True)}


def dense_wls(y, x, w, clusters=None):
    """Normal-equation WLS with explicit inverse and, optionally, a dense cluster sandwich."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    wm = np.diag(np.asarray(w, dtype=float))
    xtwx_inv = np.linalg.inv(x.T @ wm @ x)
    beta = xtwx_inv @ x.T @ wm @ y
    e = y - x @ beta
    n, k = x.shape
    if clusters is None:
        sigma2 = (e @ wm @ e) / (n - k)
        return beta, sigma2 * xtwx_inv
    meat = np.zeros((k, k))
    groups = sorted(set(clusters))
    for g in groups:
        idx = [i for i, c in enumerate(clusters) if c == g]
        xg = x[idx]
        wg = wm[np.ix_(idx, idx)]
        eg = e[idx]
        u = xg.T @ wg @ eg
        meat += np.outer(u, u)
    g = len(groups)
    factor = g / (g - 1) * (n - 1) / (n - k)
    return beta, factor * xtwx_inv @ meat @ xtwx_inv


def collaboration_oracle(author_lists) -> Fraction:
    multi = [len(a) for a in author_lists if len(a) >= 2]
    return Fraction(sum(multi), len(multi)) if multi else Fraction(0)


def h_index_oracle(cites) -> int:
    cites = list(cites)
    return max((h for h in range(len(cites) + 1) if sum(1 for c in cites if c >= h) >= h), default=0)


# -- small-graph fixture library -----------------------------------------------

def _sym(n, edges):
    w = np.zeros((n, n))
    for i, j, v in edges:
        w[i, j] = w[j, i] = v
    return w


def clique_edges(nodes, weight=1.0):
    return [(i, j, weight) for i, j in itertools.combinations(nodes, 2)]


def small_fixture_graphs():
    """Named structured graphs on at most 8 nodes, defined independently of any run."""
    out = {}
    for n in range(2, 9):
        out[f"complete_{n}"] = _sym(n, clique_edges(range(n)))
        if n >= 3:
            out[f"path_{n}"] = _sym(n, [(i, i + 1, 1.0) for i in range(n - 1)])
            out[f"cycle_{n}"] = _sym(n, [(i, (i + 1) % n, 1.0) for i in range(n)])
            out[f"star_{n}"] = _sym(n, [(0, i, 1.0) for i in range(1, n)])
        if n >= 4:
            out[f"wheel_{n}"] = _sym(n, [(0, i, 1.0) for i in range(1, n)]
                                     + [(i, i % (n - 1) + 1, 1.0) for i in range(1, n)])
    for a in range(2, 5):
        for b in range(2, 5):
            out[f"bipartite_{a}_{b}"] = _sym(a + b, [(i, a + j, 1.0) for i in range(a) for j in range(b)])
    for a, b in ((3, 3), (3, 4), (4, 4), (3, 5), (2, 3), (2, 6)):
        for bridge in (0.5, 1.0, 2.0):
            out[f"barbell_{a}_{b}_w{bridge}"] = _sym(
                a + b, clique_edges(range(a)) + clique_edges(range(a, a + b)) + [(a - 1, a, bridge)])
    # four blocks of two joined in a ring, and two weighted triangles sharing light edges
    out["ring_of_pairs"] = _sym(8, [(2 * b, 2 * b + 1, 3.0) for b in range(4)]
                                + [(2 * b + 1, (2 * b + 2) % 8, 1.0) for b in range(4)])
    out["weighted_triangles"] = _sym(6, clique_edges(range(3), 4.0) + clique_edges(range(3, 6), 4.0)
                                     + [(0, 3, 1.0), (1, 4, 1.0), (2, 5, 1.0)])
    out["weighted_squares"] = _sym(8, clique_edges(range(4), 2.0) + clique_edges(range(4, 8), 2.0)
                                   + [(0, 4, 1.0), (3, 7, 0.5)])
    return out
