"""The compiled and pure-Python kernels must agree bit for bit."""

import numpy as np
import pytest

from litmeta import _kernels_py, kernels
from litmeta.community import louvain
from litmeta.corpus import Corpus, Record
from litmeta.coupling import build_incidence, coupling_graph

compiled = pytest.importorskip("litmeta._kernels")


def _corpus(rng, n, refs):
    return Corpus(tuple(
        Record(f"p{i:03d}", f"t{i}", references=frozenset(
            f"r_{j}_x" for j in rng.choice(refs, size=int(rng.integers(0, 12)), replace=False)))
        for i in range(n)))


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")


def test_coupling_pairs_identical():
    rng = np.random.default_rng(9)
    for _ in range(20):
        inc = build_incidence(_corpus(rng, int(rng.integers(1, 60)), 80))
        a = compiled.coupling_pairs(inc.indptr, inc.indices, len(inc.reference_keys))
        b = _kernels_py.coupling_pairs(inc.indptr, inc.indices, len(inc.reference_keys))
        for x, y in zip(a, b):
            assert x.dtype == y.dtype and np.array_equal(x, y)


def test_louvain_move_identical():
    rng = np.random.default_rng(10)
    for _ in range(20):
        g = coupling_graph(build_incidence(_corpus(rng, 60, 50)))
        if g.n_edges == 0:
            continue
        indptr, indices, weights = g.csr("normalized")
        rows = np.repeat(np.arange(g.n_nodes), np.diff(indptr))
        degree = np.bincount(rows, weights, g.n_nodes)
        m2 = float(degree.sum())
        order = rng.permutation(g.n_nodes).astype(np.int64)
        results = []
        for impl in (compiled.louvain_move, _kernels_py.louvain_move):
            comm = np.arange(g.n_nodes, dtype=np.int64)
            tot = degree.copy()
            moves, gain = impl(indptr, indices, weights, degree, comm, tot, order, m2, 1e-9)
            results.append((moves, gain, comm.copy(), tot.copy()))
        (m1, g1, c1, t1), (m2_, g2, c2, t2) = results
        assert m1 == m2_ and g1 == g2
        assert np.array_equal(c1, c2) and np.array_equal(t1, t2)


def test_full_louvain_identical(monkeypatch):
    rng = np.random.default_rng(11)
    g = coupling_graph(build_incidence(_corpus(rng, 120, 90)))
    fast = louvain(g)
    monkeypatch.setattr(kernels, "louvain_move", _kernels_py.louvain_move)
    slow = louvain(g)
    assert fast == slow
