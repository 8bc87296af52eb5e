"""Time the compiled kernels against the pure-Python fallback.

Usage::

    python benchmarks/bench_kernels.py [--papers 600] [--repeat 5]

Both backends get the same synthetic coupling workload. The script reports the
best-of-``repeat`` wall time per kernel and checks that the outputs agree
exactly.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from litmeta import _kernels_py
from litmeta.corpus import Corpus, Record
from litmeta.coupling import build_incidence, coupling_graph


def workload(n_papers: int, seed: int):
    """Incidence matrix and normalized CSR graph from a blocky random corpus."""
    rng = np.random.default_rng(seed)
    n_blocks = max(2, n_papers // 40)
    block_refs = 60
    records = []
    for i in range(n_papers):
        b = int(rng.integers(n_blocks))
        core = rng.choice(block_refs, size=12, replace=False) + b * block_refs
        extra = rng.integers(n_blocks * block_refs, n_blocks * block_refs + 20 * n_papers, 8)
        refs = frozenset(f"r{j}_2000_x" for j in np.concatenate([core, extra]))
        records.append(Record(f"p{i:05d}", f"t{i}", references=refs))
    inc = build_incidence(Corpus(tuple(records)))
    graph = coupling_graph(inc)
    return inc, graph


def best_of(fn, repeat: int) -> tuple[float, object]:
    best, result = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--papers", type=int, default=600)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args(argv)

    try:
        from litmeta import _kernels as compiled
    except ImportError:
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1

    inc, graph = workload(args.papers, args.seed)
    n_refs = len(inc.reference_keys)
    indptr, indices, weights = graph.csr("normalized")
    rows = np.repeat(np.arange(graph.n_nodes), np.diff(indptr))
    degree = np.bincount(rows, weights, graph.n_nodes)
    m2 = float(degree.sum())
    order = np.arange(graph.n_nodes, dtype=np.int64)

    def coupling(mod):
        return lambda: mod.coupling_pairs(inc.indptr, inc.indices, n_refs)

    def move(mod):
        def run():
            comm = np.arange(graph.n_nodes, dtype=np.int64)
            tot = degree.copy()
            moves, gain = mod.louvain_move(indptr, indices, weights, degree, comm, tot, order,
                                           m2, 1e-9)
            return moves, gain, comm
        return run

    print(f"workload: {graph.n_nodes} papers, {n_refs} references, {graph.n_edges} edges")
    print(f"{'kernel':<16}{'cython (s)':>12}{'python (s)':>12}{'speedup':>10}  identical")
    for name, make in (("coupling_pairs", coupling), ("louvain_move", move)):
        tc, rc = best_of(make(compiled), args.repeat)
        tp, rp = best_of(make(_kernels_py), max(1, args.repeat // 2))
        same = all(np.array_equal(a, b) for a, b in zip(rc, rp))
        print(f"{name:<16}{tc:>12.4f}{tp:>12.4f}{tp / tc:>9.1f}x  {same}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
