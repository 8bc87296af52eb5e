"""Paper x reference incidence matrix and the bibliographic-coupling network."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from . import kernels
from ._io import ArtifactSchemaError, csv_text, fmt_real, read_csv
from .corpus import Corpus

GRAPH_TSV_HEADER = ("source", "target", "raw_weight", "norm_weight")


@dataclass(frozen=True)
class IncidenceMatrix:
    """Binary incidence stored as CSR rows, one row per paper in ascending id order."""

    paper_ids: tuple[str, ...]
    reference_keys: tuple[str, ...]
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.paper_ids), len(self.reference_keys)

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])

    def row(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def row_sums(self) -> np.ndarray:
        return np.diff(self.indptr)

    def to_dense(self) -> np.ndarray:
        a = np.zeros(self.shape, dtype=np.int8)
        for i in range(self.shape[0]):
            a[i, self.row(i)] = 1
        return a


@dataclass(frozen=True)
class CouplingGraph:
    """Undirected coupling network.

    Edges are stored once with ``i < j`` (node positions), sorted.  The main
    diagonal is kept apart as ``self_counts``.
    """

    node_ids: tuple[str, ...]
    self_counts: np.ndarray
    edge_i: np.ndarray
    edge_j: np.ndarray
    raw: np.ndarray
    norm: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return int(self.raw.shape[0])

    def weights(self, kind: str = "normalized") -> np.ndarray:
        if kind == "raw":
            return self.raw.astype(np.float64)
        if kind == "normalized":
            return self.norm
        raise ValueError(f"weight kind must be 'raw' or 'normalized', got {kind!r}")

    @property
    def raw_weights(self) -> dict[tuple[str, str], int]:
        ids = self.node_ids
        return {(ids[i], ids[j]): int(w) for i, j, w in zip(self.edge_i, self.edge_j, self.raw)}

    @property
    def norm_weights(self) -> dict[tuple[str, str], float]:
        ids = self.node_ids
        return {(ids[i], ids[j]): float(w) for i, j, w in zip(self.edge_i, self.edge_j, self.norm)}

    def isolated(self) -> list[str]:
        touched = np.zeros(self.n_nodes, dtype=bool)
        touched[self.edge_i] = True
        touched[self.edge_j] = True
        return [nid for nid, t in zip(self.node_ids, touched) if not t]

    def csr(self, kind: str = "normalized"):
        """Symmetric CSR adjacency ``(indptr, indices, weights)``, neighbours ascending."""
        n = self.n_nodes
        w = self.weights(kind)
        src = np.concatenate([self.edge_i, self.edge_j]).astype(np.int64)
        dst = np.concatenate([self.edge_j, self.edge_i]).astype(np.int64)
        ww = np.concatenate([w, w])
        order = np.lexsort((dst, src))
        src, dst, ww = src[order], dst[order], ww[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        return indptr, dst, np.ascontiguousarray(ww, dtype=np.float64)


def build_incidence(corpus: Corpus) -> IncidenceMatrix:
    if len(corpus) == 0:
        raise ValueError("cannot build an incidence matrix for an empty corpus")
    keys = tuple(sorted(corpus.reference_universe))
    col = {k: j for j, k in enumerate(keys)}
    indptr = [0]
    indices: list[int] = []
    records = sorted(corpus.records, key=lambda r: r.id)
    for r in records:
        indices.extend(sorted(col[k] for k in r.references))
        indptr.append(len(indices))
    return IncidenceMatrix(tuple(r.id for r in records), keys,
                           np.asarray(indptr, dtype=np.int64),
                           np.asarray(indices, dtype=np.int64))


def coupling_graph(incidence: IncidenceMatrix) -> CouplingGraph:
    """Shared-reference counts between papers, plus association-strength weights."""
    rows, cols, counts = kernels.coupling_pairs(
        np.ascontiguousarray(incidence.indptr, dtype=np.int64),
        np.ascontiguousarray(incidence.indices, dtype=np.int64),
        len(incidence.reference_keys))
    self_counts = incidence.row_sums().astype(np.int64)
    norm = association_strength(counts, self_counts[rows], self_counts[cols])
    return CouplingGraph(incidence.paper_ids, self_counts, rows, cols, counts, norm)


def association_strength(shared, refs_i, refs_j):
    """Shared references over the product of both reference-list lengths."""
    shared = np.asarray(shared, dtype=np.float64)
    denom = np.asarray(refs_i, dtype=np.float64) * np.asarray(refs_j, dtype=np.float64)
    return shared / denom


def graph_stats(graph: CouplingGraph, bucket_width: float = 1.0) -> dict:
    """Node/edge counts, isolated nodes, maximum shared references and a weight histogram."""
    if bucket_width <= 0:
        raise ValueError("bucket_width must be positive")
    hist: dict[str, int] = {}
    if graph.n_edges:
        buckets = np.floor(graph.raw / bucket_width).astype(np.int64)
        values, counts = np.unique(buckets, return_counts=True)
        for b, c in zip(values.tolist(), counts.tolist()):
            lo = b * bucket_width
            hist[f"[{fmt_real(lo)},{fmt_real(lo + bucket_width)})"] = int(c)
    return {
        "nodes": graph.n_nodes,
        "edges": graph.n_edges,
        "isolated_nodes": len(graph.isolated()),
        "max_raw_weight": int(graph.raw.max()) if graph.n_edges else 0,
        "max_norm_weight": float(graph.norm.max()) if graph.n_edges else 0.0,
        "weight_histogram": hist,
    }


def empty_graph(node_ids: Sequence[str] = ()) -> CouplingGraph:
    z = np.zeros(0, dtype=np.int64)
    return CouplingGraph(tuple(node_ids), np.zeros(len(node_ids), dtype=np.int64),
                         z, z.copy(), z.copy(), np.zeros(0, dtype=np.float64))


# -- export / import -----------------------------------------------------------

def graph_to_tsv(graph: CouplingGraph) -> str:
    ids = graph.node_ids
    rows = ((ids[i], ids[j], int(r), float(w))
            for i, j, r, w in zip(graph.edge_i, graph.edge_j, graph.raw, graph.norm))
    return csv_text(GRAPH_TSV_HEADER, rows, delimiter="\t")


def graph_to_graphml(graph: CouplingGraph) -> str:
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<graphml xmlns="http://graphml.graphdrawing.org/xmlns">',
        '  <key id="refs" for="node" attr.name="reference_count" attr.type="int"/>',
        '  <key id="raw" for="edge" attr.name="raw_weight" attr.type="int"/>',
        '  <key id="norm" for="edge" attr.name="norm_weight" attr.type="double"/>',
        '  <graph id="coupling" edgedefault="undirected">',
    ]
    for nid, refs in zip(graph.node_ids, graph.self_counts):
        lines.append(f'    <node id={quoteattr(nid)}><data key="refs">{int(refs)}</data></node>')
    ids = graph.node_ids
    for i, j, r, w in zip(graph.edge_i, graph.edge_j, graph.raw, graph.norm):
        lines.append(
            f'    <edge source={quoteattr(ids[i])} target={quoteattr(ids[j])}>'
            f'<data key="raw">{int(r)}</data><data key="norm">{escape(fmt_real(w))}</data></edge>')
    lines += ["  </graph>", "</graphml>"]
    return "\n".join(lines) + "\n"


def read_graph_tsv(path: Path, corpus: Corpus) -> CouplingGraph:
    """Rebuild a coupling graph from its TSV edge list; nodes come from ``corpus``."""
    expected = "tab-separated " + ",".join(GRAPH_TSV_HEADER)
    _, rows = read_csv(path, GRAPH_TSV_HEADER, delimiter="\t")
    records = sorted(corpus.records, key=lambda r: r.id)
    index = {r.id: n for n, r in enumerate(records)}
    self_counts = np.asarray([len(r.references) for r in records], dtype=np.int64)
    ei, ej, raw, norm = [], [], [], []
    for lineno, row in rows:
        src, dst = row[0], row[1]
        if src not in index or dst not in index:
            raise ArtifactSchemaError(path, lineno, expected, f"unknown node {src if src not in index else dst!r}")
        i, j = index[src], index[dst]
        if i >= j:
            raise ArtifactSchemaError(path, lineno, expected, "edges must satisfy source < target")
        try:
            r, w = int(row[2]), float(row[3])
        except ValueError:
            raise ArtifactSchemaError(path, lineno, expected, "non-numeric weight") from None
        ei.append(i)
        ej.append(j)
        raw.append(r)
        norm.append(w)
    order = np.lexsort((np.asarray(ej, dtype=np.int64), np.asarray(ei, dtype=np.int64)))
    return CouplingGraph(tuple(r.id for r in records), self_counts,
                         np.asarray(ei, dtype=np.int64)[order], np.asarray(ej, dtype=np.int64)[order],
                         np.asarray(raw, dtype=np.int64)[order], np.asarray(norm, dtype=np.float64)[order])
