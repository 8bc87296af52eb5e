"""Louvain community detection on the coupling network and per-cluster profiles."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .bibliometrics import collaboration_index
from .corpus import DOC_TYPES, ENV_FACTORS, LEVELS, MIGRATION, UNITS, Corpus
from .coupling import CouplingGraph


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class Partition:
    assignment: Mapping[str, int]
    modularity: float = 0.0
    passes: int = 0
    pass_scores: tuple[float, ...] = ()
    isolated: tuple[str, ...] = ()

    @property
    def n_communities(self) -> int:
        return len(set(self.assignment.values()))

    def members(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for nid in sorted(self.assignment):
            out.setdefault(self.assignment[nid], []).append(nid)
        return dict(sorted(out.items()))


def dense_labels(assignment: Mapping[str, object]) -> dict[str, int]:
    """Relabel communities 0..k-1 in order of their smallest member id."""
    labels: dict[object, int] = {}
    out = {}
    for nid in sorted(assignment):
        c = assignment[nid]
        if c not in labels:
            labels[c] = len(labels)
        out[nid] = labels[c]
    return out


def modularity(graph: CouplingGraph, partition: Partition | Mapping[str, int],
               weight_kind: str = "normalized") -> float:
    """Weighted Newman-Girvan modularity of ``partition`` on ``graph``."""
    assignment = partition.assignment if isinstance(partition, Partition) else partition
    for nid in graph.node_ids:
        if nid not in assignment:
            raise PartitionError(f"node {nid!r} missing from partition")
    if graph.n_edges == 0:
        return 0.0
    w = graph.weights(weight_kind)
    labels = np.asarray([assignment[nid] for nid in graph.node_ids])
    _, comm = np.unique(labels, return_inverse=True)
    degree = np.bincount(graph.edge_i, w, graph.n_nodes) + np.bincount(graph.edge_j, w, graph.n_nodes)
    m2 = degree.sum()
    same = comm[graph.edge_i] == comm[graph.edge_j]
    internal = np.bincount(comm[graph.edge_i][same], 2.0 * w[same], comm.max() + 1)
    tot = np.bincount(comm, degree, comm.max() + 1)
    return float(np.sum(internal / m2 - (tot / m2) ** 2))


def _aggregate(indptr, indices, weights, comm, n_comm):
    rows = np.repeat(np.arange(indptr.shape[0] - 1, dtype=np.int64), np.diff(indptr))
    keys = comm[rows] * n_comm + comm[indices]
    uniq, inverse = np.unique(keys, return_inverse=True)
    sums = np.bincount(inverse, weights, uniq.shape[0])
    src = uniq // n_comm
    new_indptr = np.zeros(n_comm + 1, dtype=np.int64)
    np.add.at(new_indptr, src + 1, 1)
    np.cumsum(new_indptr, out=new_indptr)
    return new_indptr, np.ascontiguousarray(uniq % n_comm), np.ascontiguousarray(sums)


def _level_quality(indptr, indices, weights, degree, m2):
    rows = np.repeat(np.arange(indptr.shape[0] - 1, dtype=np.int64), np.diff(indptr))
    loops = rows == indices
    internal = np.bincount(rows[loops], weights[loops], degree.shape[0])
    return float(np.sum(internal / m2 - (degree / m2) ** 2))


def louvain(graph: CouplingGraph, weight_kind: str = "normalized", min_gain: float = 1e-9,
            order: str = "ascending", seed: int | None = None) -> Partition:
    """Two-phase Louvain: local moves, then aggregation, until a pass moves nothing.

    Nodes are visited in ascending id order unless ``order="shuffle"``, which
    draws a seeded permutation per level.
    """
    if not min_gain > 0:
        raise ValueError("min_gain must be positive")
    if order not in ("ascending", "shuffle"):
        raise ValueError("order must be 'ascending' or 'shuffle'")
    n = graph.n_nodes
    isolated = tuple(graph.isolated())
    if n == 0:
        return Partition({}, 0.0, 0)
    membership = np.arange(n, dtype=np.int64)
    if graph.n_edges == 0:
        return Partition(dense_labels(dict(zip(graph.node_ids, membership.tolist()))),
                         0.0, 0, (), isolated)

    rng = np.random.default_rng(seed) if order == "shuffle" else None
    indptr, indices, weights = graph.csr(weight_kind)
    scores: list[float] = []
    passes = 0
    while True:
        n_cur = indptr.shape[0] - 1
        rows = np.repeat(np.arange(n_cur, dtype=np.int64), np.diff(indptr))
        degree = np.bincount(rows, weights, n_cur)
        m2 = float(degree.sum())
        comm = np.arange(n_cur, dtype=np.int64)
        tot = degree.copy()
        visit = rng.permutation(n_cur).astype(np.int64) if rng is not None else comm.copy()
        moves, _ = kernels.louvain_move(indptr, indices, weights, degree, comm, tot,
                                        visit, m2, float(min_gain))
        passes += 1
        if moves == 0:
            if not scores:
                scores.append(_level_quality(indptr, indices, weights, degree, m2))
            break
        # dense relabel by first appearance, which preserves smallest-member order
        _, first = np.unique(comm, return_index=True)
        remap = np.empty(comm.max() + 1, dtype=np.int64)
        remap[comm[np.sort(first)]] = np.arange(first.shape[0], dtype=np.int64)
        comm = remap[comm]
        n_comm = int(first.shape[0])
        membership = comm[membership]
        indptr, indices, weights = _aggregate(indptr, indices, weights, comm, n_comm)
        agg_rows = np.repeat(np.arange(n_comm, dtype=np.int64), np.diff(indptr))
        scores.append(_level_quality(indptr, indices, weights,
                                     np.bincount(agg_rows, weights, n_comm), m2))

    assignment = dense_labels(dict(zip(graph.node_ids, membership.tolist())))
    q = modularity(graph, assignment, weight_kind)
    return Partition(assignment, q, passes, tuple(scores), isolated)


# -- profiles ------------------------------------------------------------------

@dataclass(frozen=True)
class ClusterProfile:
    label: int
    size: int
    doc_type: dict[str, int]
    level: dict[str, int]
    unit: dict[str, int]
    migration: dict[str, int]
    env_factor: dict[str, int]
    published: int
    mean_citations: float | None
    collaboration_index: float
    time_span: tuple[int, int]
    included_in_ma: int | None = None
    isolated: bool = False
    members: tuple[str, ...] = field(default=(), repr=False)

    @property
    def name(self) -> str:
        return f"Cluster {self.label + 1}"


def _tabulate(values, categories):
    counts = Counter(values)
    return {c: counts.get(c, 0) for c in categories}


def profile_clusters(corpus: Corpus, partition: Partition,
                     ma_study_ids: set[str] | None = None) -> list[ClusterProfile]:
    """Tabulate composition, citations and collaboration for every community.

    Isolated nodes form singleton communities flagged ``isolated``; their
    citation mean is left undefined so they never enter cluster averages.
    """
    by_id = corpus.by_id()
    missing = [nid for nid in partition.assignment if nid not in by_id]
    if missing:
        raise PartitionError(f"partition nodes not in corpus: {sorted(missing)}")
    isolated = set(partition.isolated)
    profiles = []
    for label, ids in partition.members().items():
        recs = [by_id[i] for i in ids]
        is_isolated = len(ids) == 1 and ids[0] in isolated
        cites = [r.global_citations for r in recs]
        profiles.append(ClusterProfile(
            label=label,
            size=len(recs),
            doc_type=_tabulate((r.doc_type for r in recs), DOC_TYPES),
            level=_tabulate((r.level for r in recs), LEVELS),
            unit=_tabulate((r.unit for r in recs), UNITS),
            migration=_tabulate((r.migration for r in recs), MIGRATION),
            env_factor=_tabulate((r.env_factor for r in recs), ENV_FACTORS),
            published=sum(1 for r in recs if r.published),
            mean_citations=None if is_isolated else sum(cites) / len(cites),
            collaboration_index=collaboration_index(recs).value,
            time_span=(min(r.year for r in recs), max(r.year for r in recs)),
            included_in_ma=(sum(1 for r in recs if r.id in ma_study_ids)
                            if ma_study_ids is not None else None),
            isolated=is_isolated,
            members=tuple(ids),
        ))
    return profiles


_TABLE_GROUPS = (
    ("Type of paper", "doc_type", DOC_TYPES),
    ("Level of analysis", "level", LEVELS),
    ("Unit of analysis", "unit", UNITS),
    ("Migration", "migration", MIGRATION),
    ("Environmental factors", "env_factor", ENV_FACTORS),
)


def profiles_report(profiles: Sequence[ClusterProfile], partition: Partition) -> dict:
    """Cluster comparison table laid out row by row, one column per cluster."""
    clusters = [p for p in profiles if not p.isolated]
    rows = [
        {"group": None, "row": "Size", "values": [p.size for p in clusters]},
        {"group": None, "row": "Included in MA",
         "values": [p.included_in_ma for p in clusters]},
        {"group": None, "row": "Published", "values": [p.published for p in clusters]},
        {"group": None, "row": "Time-span",
         "values": [f"{p.time_span[0]}-{p.time_span[1]}" for p in clusters]},
        {"group": None, "row": "Average citations per document",
         "values": [p.mean_citations for p in clusters]},
        {"group": None, "row": "Collaboration index",
         "values": [p.collaboration_index for p in clusters]},
    ]
    for title, attr, cats in _TABLE_GROUPS:
        for c in cats:
            rows.append({"group": title, "row": c,
                         "values": [getattr(p, attr)[c] for p in clusters]})
    return {
        "columns": [p.name for p in clusters],
        "modularity": partition.modularity,
        "passes": partition.passes,
        "rows": rows,
        "isolated_nodes": [p.members[0] for p in profiles if p.isolated],
        "members": {p.name: list(p.members) for p in clusters},
        "note": "isolated papers are singleton communities excluded from cluster columns "
                "and citation averages",
    }


def partition_to_csv(partition: Partition) -> str:
    from ._io import csv_text

    return csv_text(("paper_id", "cluster"),
                    ((nid, partition.assignment[nid]) for nid in sorted(partition.assignment)))
