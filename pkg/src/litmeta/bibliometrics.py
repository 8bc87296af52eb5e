"""Descriptive bibliometric indicators of a corpus."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import Corpus, Record

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CitationRow:
    id: str
    key: str
    global_citations: int
    local_citations: int


@dataclass(frozen=True)
class CitationTable:
    rows: tuple[CitationRow, ...]

    def local(self) -> dict[str, int]:
        return {r.id: r.local_citations for r in self.rows}

    def top(self, n: int = 10, by: str = "global") -> list[CitationRow]:
        attr = "global_citations" if by == "global" else "local_citations"
        return sorted(self.rows, key=lambda r: (-getattr(r, attr), r.id))[:n]


def local_citations(corpus: Corpus) -> CitationTable:
    """Count, for every record, how many other corpus records cite its key."""
    cited = Counter()
    for r in corpus.records:
        cited.update(r.references)
    rows = []
    for r in corpus.records:
        key = r.key
        # a record never cites itself: its own key is stripped from its references
        rows.append(CitationRow(r.id, key, r.global_citations, cited.get(key, 0)))
    return CitationTable(tuple(rows))


def h_index(citation_counts: Iterable[int]) -> int:
    counts = sorted((int(c) for c in citation_counts), reverse=True)
    h = 0
    for rank, c in enumerate(counts, start=1):
        if c >= rank:
            h = rank
        else:
            break
    return h


@dataclass(frozen=True)
class CollaborationIndex:
    value: float
    multi_authored: int
    warning: str | None = None

    def __float__(self) -> float:
        return self.value


def collaboration_index(records: Corpus | Sequence[Record]) -> CollaborationIndex:
    """Mean author count over multi-authored documents (0 with a warning if none)."""
    counts = [len(r.authors) for r in records if len(r.authors) >= 2]
    if not counts:
        log.warning("collaboration index undefined: no multi-authored documents")
        return CollaborationIndex(0.0, 0, "no multi-authored documents")
    return CollaborationIndex(sum(counts) / len(counts), len(counts))


def production_by_year(records: Corpus | Sequence[Record]) -> dict[int, int]:
    counts = Counter(r.year for r in records)
    return {y: counts[y] for y in sorted(counts)}


def annual_growth_rate(yearly: dict[int, int]) -> float | None:
    """Compound growth between the first and last years with nonzero output."""
    years = [y for y, c in yearly.items() if c > 0]
    if len(years) < 2:
        return None
    first, last = min(years), max(years)
    return (yearly[last] / yearly[first]) ** (1.0 / (last - first)) - 1.0


def author_production(corpus: Corpus) -> dict[str, dict]:
    """Documents, total global citations and h-index per normalized author."""
    docs: dict[str, list[int]] = {}
    for r in corpus.records:
        for a in dict.fromkeys(r.authors):
            docs.setdefault(a, []).append(r.global_citations)
    out = {}
    for a in sorted(docs, key=lambda a: (-len(docs[a]), a)):
        cites = docs[a]
        out[a] = {"documents": len(cites), "global_citations": sum(cites), "h_index": h_index(cites)}
    return out


def bibliometric_report(corpus: Corpus, top_n: int = 10) -> dict:
    table = local_citations(corpus)
    yearly = production_by_year(corpus)
    ci = collaboration_index(corpus)
    n_docs = len(corpus)
    n_authors = [len(r.authors) for r in corpus.records]
    growth = annual_growth_rate(yearly)
    return {
        "documents": n_docs,
        "top_cited": {
            "global": [_cite_row(r) for r in table.top(top_n, "global")],
            "local": [_cite_row(r) for r in table.top(top_n, "local")],
        },
        "never_cited_locally": sum(1 for r in table.rows if r.local_citations == 0),
        "authors": author_production(corpus),
        "h_index": {
            "corpus": h_index(r.global_citations for r in corpus.records),
        },
        "collaboration": {
            "collaboration_index": ci.value,
            "multi_authored_documents": ci.multi_authored,
            "single_authored_documents": sum(1 for n in n_authors if n == 1),
            "mean_authors_per_document": (sum(n_authors) / n_docs) if n_docs else 0.0,
            "max_authors": max(n_authors, default=0),
            "warning": ci.warning,
        },
        "yearly_counts": {str(y): c for y, c in yearly.items()},
        "annual_growth_rate": growth,
        "annual_growth_rate_formula": "(count[last] / count[first]) ** (1 / (last - first)) - 1 "
                                      "over the first and last years with nonzero output",
    }


def _cite_row(r: CitationRow) -> dict:
    return {"id": r.id, "key": r.key, "global": r.global_citations, "local": r.local_citations}
