"""Bibliographic record ingestion, deduplication and the screening ledger."""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Iterator, Sequence

from ._io import csv_text, dumps_json

log = logging.getLogger(__name__)

DOC_TYPES = ("quantitative", "qualitative", "review", "theoretical", "policy")
SOURCES = ("scopus_export", "wos_export", "manual", "prior_meta")
NOT_APPLICABLE = "not_applicable"

LEVELS = ("macro", "micro", NOT_APPLICABLE)
UNITS = ("country", "household", "individual", "territorial", NOT_APPLICABLE)
MIGRATION = ("both", "cross_country", "internal", NOT_APPLICABLE)
ENV_FACTORS = ("both", "slow_onset", "fast_onset", NOT_APPLICABLE)

LEDGER_HEADER = ("stage", "entered", "excluded", "reason")


class CorpusError(ValueError):
    pass


class BibParseError(CorpusError):
    def __init__(self, message: str, offset: int, entry_index: int):
        self.offset = offset
        self.entry_index = entry_index
        super().__init__(f"{message} (entry {entry_index}, byte offset {offset})")


class DuplicateKeyError(CorpusError):
    def __init__(self, key: str, offsets: Sequence[int]):
        self.key = key
        self.offsets = tuple(offsets)
        where = ", ".join(f"byte offset {o}" for o in offsets)
        super().__init__(f"duplicate entry key {key!r} at {where}")


# -- normalization -------------------------------------------------------------

def _ascii_fold(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def collapse(text: str) -> str:
    """Lowercase and collapse runs of whitespace."""
    return " ".join(text.lower().split())


def normalize_author(name: str) -> str:
    """Normalize an author name to ``"surname, given"`` in lowercase."""
    name = collapse(name.replace("{", "").replace("}", ""))
    if not name:
        return ""
    if "," in name:
        surname, _, given = name.partition(",")
        surname, given = surname.strip(), given.strip()
    else:
        parts = name.split(" ")
        surname, given = parts[-1], " ".join(parts[:-1])
    return f"{surname}, {given}" if given else surname


def _key_token(text: str) -> str:
    return re.sub(r"[^0-9a-z]", "", _ascii_fold(text).lower())


def normalize_reference_key(raw: str) -> str:
    """Normalize a reference key written as ``surname_year_word``."""
    parts = [_key_token(p) for p in raw.strip().split("_")]
    return "_".join(parts)


def reference_key(first_author: str, year: int, title: str) -> str:
    surname = normalize_author(first_author).split(",")[0] if first_author else "anon"
    words = [w for w in (_key_token(t) for t in collapse(title).split(" ")) if w]
    first_word = words[0] if words else "untitled"
    return f"{_key_token(surname) or 'anon'}_{int(year)}_{first_word}"


# -- records -------------------------------------------------------------------

@dataclass(frozen=True)
class Record:
    id: str
    title: str
    authors: tuple[str, ...] = ()
    year: int = 2000
    venue: str = ""
    doc_type: str = "quantitative"
    published: bool = True
    global_citations: int = 0
    impact_factor: float = 0.0
    references: frozenset[str] = frozenset()
    keywords: frozenset[str] = frozenset()
    source: str = "manual"
    # profiling attributes tabulated per cluster
    level: str = NOT_APPLICABLE
    unit: str = NOT_APPLICABLE
    migration: str = NOT_APPLICABLE
    env_factor: str = NOT_APPLICABLE

    def __post_init__(self):
        if not self.id:
            raise CorpusError("record id must be non-empty")
        if not 1900 <= self.year <= 2100:
            raise CorpusError(f"record {self.id}: year {self.year} outside [1900, 2100]")
        if self.global_citations < 0:
            raise CorpusError(f"record {self.id}: negative global_citations")
        if self.impact_factor < 0:
            raise CorpusError(f"record {self.id}: negative impact_factor")
        if self.doc_type not in DOC_TYPES:
            raise CorpusError(f"record {self.id}: unknown doc_type {self.doc_type!r}")
        if self.source not in SOURCES:
            raise CorpusError(f"record {self.id}: unknown source {self.source!r}")
        for name, allowed in (("level", LEVELS), ("unit", UNITS),
                              ("migration", MIGRATION), ("env_factor", ENV_FACTORS)):
            if getattr(self, name) not in allowed:
                raise CorpusError(f"record {self.id}: unknown {name} {getattr(self, name)!r}")
        object.__setattr__(self, "authors", tuple(self.authors))
        object.__setattr__(self, "keywords", frozenset(self.keywords))
        refs = frozenset(self.references) - {self.id, self.key}
        object.__setattr__(self, "references", refs)

    @property
    def key(self) -> str:
        """Normalized reference key under which other papers cite this record."""
        first = self.authors[0] if self.authors else ""
        return reference_key(first, self.year, self.title)

    @property
    def dedupe_key(self) -> tuple[str, int]:
        return collapse(self.title), self.year

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "authors": list(self.authors),
            "year": self.year,
            "venue": self.venue,
            "doc_type": self.doc_type,
            "published": self.published,
            "global_citations": self.global_citations,
            "impact_factor": float(self.impact_factor),
            "references": sorted(self.references),
            "keywords": sorted(self.keywords),
            "source": self.source,
            "level": self.level,
            "unit": self.unit,
            "migration": self.migration,
            "env_factor": self.env_factor,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Record":
        return cls(
            id=str(d["id"]),
            title=str(d["title"]),
            authors=tuple(d.get("authors", ())),
            year=int(d["year"]),
            venue=str(d.get("venue", "")),
            doc_type=str(d.get("doc_type", "quantitative")),
            published=bool(d.get("published", True)),
            global_citations=int(d.get("global_citations", 0)),
            impact_factor=float(d.get("impact_factor", 0.0)),
            references=frozenset(d.get("references", ())),
            keywords=frozenset(d.get("keywords", ())),
            source=str(d.get("source", "manual")),
            level=str(d.get("level", NOT_APPLICABLE)),
            unit=str(d.get("unit", NOT_APPLICABLE)),
            migration=str(d.get("migration", NOT_APPLICABLE)),
            env_factor=str(d.get("env_factor", NOT_APPLICABLE)),
        )


@dataclass(frozen=True)
class LedgerStage:
    stage: str
    entered: int
    excluded: int
    reason: str = ""


@dataclass(frozen=True)
class ScreeningLedger:
    stages: tuple[LedgerStage, ...] = ()

    def __post_init__(self):
        prev = None
        for st in self.stages:
            if st.entered < 0 or st.excluded < 0 or st.excluded > st.entered:
                raise CorpusError(f"ledger stage {st.stage!r} has invalid counts")
            if prev is not None and st.entered != prev.entered - prev.excluded:
                raise CorpusError(
                    f"ledger stage {st.stage!r} entered {st.entered}, "
                    f"expected {prev.entered - prev.excluded}")
            prev = st

    def append(self, stage: str, entered: int, excluded: int, reason: str = "") -> "ScreeningLedger":
        if any(s.stage == stage for s in self.stages):
            raise CorpusError(f"screening stage {stage!r} already recorded")
        return ScreeningLedger(self.stages + (LedgerStage(stage, entered, excluded, reason),))

    @property
    def final_count(self) -> int | None:
        if not self.stages:
            return None
        last = self.stages[-1]
        return last.entered - last.excluded

    def to_csv(self) -> str:
        return csv_text(LEDGER_HEADER,
                        ((s.stage, s.entered, s.excluded, s.reason) for s in self.stages))


@dataclass(frozen=True)
class Corpus:
    records: tuple[Record, ...] = ()
    ledger: ScreeningLedger = field(default_factory=ScreeningLedger)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen: dict[str, int] = {}
        for n, r in enumerate(self.records):
            if r.id in seen:
                raise CorpusError(f"duplicate record id {r.id!r}")
            seen[r.id] = n

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def by_id(self) -> dict[str, Record]:
        return {r.id: r for r in self.records}

    @property
    def reference_universe(self) -> frozenset[str]:
        universe: set[str] = set()
        for r in self.records:
            universe.update(r.references)
        return frozenset(universe)


# -- parsing -------------------------------------------------------------------

BIB_FIELDS = {
    "title", "author", "year", "journal", "keywords", "cites", "citations",
    "impactfactor",
    # optional coding fields used for cluster profiles
    "doctype", "published", "level", "unit", "migration", "envfactor",
}


def parse_records(stream: IO[bytes] | bytes | str, format: str = "bibtex_subset",
                  source: str = "manual") -> list[Record]:
    """Parse records from a ``bibtex_subset`` or ``jsonl`` byte stream."""
    if hasattr(stream, "read"):
        data = stream.read()
    else:
        data = stream
    if isinstance(data, str):
        data = data.encode("utf-8")
    if format == "bibtex_subset":
        return _parse_bibtex(data, source)
    if format == "jsonl":
        return _parse_jsonl(data)
    raise CorpusError(f"unknown record format {format!r}")


def _parse_jsonl(data: bytes) -> list[Record]:
    records = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(data.decode("utf-8").split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rec = Record.from_dict(obj)
        except (ValueError, KeyError, TypeError) as exc:
            raise CorpusError(f"jsonl line {lineno}: {exc}") from exc
        if rec.id in seen:
            raise CorpusError(
                f"duplicate record id {rec.id!r} on jsonl lines {seen[rec.id]} and {lineno}")
        seen[rec.id] = lineno
        records.append(rec)
    return records


def records_to_jsonl(records: Iterable[Record]) -> str:
    return "".join(dumps_json(r.to_dict(), indent=None) + "\n" for r in records)


class _BibScanner:
    """Byte-offset aware scanner for the bibtex subset."""

    def __init__(self, data: bytes):
        self.data = data
        self.text = data.decode("utf-8")
        # char index -> byte offset
        self._byte_at = None
        self.pos = 0
        self.entry_index = 0

    def offset(self, pos: int | None = None) -> int:
        pos = self.pos if pos is None else pos
        if self._byte_at is None:
            if len(self.text) == len(self.data):
                return pos
            self._byte_at = []
            acc = 0
            for ch in self.text:
                self._byte_at.append(acc)
                acc += len(ch.encode("utf-8"))
            self._byte_at.append(acc)
        return self._byte_at[pos]

    def fail(self, message: str, pos: int | None = None):
        raise BibParseError(message, self.offset(pos), self.entry_index)

    def skip_ws(self):
        text = self.text
        while self.pos < len(text) and text[self.pos].isspace():
            self.pos += 1

    def expect(self, ch: str):
        self.skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] != ch:
            found = self.text[self.pos] if self.pos < len(self.text) else "end of input"
            self.fail(f"expected {ch!r}, found {found!r}")
        self.pos += 1

    def ident(self) -> str:
        self.skip_ws()
        m = re.compile(r"[A-Za-z0-9_:\-.+/]+").match(self.text, self.pos)
        if not m:
            self.fail("expected an identifier")
        self.pos = m.end()
        return m.group(0)

    def value(self) -> str:
        self.skip_ws()
        if self.pos >= len(self.text):
            self.fail("expected a field value, found end of input")
        ch = self.text[self.pos]
        if ch == "{":
            start = self.pos
            depth = 0
            i = self.pos
            while i < len(self.text):
                c = self.text[i]
                if c == "{":
                    depth += 1
                elif c == "}":
                    depth -= 1
                    if depth == 0:
                        self.pos = i + 1
                        return self.text[start + 1:i]
                i += 1
            self.fail("unbalanced braces in field value", start)
        if ch == '"':
            start = self.pos
            end = self.text.find('"', self.pos + 1)
            if end < 0:
                self.fail("unterminated quoted value", start)
            self.pos = end + 1
            return self.text[start + 1:end]
        m = re.compile(r"[0-9]+").match(self.text, self.pos)
        if not m:
            self.fail("expected a braced, quoted or numeric value")
        self.pos = m.end()
        return m.group(0)


def _parse_bibtex(data: bytes, source: str) -> list[Record]:
    sc = _BibScanner(data)
    text = sc.text
    records: list[Record] = []
    key_offsets: dict[str, int] = {}
    while True:
        at = text.find("@", sc.pos)
        if at < 0:
            break
        sc.pos = at + 1
        entry_start = at
        entry_type = sc.ident().lower()
        sc.skip_ws()
        if sc.pos >= len(text) or text[sc.pos] not in "{(":
            sc.fail("expected '{' after entry type")
        closer = "}" if text[sc.pos] == "{" else ")"
        sc.pos += 1
        key = sc.ident()
        fields: dict[str, str] = {}
        while True:
            sc.skip_ws()
            if sc.pos >= len(text):
                sc.fail("unterminated entry", entry_start)
            if text[sc.pos] == closer:
                sc.pos += 1
                break
            sc.expect(",")
            sc.skip_ws()
            if sc.pos < len(text) and text[sc.pos] == closer:
                sc.pos += 1
                break
            name = sc.ident().lower()
            sc.expect("=")
            val = sc.value()
            if name in fields:
                sc.fail(f"field {name!r} repeated")
            fields[name] = val
        if key in key_offsets:
            raise DuplicateKeyError(key, (key_offsets[key], sc.offset(entry_start)))
        key_offsets[key] = sc.offset(entry_start)
        try:
            records.append(_record_from_fields(key, entry_type, fields, source))
        except (CorpusError, ValueError) as exc:
            raise BibParseError(str(exc), sc.offset(entry_start), sc.entry_index) from exc
        sc.entry_index += 1
    return records


def _split_list(value: str) -> list[str]:
    return [p.strip() for p in re.split(r"[,;]", value) if p.strip()]


def _record_from_fields(key: str, entry_type: str, fields: dict[str, str], source: str) -> Record:
    for name in sorted(set(fields) - BIB_FIELDS):
        log.warning("entry %s: ignoring unknown field %r", key, name)
    if "title" not in fields:
        raise CorpusError(f"entry {key!r} has no title")
    if "year" not in fields:
        raise CorpusError(f"entry {key!r} has no year")
    title = " ".join(fields["title"].replace("{", "").replace("}", "").split())
    authors = tuple(a for a in (normalize_author(p) for p in
                                re.split(r"\s+and\s+", fields.get("author", "").strip()))
                    if a)
    journal = " ".join(fields.get("journal", "").split())
    published = "journal" in fields
    if "published" in fields:
        published = fields["published"].strip().lower() in ("1", "true", "yes")
    return Record(
        id=key,
        title=title,
        authors=authors,
        year=int(fields["year"].strip()),
        venue=journal,
        doc_type=fields.get("doctype", "quantitative").strip().lower(),
        published=published,
        global_citations=int(fields.get("citations", "0").strip() or 0),
        impact_factor=float(fields.get("impactfactor", "0").strip() or 0),
        references=frozenset(normalize_reference_key(k) for k in _split_list(fields.get("cites", ""))),
        keywords=frozenset(collapse(k) for k in _split_list(fields.get("keywords", ""))),
        source=source,
        level=fields.get("level", NOT_APPLICABLE).strip().lower(),
        unit=fields.get("unit", NOT_APPLICABLE).strip().lower(),
        migration=fields.get("migration", NOT_APPLICABLE).strip().lower(),
        env_factor=fields.get("envfactor", NOT_APPLICABLE).strip().lower(),
    )


# -- deduplication and screening ----------------------------------------------

def dedupe(records: Sequence[Record] | Corpus) -> tuple[Corpus, list[Record]]:
    """Collapse records sharing a normalized (title, year) pair.

    The survivor has the larger reference list; ties go to the smaller id.
    Survivors keep the position of the first record of their group.
    """
    prior = records.ledger if isinstance(records, Corpus) else ScreeningLedger()
    records = list(records)
    groups: dict[tuple[str, int], list[Record]] = {}
    order: list[tuple[str, int]] = []
    for r in records:
        k = r.dedupe_key
        if k not in groups:
            groups[k] = []
            order.append(k)
        groups[k].append(r)
    survivors, removed = [], []
    for k in order:
        group = groups[k]
        best = min(group, key=lambda r: (-len(r.references), r.id))
        survivors.append(best)
        removed.extend(r for r in group if r is not best)
    ledger = prior.append("deduplication", len(records), len(removed),
                          "identical normalized title and year")
    return Corpus(tuple(survivors), ledger), removed


def screen(corpus: Corpus, stage_name: str, exclude_ids: Iterable[str], reason: str = "") -> Corpus:
    exclude = set(exclude_ids)
    known = set(corpus.ids)
    unknown = sorted(exclude - known)
    if unknown:
        raise CorpusError(f"stage {stage_name!r}: unknown record ids {unknown}")
    ledger = corpus.ledger.append(stage_name, len(corpus), len(exclude), reason)
    kept = tuple(r for r in corpus.records if r.id not in exclude)
    return replace(corpus, records=kept, ledger=ledger)


def read_ledger_csv(text: str) -> ScreeningLedger:
    import csv
    import io

    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != LEDGER_HEADER:
        raise CorpusError(f"ledger header must be {','.join(LEDGER_HEADER)}")
    stages = tuple(LedgerStage(row[0], int(row[1]), int(row[2]), row[3]) for row in reader if row)
    return ScreeningLedger(stages)
