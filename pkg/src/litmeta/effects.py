"""Conversion of reported estimates to partial correlations, and the effects table loader."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

from . import taxonomy
from ._io import ArtifactSchemaError, csv_text
from .corpus import Corpus

ONSETS = ("slow", "fast")
UNASSIGNED = "unassigned"
EFFECTS_HEADER = ("study_id", "estimate_id", "onset", "coef", "coef_se", "t", "df")
VALIDATED_HEADER = ("study_id", "estimate_id", "onset", "cluster", "coef", "coef_se", "t", "df",
                    "pcc", "se")


class EffectError(ValueError):
    pass


def pcc_from_t(t: float, df: int) -> tuple[float, float]:
    """Partial correlation and its standard error from a t-statistic.

    ``se`` is evaluated as ``1 / sqrt(t**2 + df)``, algebraically identical to
    ``sqrt((1 - pcc**2) / df)`` but free of cancellation as ``|pcc| -> 1``.
    """
    t = float(t)
    if not math.isfinite(t):
        raise EffectError(f"t must be finite, got {t}")
    if isinstance(df, bool) or df != int(df) or df < 1:
        raise EffectError(f"df must be a positive integer, got {df}")
    root = math.hypot(t, math.sqrt(df))
    return t / root, 1.0 / root


def pcc_from_coef(coef: float, coef_se: float, df: int) -> tuple[float, float]:
    if not coef_se > 0:
        raise EffectError(f"coefficient standard error must be positive, got {coef_se}")
    return pcc_from_t(coef / coef_se, df)


def t_from_pcc(pcc: float, df: int) -> float:
    if not -1.0 < pcc < 1.0:
        raise EffectError(f"|pcc| must be below 1, got {pcc}")
    return pcc * math.sqrt(df / (1.0 - pcc * pcc))


def fisher_z(pcc: float, df: int) -> tuple[float, float]:
    """Fisher z of a partial correlation, with standard error ``1/sqrt(df - 1)``."""
    if not -1.0 < pcc < 1.0:
        raise EffectError(f"|pcc| must be below 1 for the Fisher transform, got {pcc}")
    if df < 2:
        raise EffectError(f"df must be at least 2 for the Fisher transform, got {df}")
    return math.atanh(pcc), 1.0 / math.sqrt(df - 1)


def validate_moderators(mods: Mapping[str, float]) -> None:
    order, continuous = taxonomy.ORDER, taxonomy.CONTINUOUS
    for name, value in mods.items():
        if value == 0.0 or value == 1.0:
            if name not in order:
                raise EffectError(f"unknown moderator {name!r}")
            continue
        if name not in order:
            raise EffectError(f"unknown moderator {name!r}")
        if not math.isfinite(value):
            raise EffectError(f"moderator {name} is not finite")
        if name not in continuous:
            raise EffectError(f"dummy moderator {name} must be 0 or 1, got {value}")
    for group, names in taxonomy.EXCLUSIVE.items():
        active = [n for n in names if mods.get(n, 0.0) == 1.0]
        if len(active) > 1:
            raise EffectError(f"more than one {group} category active: {', '.join(active)}")


@dataclass(frozen=True)
class EffectRecord:
    """One reported estimate.  ``pcc`` and ``se`` are always derived from ``t`` and ``df``."""

    study_id: str
    estimate_id: str
    t_value: float
    df: int
    onset: str
    cluster: int | str = UNASSIGNED
    moderators: Mapping[str, float] = field(default_factory=dict)
    coef: float | None = None
    coef_se: float | None = None
    pcc: float = field(init=False, repr=False, compare=False)
    se: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.onset not in ONSETS:
            raise EffectError(f"onset must be one of {ONSETS}, got {self.onset!r}")
        pcc, se = pcc_from_t(self.t_value, self.df)
        if abs(pcc) >= 1.0:
            raise EffectError("degenerate estimate: |pcc| rounds to 1")
        object.__setattr__(self, "df", int(self.df))
        object.__setattr__(self, "pcc", pcc)
        object.__setattr__(self, "se", se)
        validate_moderators(self.moderators)

    @property
    def precision(self) -> float:
        return 1.0 / self.se

    @property
    def cluster_name(self) -> str:
        return UNASSIGNED if self.cluster == UNASSIGNED else f"cluster_{int(self.cluster) + 1}"

    @classmethod
    def from_pcc(cls, study_id: str, estimate_id: str, pcc: float, df: int, onset: str,
                 **kw) -> "EffectRecord":
        return cls(study_id, estimate_id, t_from_pcc(pcc, df), df, onset, **kw)


@dataclass(frozen=True)
class RejectedRow:
    line: int
    study_id: str
    estimate_id: str
    onset: str
    reason: str


@dataclass(frozen=True)
class EffectsLoad:
    records: tuple[EffectRecord, ...]
    rejected: tuple[RejectedRow, ...]
    moderator_names: tuple[str, ...]
    raw_counts: dict[str, int]

    @property
    def valid_counts(self) -> dict[str, int]:
        counts = {o: 0 for o in ONSETS}
        for r in self.records:
            counts[r.onset] += 1
        return counts


def _num(cell: str) -> float | None:
    cell = cell.strip()
    if cell == "":
        return None
    return float(cell)


def _int_df(value: float) -> int:
    if not math.isfinite(value) or value != int(value):
        raise EffectError(f"df must be an integer, got {value}")
    if value < 1:
        raise EffectError(f"df must be at least 1, got {value:g}")
    return int(value)


def load_effects(table: IO[bytes] | bytes | str, corpus: Corpus | None = None,
                 partition=None, path: str = "<effects>", strict: bool = False) -> EffectsLoad:
    """Read an effects CSV into validated ``EffectRecord`` objects.

    Header problems and unknown study ids raise.  Row-level problems (missing
    payload, bad df, degenerate pcc, invalid moderators) reject the row; with
    ``strict=True`` the first rejected row raises instead.
    """
    if hasattr(table, "read"):
        table = table.read()
    if isinstance(table, bytes):
        table = table.decode("utf-8")
    reader = csv.reader(io.StringIO(table))
    expected = ",".join(EFFECTS_HEADER) + ",<moderators...>"
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header[:len(EFFECTS_HEADER)]) != EFFECTS_HEADER:
        raise ArtifactSchemaError(path, 1, expected, "bad or missing header")
    mod_names = [h.strip() for h in header[len(EFFECTS_HEADER):]]
    unknown = [m for m in mod_names if m not in taxonomy.ORDER]
    if unknown:
        raise ArtifactSchemaError(path, 1, expected, f"unknown moderator columns {unknown}")
    if len(set(mod_names)) != len(mod_names):
        raise ArtifactSchemaError(path, 1, expected, "repeated moderator column")

    assignment = partition.assignment if partition is not None else {}
    known = set(corpus.ids) if corpus is not None else None
    rows = [(lineno, row) for lineno, row in enumerate(reader, start=2) if row]

    if known is not None:
        offenders = sorted({row[0].strip() for _, row in rows if row[0].strip() not in known})
        if offenders:
            raise EffectError(f"{path}: study ids not found in corpus: {offenders}")

    records, rejected = [], []
    raw_counts = {o: 0 for o in ONSETS}
    seen: set[tuple[str, str]] = set()
    for lineno, row in rows:
        if len(row) != len(header):
            raise ArtifactSchemaError(path, lineno, expected,
                                      f"{len(row)} fields instead of {len(header)}")
        study, est, onset = row[0].strip(), row[1].strip(), row[2].strip()
        if onset in raw_counts:
            raw_counts[onset] += 1
        try:
            if (study, est) in seen:
                raise EffectError(f"duplicate estimate id {est!r} in study {study!r}")
            coef, coef_se, t, df = (_num(c) for c in row[3:7])
            if df is None:
                raise EffectError("df is missing")
            df = _int_df(df)
            if t is not None and (coef is not None or coef_se is not None):
                raise EffectError("give either t or (coef, coef_se), not both")
            if t is None:
                if coef is None or coef_se is None:
                    raise EffectError("row has neither t nor (coef, coef_se)")
                if not coef_se > 0:
                    raise EffectError(f"coef_se must be positive, got {coef_se}")
                t = coef / coef_se
            mods = {}
            for name, cell in zip(mod_names, row[len(EFFECTS_HEADER):]):
                v = _num(cell)
                mods[name] = 0.0 if v is None else v
            cluster = assignment.get(study, UNASSIGNED)
            records.append(EffectRecord(study, est, t, df, onset, cluster, mods, coef, coef_se))
            seen.add((study, est))
        except (EffectError, ValueError) as exc:
            if strict:
                raise EffectError(f"{path}:{lineno}: {exc}") from exc
            rejected.append(RejectedRow(lineno, study, est, onset, str(exc)))
    return EffectsLoad(tuple(records), tuple(rejected), tuple(mod_names), raw_counts)


def effects_to_csv(records: Sequence[EffectRecord], moderator_names: Sequence[str]) -> str:
    """Validated effects table: identifiers, cluster, source values, pcc, se, moderators."""
    header = VALIDATED_HEADER + tuple(moderator_names)
    rows = []
    for r in records:
        cluster = r.cluster if r.cluster == UNASSIGNED else int(r.cluster)
        rows.append((r.study_id, r.estimate_id, r.onset, cluster, r.coef, r.coef_se,
                     float(r.t_value), r.df, r.pcc, r.se,
                     *(float(r.moderators.get(m, 0.0)) for m in moderator_names)))
    return csv_text(header, rows)


def read_validated_effects(path) -> tuple[list[EffectRecord], list[str]]:
    from ._io import read_csv

    header, rows = read_csv(path, VALIDATED_HEADER, prefix=True)
    mod_names = header[len(VALIDATED_HEADER):]
    expected = ",".join(VALIDATED_HEADER) + ",<moderators...>"
    out = []
    for lineno, row in rows:
        try:
            cluster = row[3] if row[3] == UNASSIGNED else int(row[3])
            mods = {m: float(v) for m, v in zip(mod_names, row[len(VALIDATED_HEADER):])}
            out.append(EffectRecord(row[0], row[1], float(row[6]), int(row[7]), row[2], cluster,
                                    mods, _num(row[4]), _num(row[5])))
        except (EffectError, ValueError) as exc:
            raise ArtifactSchemaError(path, lineno, expected, str(exc)) from None
    return out, list(mod_names)


def rejected_to_csv(rejected: Iterable[RejectedRow]) -> str:
    return csv_text(("line", "study_id", "estimate_id", "onset", "reason"),
                    ((r.line, r.study_id, r.estimate_id, r.onset, r.reason) for r in rejected))
