"""Synthetic corpora and effect tables for demos, fixtures and simulations.

Everything here is driven by an explicit seed so fixtures are reproducible
byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import taxonomy
from ._io import csv_text, dumps_json, write_json, write_text
from .corpus import Record, records_to_jsonl
from .effects import EFFECTS_HEADER, EffectRecord, t_from_pcc

# shape constants of the full-scale fixture
FULL_SCALE_SHAPE = {
    "papers": 151,
    "references": 5433,
    "communities": (51, 28, 37, 35),
    "slow_rows": 3904,
    "fast_rows": 2065,
    "slow_studies": 66,
    "fast_studies": 60,
    "ma_studies": 96,
    "screened_out": 20,
}

SURNAMES = (
    "Adams", "Berlemann", "Cattaneo", "Dallmann", "Estrada", "Findley", "Gray", "Hunter",
    "Iqbal", "Jessoe", "Kubik", "Lopez", "Mueller", "Nawrotzki", "Obokata", "Peri",
    "Quartey", "Robalino", "Sedova", "Thiede", "Urquijo", "Viswanathan", "Warner", "Xu",
)
TITLE_WORDS = (
    "climate", "migration", "drought", "flood", "rainfall", "temperature", "mobility",
    "household", "rural", "urban", "disaster", "displacement", "agriculture", "income",
    "evidence", "panel", "weather", "shocks", "labor", "remittances",
)

# moderators coded in the full-scale effects table
STUDY_MODERATORS = (
    "published", "impact_factor", "corridor_internal", "corridor_international",
    "measure_flows", "origin_africa", "origin_asia", "origin_lac", "dest_high",
    "source_census", "source_survey", "unit_household", "unit_country", "time_span",
    "est_panel", "est_poisson", "est_iv", "control_income", "channel_agriculture",
)
SLOW_MODERATORS = ("slow_temperature", "slow_precipitation", "slow_anomaly", "slow_time_lag")
FAST_MODERATORS = ("fast_meteorological", "fast_hydrological", "fast_climatological",
                   "fast_intensity", "fast_time_lag")
ESTIMATE_MODERATORS = ("preferred_specification",)
FIXTURE_MODERATORS = tuple(taxonomy.canonical(
    STUDY_MODERATORS + SLOW_MODERATORS + FAST_MODERATORS + ESTIMATE_MODERATORS))


def _title(rng: np.random.Generator, n: int) -> str:
    words = rng.choice(len(TITLE_WORDS), size=n, replace=False)
    return " ".join(TITLE_WORDS[w] for w in words).capitalize()


def _authors(rng: np.random.Generator, n: int) -> tuple[str, ...]:
    picks = rng.choice(len(SURNAMES), size=n, replace=False)
    return tuple(f"{SURNAMES[p].lower()}, {chr(97 + int(rng.integers(26)))}." for p in picks)


# -- corpora -------------------------------------------------------------------

def planted_corpus(sizes, core_refs: int = 20, core_draw: int = 10, shared_refs: int = 30,
                   unique_total: int = 0, seed: int = 0, id_prefix: str = "P",
                   year_range=(1998, 2021)) -> tuple[list[Record], dict[str, int]]:
    """Papers in planted communities that share references mostly within their block.

    Each community owns ``core_refs`` references; every paper cites
    ``core_draw`` of them plus one from a small pool shared by all blocks.
    ``unique_total`` references cited by exactly one paper pad the reference
    universe to a chosen size without adding any coupling.
    """
    rng = np.random.default_rng(seed)
    n = int(sum(sizes))
    width = max(3, len(str(n)))
    ids = [f"{id_prefix}{i + 1:0{width}d}" for i in range(n)]
    block = np.repeat(np.arange(len(sizes)), sizes)
    refs: list[set[str]] = [set() for _ in range(n)]
    for c, size in enumerate(sizes):
        members = np.flatnonzero(block == c)
        pool = [f"core{c + 1}_{r + 1:03d}_ref" for r in range(core_refs)]
        for i in members:
            refs[i].update(pool[j] for j in rng.choice(core_refs, size=min(core_draw, core_refs),
                                                       replace=False))
        # make sure every core reference is cited at least once
        for j, key in enumerate(pool):
            refs[members[j % size]].add(key)
    shared = [f"shared_{r + 1:03d}_ref" for r in range(shared_refs)]
    for j, key in enumerate(shared):
        refs[j % n].add(key)
    for i in range(n):
        refs[i].add(shared[int(rng.integers(shared_refs))])
    if unique_total:
        owners = np.sort(rng.integers(0, n, size=unique_total))
        for u, i in enumerate(owners):
            refs[i].add(f"unique_{u + 1:05d}_ref")

    records = []
    for i in range(n):
        n_auth = int(rng.integers(1, 5))
        records.append(Record(
            id=ids[i],
            title=f"{_title(rng, 4)} {ids[i].lower()}",
            authors=_authors(rng, n_auth),
            year=int(rng.integers(year_range[0], year_range[1] + 1)),
            venue=f"Journal of {TITLE_WORDS[int(block[i]) % len(TITLE_WORDS)].capitalize()} Studies",
            doc_type=("quantitative", "qualitative", "review", "theoretical", "policy")[
                int(rng.choice(5, p=(0.6, 0.15, 0.1, 0.1, 0.05)))],
            published=bool(rng.random() < 0.8),
            global_citations=int(rng.integers(0, 400)),
            impact_factor=round(float(rng.uniform(0, 5)), 3),
            references=frozenset(refs[i]),
            keywords=frozenset(TITLE_WORDS[w] for w in rng.choice(len(TITLE_WORDS), 3, replace=False)),
            source=("scopus_export", "wos_export")[i % 2],
            level=("micro", "macro")[int(rng.integers(2))],
            unit=("household", "individual", "country", "territorial")[int(rng.integers(4))],
            migration=("internal", "cross_country", "both")[int(rng.integers(3))],
            env_factor=("slow_onset", "fast_onset", "both")[int(rng.integers(3))],
        ))
    return records, {ids[i]: int(block[i]) for i in range(n)}


def off_topic_records(n: int, seed: int = 0, start: int = 900) -> list[Record]:
    """Records destined for exclusion at screening; each cites only its own references."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        rid = f"X{start + k:03d}"
        out.append(Record(
            id=rid, title=f"{_title(rng, 3)} {rid.lower()}", authors=_authors(rng, 2),
            year=int(rng.integers(2000, 2021)), venue="Miscellany",
            references=frozenset(f"offtopic_{rid.lower()}_{j}_ref" for j in range(3)),
            source="scopus_export",
        ))
    return out


# -- effects -------------------------------------------------------------------

def _study_moderators(rng: np.random.Generator, record: Record | None) -> dict[str, float]:
    m = {name: 0.0 for name in STUDY_MODERATORS}
    m["published"] = float(record.published) if record is not None else float(rng.random() < 0.7)
    m["impact_factor"] = float(record.impact_factor) if record is not None else 0.0
    corridor = int(rng.integers(3))
    if corridor < 2:
        m[("corridor_internal", "corridor_international")[corridor]] = 1.0
    m["measure_flows"] = float(rng.random() < 0.6)
    region = int(rng.integers(4))
    if region < 3:
        m[("origin_africa", "origin_asia", "origin_lac")[region]] = 1.0
    m["dest_high"] = float(rng.random() < 0.3)
    source = int(rng.integers(3))
    if source < 2:
        m[("source_census", "source_survey")[source]] = 1.0
    unit = int(rng.integers(3))
    if unit < 2:
        m[("unit_household", "unit_country")[unit]] = 1.0
    m["time_span"] = float(rng.integers(1, 40))
    m["est_panel"] = float(rng.random() < 0.5)
    m["est_poisson"] = float(rng.random() < 0.2)
    m["est_iv"] = float(rng.random() < 0.15)
    m["control_income"] = float(rng.random() < 0.5)
    m["channel_agriculture"] = float(rng.random() < 0.4)
    return m


def effect_rows(study_rows: dict[str, tuple[str, int]], records: dict[str, Record] | None = None,
                seed: int = 0, effects=None, shift_published: float = 0.02):
    """Generate effect rows for ``{study_id: (onset, n_rows)}``.

    True pcc per study is the onset effect plus a study-level deviation, with
    ``shift_published`` added for published studies.  Rows carry a t-statistic
    and df; moderators cover the fixture taxonomy.
    """
    effects = effects or {"slow": 0.01, "fast": 0.03}
    rng = np.random.default_rng(seed)
    rows = []
    study_mods: dict[str, dict[str, float]] = {}
    for study in sorted(study_rows):
        onset, n_rows = study_rows[study]
        if study not in study_mods:
            study_mods[study] = _study_moderators(rng, records.get(study) if records else None)
        base = study_mods[study]
        mu = effects[onset] + 0.01 * rng.standard_normal() + shift_published * base["published"]
        for e in range(n_rows):
            df = int(rng.integers(40, 3000))
            pcc = mu + rng.standard_normal() / math.sqrt(df)
            pcc = max(min(pcc, 0.95), -0.95)
            mods = dict(base)
            for name in SLOW_MODERATORS + FAST_MODERATORS:
                mods[name] = 0.0
            if onset == "slow":
                kind = int(rng.integers(3))
                mods[SLOW_MODERATORS[kind]] = 1.0
                mods["slow_time_lag"] = float(rng.integers(0, 4))
            else:
                kind = int(rng.integers(4))
                mods[FAST_MODERATORS[kind]] = 1.0
                mods["fast_time_lag"] = float(rng.integers(0, 4))
            mods["preferred_specification"] = float(e == 0)
            rows.append((study, f"{onset[0]}{e + 1:03d}", onset, t_from_pcc(pcc, df), df, mods))
    return rows


def effects_csv(rows, moderator_names=FIXTURE_MODERATORS) -> str:
    header = EFFECTS_HEADER + tuple(moderator_names)
    return csv_text(header, ((s, e, o, None, None, t, df, *(m.get(n, 0.0) for n in moderator_names))
                             for s, e, o, t, df, m in rows))


def _split_counts(total: int, parts: int, rng: np.random.Generator, minimum: int = 5) -> list[int]:
    weights = rng.dirichlet(np.full(parts, 4.0))
    counts = np.full(parts, minimum) + np.floor(weights * (total - minimum * parts)).astype(int)
    remainder = total - int(counts.sum())
    for j in np.argsort(-weights)[:remainder]:
        counts[j] += 1
    return [int(c) for c in counts]


@dataclass(frozen=True)
class Fixture:
    records_path: Path
    effects_path: Path
    config_path: Path
    shape: dict


def full_scale_fixture(directory: Path, seed: int = 2023) -> Fixture:
    """Write the full-scale fixture: records, effects table and a pipeline config."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    shape = FULL_SCALE_SHAPE
    n_core, n_shared = 4 * 20, 30
    records, block = planted_corpus(shape["communities"], core_refs=20, core_draw=10,
                                    shared_refs=n_shared,
                                    unique_total=shape["references"] - n_core - n_shared,
                                    seed=seed)
    extra = off_topic_records(shape["screened_out"], seed=seed + 1)
    write_text(directory / "records.jsonl", records_to_jsonl(records + extra))

    rng = np.random.default_rng(seed + 2)
    # studies drawn from every community; 30 report both onsets
    ids = sorted(block)
    ma = sorted(rng.choice(len(ids), size=shape["ma_studies"], replace=False).tolist())
    ma_ids = [ids[i] for i in ma]
    order = rng.permutation(len(ma_ids))
    both = shape["slow_studies"] + shape["fast_studies"] - shape["ma_studies"]
    slow_only = shape["slow_studies"] - both
    slow_ids = sorted(ma_ids[i] for i in order[:slow_only + both])
    fast_ids = sorted(ma_ids[i] for i in order[slow_only:])
    slow_n = _split_counts(shape["slow_rows"], len(slow_ids), rng)
    fast_n = _split_counts(shape["fast_rows"], len(fast_ids), rng)
    by_id = {r.id: r for r in records}
    rows = effect_rows({s: ("slow", n) for s, n in zip(slow_ids, slow_n)}, by_id, seed + 3)
    rows += effect_rows({s: ("fast", n) for s, n in zip(fast_ids, fast_n)}, by_id, seed + 4)
    rows.sort(key=lambda r: (r[0], r[2] != "slow", r[1]))
    write_text(directory / "effects.csv", effects_csv(rows))

    config = {
        "records": [{"path": "records.jsonl", "format": "jsonl"}],
        "effects": "effects.csv",
        "screening": [{"stage": "title_screen",
                       "exclude": [r.id for r in extra],
                       "reason": "off-topic after title and abstract screening"}],
        "coupling": {"weight_kind": "normalized"},
        "louvain": {"min_gain": 1e-9, "order": "ascending"},
        "pooling": {"models": ["FEM", "REM"]},
        "stepwise": {"enter_p": 0.05, "remove_p": 0.10},
        "output_dir": "out",
        "seed": seed,
    }
    write_json(directory / "config.json", config)
    return Fixture(directory / "records.jsonl", directory / "effects.csv",
                   directory / "config.json", dict(shape))


def demo_files(directory: Path, seed: int = 7) -> None:
    """Regenerate the bundled 12-paper demo: a bibtex file, effects table and config."""
    directory = Path(directory)
    records, _ = planted_corpus((6, 6), core_refs=8, core_draw=5, shared_refs=4,
                                unique_total=24, seed=seed, id_prefix="D", year_range=(2005, 2021))
    lines = []
    for r in records:
        fields = [
            ("title", r.title), ("author", " and ".join(r.authors)), ("year", str(r.year)),
            ("journal", r.venue), ("keywords", ", ".join(sorted(r.keywords))),
            ("cites", ", ".join(sorted(r.references))),
            ("citations", str(r.global_citations)), ("impactfactor", repr(r.impact_factor)),
            ("doctype", r.doc_type), ("published", "true" if r.published else "false"),
            ("level", r.level), ("unit", r.unit), ("migration", r.migration),
            ("envfactor", r.env_factor),
        ]
        body = ",\n".join(f"  {k} = {{{v}}}" for k, v in fields)
        lines.append(f"@article{{{r.id},\n{body}\n}}\n")
    # a duplicate export of the first record under another key, with fewer references
    first = records[0]
    lines.append(f"@article{{{first.id}dup,\n  title = {{{first.title.upper()}}},\n"
                 f"  author = {{{' and '.join(first.authors)}}},\n  year = {{{first.year}}},\n"
                 f"  journal = {{{first.venue}}}\n}}\n")
    write_text(directory / "records.bib", "\n".join(lines))

    rng = np.random.default_rng(seed + 1)
    study_rows = {}
    for n, r in enumerate(records[:10]):
        study_rows[r.id] = (("slow", "fast")[n % 2], int(rng.integers(4, 9)))
    rows = effect_rows(study_rows, {r.id: r for r in records}, seed + 2)
    write_text(directory / "effects.csv", effects_csv(rows))
    config = {
        "records": [{"path": "records.bib", "format": "bibtex_subset", "source": "scopus_export"}],
        "effects": "effects.csv",
        "screening": [{"stage": "title_screen", "exclude": [records[-1].id],
                       "reason": "no migration outcome"}],
        "coupling": {"weight_kind": "normalized"},
        "louvain": {"min_gain": 1e-9, "order": "ascending"},
        "pooling": {"models": ["FEM", "REM"]},
        "stepwise": {"enter_p": 0.05, "remove_p": 0.10},
        "battery": {"min_k": 10},
        "output_dir": "out",
        "seed": seed,
    }
    write_json(directory / "config.json", config)


# -- Monte-Carlo data-generating processes -------------------------------------

def simulate_effects(k: int, true_effect: float, rng: np.random.Generator, selection: bool = False,
                     df_range=(30, 500), onset: str = "slow") -> list[EffectRecord]:
    """Draw ``k`` estimates of ``true_effect`` with sampling noise ``1/sqrt(df)``.

    With ``selection`` only estimates with t > 1.96 are reported, which is the
    one-sided publication filter that skews the funnel.
    """
    out: list[EffectRecord] = []
    n = 0
    while len(out) < k:
        df = int(rng.integers(df_range[0], df_range[1] + 1))
        pcc = true_effect + rng.standard_normal() / math.sqrt(df)
        if not -0.99 < pcc < 0.99:
            continue
        t = t_from_pcc(pcc, df)
        n += 1
        if selection and t <= 1.96:
            continue
        out.append(EffectRecord(f"s{len(out):04d}", "e1", t, df, onset))
    return out


def collaboration_fixture(index: float = 2.16, documents: int = 25) -> list[Record]:
    """Records whose multi-authored papers average exactly ``index`` authors."""
    total = round(index * documents)
    if abs(total / documents - index) > 1e-12:
        raise ValueError("index * documents must be an integer")
    counts = [2] * documents
    extra = total - 2 * documents
    if extra < 0:
        raise ValueError("index must be at least 2")
    for j in range(extra):
        counts[j % documents] += 1
    recs = []
    for i, c in enumerate(counts):
        recs.append(Record(id=f"C{i:03d}", title=f"collaboration paper {i}",
                           authors=tuple(f"author{i}_{a}, x." for a in range(c)), year=2015))
    # single-authored papers do not enter the index
    recs += [Record(id=f"S{i:03d}", title=f"solo paper {i}", authors=("solo, s.",), year=2016)
             for i in range(5)]
    return recs


def dumps_fixture_summary(fixture: Fixture) -> str:
    return dumps_json(fixture.shape)
