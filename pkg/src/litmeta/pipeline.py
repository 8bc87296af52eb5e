"""Config-driven pipeline: stages, staged writes, quarantine and the run manifest.

Each stage reads the artifacts of earlier stages from the output directory
and writes its own, so any stage can be re-run (or its output replaced by
hand) in isolation.  Outputs are first written to a staging directory and
only moved into place when the stage succeeds; a failing stage leaves its
partial outputs under ``quarantine/<stage>``.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import os
import platform
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from . import __version__, kernels
from ._io import ArtifactSchemaError, dumps_json, read_csv, sha256_file, write_json, write_text
from .bibliometrics import bibliometric_report
from .community import Partition, louvain, partition_to_csv, profile_clusters, profiles_report
from .corpus import (Corpus, CorpusError, dedupe, parse_records, read_ledger_csv,
                     records_to_jsonl, screen)
from .coupling import (build_incidence, coupling_graph, graph_stats, graph_to_graphml,
                       graph_to_tsv, read_graph_tsv)
from .effects import effects_to_csv, load_effects, read_validated_effects, rejected_to_csv
from .metareg import run_paper_battery
from .pooling import boxplot_csv, funnel_csv, pool_by_cluster

log = logging.getLogger(__name__)

STAGES = ("ingest", "screen", "couple", "cluster", "biblio", "effects", "pool", "bias", "mra")
LOCK_NAME = ".litmeta.lock"
MANIFEST = "manifest.json"

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["records", "effects"],
    "properties": {
        "records": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["path"],
                "properties": {
                    "path": {"type": "string"},
                    "format": {"enum": ["bibtex_subset", "jsonl"]},
                    "source": {"enum": ["scopus_export", "wos_export", "manual", "prior_meta"]},
                },
            },
        },
        "effects": {"type": "string"},
        "screening": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["stage"],
                "properties": {
                    "stage": {"type": "string", "minLength": 1},
                    "exclude": {"type": "array", "items": {"type": "string"}},
                    "reason": {"type": "string"},
                },
            },
        },
        "coupling": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"weight_kind": {"enum": ["raw", "normalized"]}},
        },
        "louvain": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "min_gain": {"type": "number", "exclusiveMinimum": 0},
                "order": {"enum": ["ascending", "shuffle"]},
            },
        },
        "pooling": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "models": {"type": "array", "minItems": 1, "uniqueItems": True,
                           "items": {"enum": ["FEM", "REM"]}},
            },
        },
        "stepwise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enter_p": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "remove_p": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "battery": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "min_k": {"type": "integer", "minimum": 3},
                "cluster_robust": {"type": "boolean"},
            },
        },
        "output_dir": {"type": "string"},
        "seed": {"type": "integer"},
    },
}


class ConfigError(ValueError):
    pass


class LockError(RuntimeError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage} failed: {type(cause).__name__}: {cause}")


@dataclass
class PipelineConfig:
    records: list[dict]
    effects: Path
    screening: list[dict] = field(default_factory=list)
    weight_kind: str = "normalized"
    min_gain: float = 1e-9
    order: str = "ascending"
    models: tuple[str, ...] = ("FEM", "REM")
    enter_p: float = 0.05
    remove_p: float = 0.10
    min_k: int = 10
    cluster_robust: bool = True
    output_dir: Path = Path("out")
    seed: int = 0
    echo: dict = field(default_factory=dict)


def _resolve(base: Path, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else base / path


def load_config(path: Path | None = None, data: dict | None = None,
                overrides: dict | None = None, base: Path | None = None) -> PipelineConfig:
    """Validate a JSON config and resolve its paths relative to the config file.

    ``overrides`` maps flat keys (``output_dir``, ``seed``, ``weight_kind``,
    ``min_gain``, ``enter_p``, ``remove_p``) to values that replace the
    file's settings before validation.
    """
    if data is None:
        if path is None:
            raise ConfigError("no config given")
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        base = path.parent
    base = Path(base) if base is not None else Path.cwd()
    data = json.loads(json.dumps(data))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in ("output_dir", "seed"):
            data[key] = value
        elif key == "weight_kind":
            data.setdefault("coupling", {})["weight_kind"] = value
        elif key == "min_gain":
            data.setdefault("louvain", {})["min_gain"] = value
        elif key in ("enter_p", "remove_p"):
            data.setdefault("stepwise", {})[key] = value
        else:
            raise ConfigError(f"unknown override {key!r}")
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {where}: {exc.message}") from None

    step = data.get("stepwise", {})
    enter_p, remove_p = step.get("enter_p", 0.05), step.get("remove_p", 0.10)
    if enter_p > remove_p:
        raise ConfigError(f"stepwise enter_p ({enter_p}) must not exceed remove_p ({remove_p})")
    records = []
    for spec in data["records"]:
        p = _resolve(base, spec["path"])
        if not p.is_file():
            raise ConfigError(f"records file not found: {p}")
        fmt = spec.get("format", "jsonl" if p.suffix == ".jsonl" else "bibtex_subset")
        records.append({"path": p, "format": fmt, "source": spec.get("source", "manual")})
    effects = _resolve(base, data["effects"])
    if not effects.is_file():
        raise ConfigError(f"effects file not found: {effects}")
    stages = [s["stage"] for s in data.get("screening", [])]
    if len(set(stages)) != len(stages) or "deduplication" in stages:
        raise ConfigError("screening stage names must be unique and not 'deduplication'")

    echo = {k: v for k, v in data.items() if k != "output_dir"}
    return PipelineConfig(
        records=records,
        effects=effects,
        screening=list(data.get("screening", [])),
        weight_kind=data.get("coupling", {}).get("weight_kind", "normalized"),
        min_gain=float(data.get("louvain", {}).get("min_gain", 1e-9)),
        order=data.get("louvain", {}).get("order", "ascending"),
        models=tuple(data.get("pooling", {}).get("models", ["FEM", "REM"])),
        enter_p=float(enter_p),
        remove_p=float(remove_p),
        min_k=int(data.get("battery", {}).get("min_k", 10)),
        cluster_robust=bool(data.get("battery", {}).get("cluster_robust", True)),
        output_dir=_resolve(base, data.get("output_dir", "out")),
        seed=int(data.get("seed", 0)),
        echo=echo,
    )


# -- stage plumbing ------------------------------------------------------------

class _Stage:
    """Output sink for one stage: files land in a staging directory first."""

    def __init__(self, name: str, out: Path):
        self.name = name
        self.out = out
        self.staging = out / ".staging" / name
        if self.staging.exists():
            shutil.rmtree(self.staging)
        self.staging.mkdir(parents=True)
        self.files: list[str] = []
        self.counts: dict = {}

    def text(self, rel: str, content: str) -> None:
        write_text(self.staging / rel, content)
        self.files.append(rel)

    def json(self, rel: str, obj) -> None:
        self.text(rel, dumps_json(obj) + "\n")

    def commit(self) -> dict[str, str]:
        hashes = {}
        for rel in sorted(self.files):
            dst = self.out / rel
            dst.parent.mkdir(parents=True, exist_ok=True)
            os.replace(self.staging / rel, dst)
            hashes[rel] = sha256_file(dst)
        shutil.rmtree(self.staging)
        return hashes

    def quarantine(self) -> Path:
        target = self.out / "quarantine" / self.name
        if target.exists():
            shutil.rmtree(target)
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.move(str(self.staging), str(target))
        return target


def _need(out: Path, rel: str) -> Path:
    p = out / rel
    if not p.is_file():
        raise ArtifactSchemaError(p, None, f"artifact {rel} from an earlier stage", "file missing")
    return p


def _read_corpus(out: Path, jsonl: str = "corpus.jsonl", ledger: str = "ledger.csv") -> Corpus:
    p = _need(out, jsonl)
    try:
        records = parse_records(p.read_bytes(), "jsonl")
    except CorpusError as exc:
        raise ArtifactSchemaError(p, None, "one Record JSON object per line", str(exc)) from None
    lp = _need(out, ledger)
    try:
        led = read_ledger_csv(lp.read_text(encoding="utf-8"))
    except (CorpusError, ValueError, IndexError) as exc:
        raise ArtifactSchemaError(lp, None, "header stage,entered,excluded,reason", str(exc)) from None
    return Corpus(tuple(records), led)


def _read_partition(out: Path) -> Partition:
    p = _need(out, "partition.csv")
    _, rows = read_csv(p, ("paper_id", "cluster"))
    assignment = {}
    for lineno, row in rows:
        try:
            assignment[row[0]] = int(row[1])
        except ValueError:
            raise ArtifactSchemaError(p, lineno, "header paper_id,cluster",
                                      "cluster must be an integer") from None
    return Partition(assignment)


def _ma_study_ids(cfg: PipelineConfig) -> set[str]:
    _, rows = read_csv(cfg.effects, ("study_id",), prefix=True)
    return {row[0].strip() for _, row in rows}


# -- stages --------------------------------------------------------------------

def stage_ingest(cfg: PipelineConfig, st: _Stage) -> None:
    raw = []
    for spec in cfg.records:
        recs = parse_records(spec["path"].read_bytes(), spec["format"], spec["source"])
        log.info("ingest: %d records from %s", len(recs), spec["path"].name)
        raw.extend(recs)
    seen: dict[str, int] = {}
    for r in raw:
        if r.id in seen:
            raise CorpusError(f"record id {r.id!r} appears in more than one input file")
        seen[r.id] = 1
    corpus, removed = dedupe(raw)
    st.text("ingested.jsonl", records_to_jsonl(corpus.records))
    st.text("ingest_ledger.csv", corpus.ledger.to_csv())
    st.counts = {"records_identified": len(raw), "duplicates_removed": len(removed),
                 "records": len(corpus)}


def stage_screen(cfg: PipelineConfig, st: _Stage) -> None:
    corpus = _read_corpus(st.out, "ingested.jsonl", "ingest_ledger.csv")
    for spec in cfg.screening:
        corpus = screen(corpus, spec["stage"], spec.get("exclude", []), spec.get("reason", ""))
    st.text("corpus.jsonl", records_to_jsonl(corpus.records))
    st.text("ledger.csv", corpus.ledger.to_csv())
    st.counts = {"records": len(corpus), "references": len(corpus.reference_universe),
                 "ledger_stages": len(corpus.ledger.stages)}


def stage_couple(cfg: PipelineConfig, st: _Stage) -> None:
    corpus = _read_corpus(st.out)
    incidence = build_incidence(corpus)
    graph = coupling_graph(incidence)
    st.text("graph.tsv", graph_to_tsv(graph))
    st.text("graph.graphml", graph_to_graphml(graph))
    stats = graph_stats(graph)
    st.json("graph_stats.json", stats)
    st.counts = {"papers": incidence.shape[0], "references": incidence.shape[1],
                 "edges": graph.n_edges, "isolated_nodes": stats["isolated_nodes"]}


def stage_cluster(cfg: PipelineConfig, st: _Stage) -> None:
    corpus = _read_corpus(st.out)
    graph = read_graph_tsv(_need(st.out, "graph.tsv"), corpus)
    part = louvain(graph, cfg.weight_kind, cfg.min_gain, cfg.order,
                   cfg.seed if cfg.order == "shuffle" else None)
    profiles = profile_clusters(corpus, part, _ma_study_ids(cfg))
    st.text("partition.csv", partition_to_csv(part))
    report = profiles_report(profiles, part)
    report["weight_kind"] = cfg.weight_kind
    report["min_gain"] = cfg.min_gain
    st.json("cluster_profiles.json", report)
    sizes = sorted((p.size for p in profiles if not p.isolated), reverse=True)
    st.counts = {"communities": sum(1 for p in profiles if not p.isolated),
                 "isolated_nodes": len(part.isolated), "community_sizes": sizes,
                 "modularity": part.modularity, "passes": part.passes}


def stage_biblio(cfg: PipelineConfig, st: _Stage) -> None:
    corpus = _read_corpus(st.out)
    report = bibliometric_report(corpus)
    st.json("bibliometrics.json", report)
    st.counts = {"documents": report["documents"],
                 "collaboration_index": report["collaboration"]["collaboration_index"]}


def stage_effects(cfg: PipelineConfig, st: _Stage) -> None:
    corpus = _read_corpus(st.out)
    part = _read_partition(st.out)
    loaded = load_effects(cfg.effects.read_bytes(), corpus, part, path=str(cfg.effects))
    st.text("effects_validated.csv", effects_to_csv(loaded.records, loaded.moderator_names))
    st.text("effects_rejected.csv", rejected_to_csv(loaded.rejected))
    studies = {o: len({r.study_id for r in loaded.records if r.onset == o})
               for o in loaded.valid_counts}
    st.counts = {"rows_raw": loaded.raw_counts, "rows_valid": loaded.valid_counts,
                 "rows_rejected": len(loaded.rejected), "studies": studies,
                 "studies_total": len({r.study_id for r in loaded.records})}


def _effects(st: _Stage):
    return read_validated_effects(_need(st.out, "effects_validated.csv"))


def stage_pool(cfg: PipelineConfig, st: _Stage) -> None:
    effects, _ = _effects(st)
    table = pool_by_cluster(effects, None, cfg.models)
    st.text("pooling.csv", table.to_csv())
    st.text("boxplot_data.csv", boxplot_csv(effects))
    st.text("funnel_data.csv", funnel_csv(effects))
    st.counts = {"pooled_rows": len(table.results), "skipped_groups": len(table.skipped)}


def _battery(cfg, effects, moderators):
    return run_paper_battery(effects, None, moderators, cfg.enter_p, cfg.remove_p,
                             cfg.cluster_robust, cfg.min_k)


def stage_bias(cfg: PipelineConfig, st: _Stage) -> None:
    effects, _ = _effects(st)
    report = _battery(cfg, effects, [])
    for g in report.groups:
        st.text(f"fatpet_peese/{g.name}.csv", g.fatpet_csv())
    manifest = report.manifest()
    for g in manifest["groups"]:
        for key in ("mra_row_groups", "selected_moderators", "stepwise_trace",
                    "excluded_constant", "warnings"):
            g.pop(key)
    st.json("fatpet_peese/battery.json", manifest)
    st.counts = {"groups": len(report.groups), "skipped_groups": len(report.skipped)}


def stage_mra(cfg: PipelineConfig, st: _Stage) -> None:
    effects, moderators = _effects(st)
    report = _battery(cfg, effects, moderators)
    for g in report.groups:
        st.text(f"mra/{g.name}.csv", g.mra_csv())
    manifest = report.manifest()
    manifest["candidate_moderators"] = list(moderators)
    manifest["enter_p"], manifest["remove_p"] = cfg.enter_p, cfg.remove_p
    for g in manifest["groups"]:
        g.pop("fatpet_rows")
    st.json("mra/battery.json", manifest)
    st.counts = {"groups": len(report.groups), "skipped_groups": len(report.skipped)}


STAGE_FUNCS: dict[str, Callable[[PipelineConfig, _Stage], None]] = {
    "ingest": stage_ingest, "screen": stage_screen, "couple": stage_couple,
    "cluster": stage_cluster, "biblio": stage_biblio, "effects": stage_effects,
    "pool": stage_pool, "bias": stage_bias, "mra": stage_mra,
}


# -- manifest and locking ------------------------------------------------------

def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _versions() -> dict:
    import scipy

    return {"litmeta": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "kernel_backend": kernels.BACKEND}


def _update_manifest(out: Path, cfg: PipelineConfig, entries: dict[str, dict]) -> None:
    path = out / MANIFEST
    stages: dict[str, dict] = {}
    if path.is_file():
        try:
            stages = json.loads(path.read_text(encoding="utf-8")).get("stages", {})
        except json.JSONDecodeError:
            stages = {}
    stages.update(entries)
    manifest = {
        "tool": "litmeta",
        "versions": _versions(),
        "config": cfg.echo,
        "stages": {name: stages[name] for name in STAGES if name in stages},
    }
    write_json(path, manifest)


class _Lock:
    def __init__(self, out: Path):
        self.path = out / LOCK_NAME

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockError(f"{self.path} exists: another pipeline is using this output "
                            "directory (remove the file if that run died)") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(f"{os.getpid()}\n")
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def run_stages(cfg: PipelineConfig, stages=STAGES) -> dict[str, dict]:
    """Run ``stages`` in canonical order, updating the manifest after each one."""
    unknown = [s for s in stages if s not in STAGE_FUNCS]
    if unknown:
        raise ConfigError(f"unknown stage(s): {unknown}")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    done: dict[str, dict] = {}
    with _Lock(out):
        for name in (s for s in STAGES if s in stages):
            started = _now()
            st = _Stage(name, out)
            log.info("stage %s: start", name)
            try:
                STAGE_FUNCS[name](cfg, st)
            except Exception as exc:
                target = st.quarantine()
                log.error("stage %s failed; partial outputs in %s", name, target)
                raise StageError(name, exc) from exc
            hashes = st.commit()
            entry = {"outputs": hashes, "counts": st.counts,
                     "started": started, "finished": _now()}
            done[name] = entry
            _update_manifest(out, cfg, {name: entry})
            log.info("stage %s: wrote %d file(s)", name, len(hashes))
        staging = out / ".staging"
        if staging.is_dir() and not any(staging.iterdir()):
            staging.rmdir()
    return done


def run_pipeline(config: PipelineConfig | Path | str) -> dict[str, dict]:
    """Validate the config, then run every stage."""
    cfg = config if isinstance(config, PipelineConfig) else load_config(Path(config))
    return run_stages(cfg, STAGES)


def strip_timestamps(manifest: dict) -> dict:
    """Manifest without its timestamp fields, for determinism comparisons."""
    out = json.loads(json.dumps(manifest))
    for entry in out.get("stages", {}).values():
        entry.pop("started", None)
        entry.pop("finished", None)
    return out
