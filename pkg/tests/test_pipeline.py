import json

import pytest

from litmeta import pipeline
from litmeta.corpus import parse_records
from litmeta.coupling import build_incidence, coupling_graph, graph_to_tsv
from litmeta.corpus import Corpus
from litmeta.pipeline import (STAGES, ConfigError, LockError, StageError, load_config, run_stages,
                              strip_timestamps)


def _cfg(config_path, out, **over):
    return load_config(config_path, overrides={"output_dir": str(out), **over})


def test_demo_runs_all_stages(demo_config, tmp_path):
    out = tmp_path / "out"
    done = run_stages(_cfg(demo_config, out))
    assert list(done) == list(STAGES)
    manifest = json.loads((out / "manifest.json").read_text())
    assert list(manifest["stages"]) == list(STAGES)
    assert "output_dir" not in manifest["config"]
    for entry in manifest["stages"].values():
        assert {"outputs", "counts", "started", "finished"} <= entry.keys()
        for rel in entry["outputs"]:
            assert (out / rel).is_file()
    assert manifest["stages"]["screen"]["counts"]["records"] == 11
    assert not (out / ".litmeta.lock").exists() and not (out / ".staging").exists()


def test_couple_stage_matches_library(demo_config, tmp_path):
    out = tmp_path / "out"
    run_stages(_cfg(demo_config, out), ("ingest", "screen", "couple"))
    corpus = Corpus(tuple(parse_records((out / "corpus.jsonl").read_bytes(), "jsonl")))
    assert (out / "graph.tsv").read_text() == graph_to_tsv(coupling_graph(build_incidence(corpus)))


def test_min_gain_override(demo_config, tmp_path):
    cfg = _cfg(demo_config, tmp_path / "out", min_gain=1e6)
    assert cfg.min_gain == 1e6
    done = run_stages(cfg, ("ingest", "screen", "couple", "cluster"))
    counts = done["cluster"]["counts"]
    assert counts["communities"] + counts["isolated_nodes"] == 11
    assert all(s == 1 for s in counts["community_sizes"])


def test_config_validation(demo_config, tmp_path):
    data = json.loads(demo_config.read_text())
    with pytest.raises(ConfigError, match="remove_p"):
        load_config(demo_config, overrides={"enter_p": 0.2, "remove_p": 0.1})
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        load_config(data={**data, "bogus": 1}, base=demo_config.parent)
    with pytest.raises(ConfigError, match="effects file not found"):
        load_config(data={**data, "effects": "nope.csv"}, base=demo_config.parent)
    with pytest.raises(ConfigError, match="override"):
        load_config(demo_config, overrides={"nope": 1})


def test_stage_isolation(demo_config, tmp_path):
    out = tmp_path / "out"
    cfg = _cfg(demo_config, out)
    run_stages(cfg)
    before = {p.name: p.read_bytes() for p in out.iterdir() if p.is_file() and p.name != "manifest.json"}
    old = json.loads((out / "manifest.json").read_text())
    run_stages(cfg, ("pool",))
    after = {p.name: p.read_bytes() for p in out.iterdir() if p.is_file() and p.name != "manifest.json"}
    assert before == after
    new = json.loads((out / "manifest.json").read_text())
    assert new["stages"]["couple"] == old["stages"]["couple"]
    assert strip_timestamps(new) == strip_timestamps(old)


def test_schema_mismatch_names_file_and_line(demo_config, tmp_path):
    out = tmp_path / "out"
    cfg = _cfg(demo_config, out)
    run_stages(cfg, STAGES[:4])
    part = out / "partition.csv"
    lines = part.read_text().splitlines()
    lines[2] = lines[2].split(",")[0] + ",two"
    part.write_text("\n".join(lines) + "\n")
    with pytest.raises(StageError) as info:
        run_stages(cfg, ("effects",))
    assert info.value.stage == "effects"
    assert f"{part}:3" in str(info.value.cause)
    assert (out / "quarantine" / "effects").is_dir()
    assert not (out / "effects_validated.csv").exists()


def test_quarantine_keeps_partial_outputs(demo_config, tmp_path, monkeypatch):
    def broken(cfg, st):
        st.text("pooling.csv", "partial\n")
        raise RuntimeError("boom")

    out = tmp_path / "out"
    cfg = _cfg(demo_config, out)
    run_stages(cfg, STAGES[:6])
    monkeypatch.setitem(pipeline.STAGE_FUNCS, "pool", broken)
    with pytest.raises(StageError, match="boom"):
        run_stages(cfg, ("pool",))
    assert (out / "quarantine" / "pool" / "pooling.csv").read_text() == "partial\n"
    assert not (out / "pooling.csv").exists()
    assert "pool" not in json.loads((out / "manifest.json").read_text())["stages"]
    assert not (out / ".litmeta.lock").exists()


def test_lock_blocks_second_run(demo_config, tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    (out / ".litmeta.lock").write_text("123\n")
    with pytest.raises(LockError):
        run_stages(_cfg(demo_config, out))


def test_full_fixture_shape(full_fixture, tmp_path):
    out = tmp_path / "out"
    done = run_stages(_cfg(full_fixture.config_path, out))
    assert done["screen"]["counts"]["records"] == 151
    assert done["screen"]["counts"]["references"] == 5433
    assert done["cluster"]["counts"]["community_sizes"] == [51, 37, 35, 28]
    assert done["effects"]["counts"]["rows_valid"] == {"slow": 3904, "fast": 2065}
    assert done["effects"]["counts"]["studies_total"] == 96
