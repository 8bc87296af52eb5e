import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from litmeta.corpus import (BibParseError, Corpus, CorpusError, DuplicateKeyError, Record,
                            ScreeningLedger, dedupe, normalize_author, normalize_reference_key,
                            parse_records, read_ledger_csv, records_to_jsonl, reference_key, screen)

TWO = b"""@article{smith2010,
  title = {Rainfall  and Migration},
  author = {Smith, John and Maria Garcia},
  year = {2010},
  journal = {Journal of Things},
  keywords = {Climate, Migration},
  cites = {Doe_2001_Floods, roe_1999_drought},
  citations = {12},
  impactfactor = {1.5}
}
@techreport{lee2012,
  title = "Working paper on drought",
  author = {Lee, K.},
  year = 2012
}
"""


def test_parse_two_entries():
    recs = parse_records(TWO)
    assert [r.id for r in recs] == ["smith2010", "lee2012"]
    a, b = recs
    assert a.authors == ("smith, john", "garcia, maria")
    assert a.title == "Rainfall and Migration"
    assert a.references == {"doe_2001_floods", "roe_1999_drought"}
    assert a.keywords == {"climate", "migration"}
    assert (a.global_citations, a.impact_factor, a.published) == (12, 1.5, True)
    assert (b.published, b.impact_factor, b.global_citations) == (False, 0.0, 0)
    assert a.key == "smith_2010_rainfall"


def test_empty_stream():
    assert parse_records(b"") == []
    assert parse_records(b"", "jsonl") == []


def test_unbalanced_braces_reports_offset():
    data = b"@article{ok, title={A}, year={2000}}\n@article{bad, title = {Oops, year={2001}\n"
    with pytest.raises(BibParseError) as info:
        parse_records(data)
    assert info.value.entry_index == 1
    assert info.value.offset == data.index(b"{Oops")


def test_offsets_are_bytes_not_characters():
    data = "@article{a, title={Émigration}, year={2000}}\n@article{b, title={x} year={1}}".encode()
    with pytest.raises(BibParseError) as info:
        parse_records(data)
    assert info.value.offset == data.index(b"year={1}")


def test_duplicate_key_lists_both_occurrences():
    data = b"@article{k, title={A}, year={2000}}\n@article{k, title={B}, year={2001}}\n"
    with pytest.raises(DuplicateKeyError) as info:
        parse_records(data)
    assert info.value.offsets == (0, data.index(b"@article{k, title={B}"))


def test_unknown_field_warns(caplog):
    parse_records(b"@article{k, title={A}, year={2000}, doi={10.1/x}}")
    assert "doi" in caplog.text


def test_normalization():
    assert normalize_author("  Jane   Q. Public ") == "public, jane q."
    assert normalize_author("{van Dyk}, A.") == "van dyk, a."
    assert normalize_reference_key(" Müller_2005_Floods ") == "muller_2005_floods"
    assert reference_key("Müller, J.", 2005, "The, floods!") == "muller_2005_the"


def test_record_invariants():
    r = Record("p1", "T", ("a, b.",), 2000, references=frozenset({"p1", "x_1_y", "a_2000_t"}))
    assert r.references == {"x_1_y"}
    with pytest.raises(CorpusError):
        Record("p", "T", year=1800)
    with pytest.raises(CorpusError):
        Record("p", "T", global_citations=-1)
    with pytest.raises(CorpusError):
        Corpus((Record("p", "A"), Record("p", "B")))


def _rec(i, title, year=2000, nrefs=1):
    return Record(i, title, ("x, y.",), year, references=frozenset(f"r_{k}_{i}" for k in range(nrefs)))


def test_dedupe_rule():
    corpus, removed = dedupe([_rec("b", "Same  Title", nrefs=5), _rec("a", "same title", nrefs=3)])
    assert [r.id for r in corpus] == ["b"] and [r.id for r in removed] == ["a"]
    corpus, removed = dedupe([_rec("b", "T"), _rec("a", "t")])
    assert [r.id for r in corpus] == ["a"]
    assert corpus.ledger.stages[0].stage == "deduplication"


def test_dedupe_planted_duplicates():
    recs = [_rec(f"r{i:03d}", f"title {i}") for i in range(200)]
    recs += [_rec(f"d{i}", f"TITLE {i}") for i in (5, 50, 150)]
    corpus, removed = dedupe(recs)
    assert len(corpus) == 200 and len(removed) == 3
    again, removed2 = dedupe(corpus.records)
    assert removed2 == [] and again.records == corpus.records


def test_screen_examples():
    corpus, _ = dedupe([_rec(f"r{i:03d}", f"title {i}") for i in range(203)])
    out = screen(corpus, "title_screen", [f"r{i:03d}" for i in range(20)], "off topic")
    assert len(out) == 183
    assert out.ledger.stages[-1].entered == 203 and out.ledger.final_count == 183
    same = screen(out, "noop", [])
    assert len(same) == 183 and same.ledger.stages[-1].excluded == 0
    with pytest.raises(CorpusError, match="nope"):
        screen(out, "bad", ["nope"])
    with pytest.raises(CorpusError):
        screen(out, "title_screen", [])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 30), max_size=5))
def test_ledger_telescopes(cuts):
    corpus, _ = dedupe([_rec(f"r{i:03d}", f"t {i}") for i in range(120)])
    for n, cut in enumerate(cuts):
        corpus = screen(corpus, f"s{n}", corpus.ids[:cut])
    first = corpus.ledger.stages[0].entered
    assert first - sum(s.excluded for s in corpus.ledger.stages) == len(corpus)
    assert read_ledger_csv(corpus.ledger.to_csv()) == corpus.ledger


def test_ledger_rejects_inconsistent_counts():
    from litmeta.corpus import LedgerStage

    with pytest.raises(CorpusError):
        ScreeningLedger((LedgerStage("a", 10, 2), LedgerStage("b", 9, 0)))


names = st.text("abcdefgh ", min_size=1, max_size=12).filter(str.strip)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.builds(
    Record,
    id=st.text("abcxyz0123", min_size=1, max_size=6),
    title=names,
    authors=st.lists(names, max_size=3).map(tuple),
    year=st.integers(1900, 2100),
    global_citations=st.integers(0, 10_000),
    impact_factor=st.floats(0, 50),
    references=st.frozensets(st.text("abc_019", min_size=1, max_size=8), max_size=5),
    keywords=st.frozensets(names, max_size=3),
), max_size=6, unique_by=lambda r: r.id))
def test_jsonl_roundtrip(records):
    assert parse_records(records_to_jsonl(records), "jsonl") == records
