import numpy as np
import pytest

from litmeta.corpus import Corpus, Record
from litmeta.coupling import (association_strength, build_incidence, coupling_graph, graph_stats,
                              graph_to_graphml, graph_to_tsv, read_graph_tsv)
from oracles import brute_coupling


def random_corpus(rng, n_papers=None, n_refs=None):
    n_papers = n_papers or int(rng.integers(1, 51))
    n_refs = n_refs or int(rng.integers(1, 201))
    recs = []
    for i in range(n_papers):
        k = int(rng.integers(0, min(n_refs, 25) + 1))
        refs = {f"ref_{j}_x" for j in rng.choice(n_refs, size=k, replace=False)}
        recs.append(Record(f"p{i:03d}", f"paper {i}", ("a, b.",), 2000, references=frozenset(refs)))
    order = rng.permutation(n_papers)
    return Corpus(tuple(recs[i] for i in order))


def test_incidence_shape_and_cells():
    c = Corpus((Record("b", "B", references=frozenset({"x_1_a", "y_1_a"})),
                Record("a", "A", references=frozenset({"y_1_a"}))))
    inc = build_incidence(c)
    assert inc.paper_ids == ("a", "b")
    assert inc.reference_keys == ("x_1_a", "y_1_a")
    assert inc.to_dense().tolist() == [[0, 1], [1, 1]]


def test_against_brute_force_oracle():
    rng = np.random.default_rng(6)
    for _ in range(30):
        corpus = random_corpus(rng)
        g = coupling_graph(build_incidence(corpus))
        ids = list(g.node_ids)
        refs = [corpus.by_id()[i].references for i in ids]
        expect = brute_coupling(refs)
        assert g.raw_weights == {(ids[i], ids[j]): v for (i, j), v in expect.items()}
        for (i, j), w in g.norm_weights.items():
            a, b = ids.index(i), ids.index(j)
            assert w == expect[(a, b)] / (len(refs[a]) * len(refs[b]))
        assert g.self_counts.tolist() == [len(r) for r in refs]


def test_invariants():
    rng = np.random.default_rng(7)
    corpus = random_corpus(rng, 40, 60)
    g = coupling_graph(build_incidence(corpus))
    assert np.all(g.edge_i < g.edge_j)
    assert np.all(g.raw <= np.minimum(g.self_counts[g.edge_i], g.self_counts[g.edge_j]))
    assert np.all(g.raw > 0)
    indptr, indices, weights = g.csr("raw")
    dense = np.zeros((g.n_nodes, g.n_nodes))
    for i in range(g.n_nodes):
        dense[i, indices[indptr[i]:indptr[i + 1]]] = weights[indptr[i]:indptr[i + 1]]
    assert np.array_equal(dense, dense.T) and np.all(np.diag(dense) == 0)


def test_association_strength_formula():
    assert association_strength(3, 4, 5) == 3 / 20
    assert association_strength(0, 1, 1) == 0.0


def test_disjoint_and_empty():
    c = Corpus((Record("a", "A", references=frozenset({"x_1_a"})),
                Record("b", "B", references=frozenset({"y_1_a"})), Record("c", "C")))
    g = coupling_graph(build_incidence(c))
    assert g.n_edges == 0 and g.isolated() == ["a", "b", "c"]
    stats = graph_stats(g)
    assert stats["nodes"] == 3 and stats["edges"] == 0 and stats["isolated_nodes"] == 3
    with pytest.raises(ValueError):
        build_incidence(Corpus())


def test_stats_and_serialization(tmp_path):
    rng = np.random.default_rng(8)
    corpus = random_corpus(rng, 20, 15)
    g = coupling_graph(build_incidence(corpus))
    stats = graph_stats(g)
    assert stats["edges"] == g.n_edges and stats["max_raw_weight"] == int(g.raw.max())
    assert sum(stats["weight_histogram"].values()) == g.n_edges
    path = tmp_path / "graph.tsv"
    path.write_text(graph_to_tsv(g))
    back = read_graph_tsv(path, corpus)
    assert back.raw_weights == g.raw_weights
    assert np.array_equal(back.norm, g.norm)
    xml = graph_to_graphml(g)
    assert xml.count("<edge ") == g.n_edges and xml.count("<node ") == g.n_nodes


def test_read_graph_tsv_schema_error(tmp_path):
    from litmeta._io import ArtifactSchemaError

    corpus = Corpus((Record("a", "A"), Record("b", "B")))
    path = tmp_path / "g.tsv"
    path.write_text("source\ttarget\traw_weight\tnorm_weight\na\tzz\t1\t0.5\n")
    with pytest.raises(ArtifactSchemaError, match=r"g.tsv:2"):
        read_graph_tsv(path, corpus)
