"""Tests for concept vectors, entity expansion, and the semantic graph."""

import numpy as np
import pytest

from melt.embeddings import EmbeddingTable, nearest_neighbors
from melt.entities import EntityKind, SeedEntity, SeedEntitySet
from melt.graph import (ConceptSpec, ConceptVector, GraphEdge, SemanticGraph,
                        build_semantic_graph, concept_vector,
                        entity_counts_report, expand_entity,
                        load_concept_pairs, node_degrees, save_concept_pairs,
                        save_graph_metadata)
from melt.ingest import VocabEntry, Vocabulary


def _table(words, vectors):
    entries = {w: VocabEntry(i, 10, False) for i, w in enumerate(words)}
    vocab = Vocabulary(entries=entries, total_tokens=10 * len(words))
    vin = np.asarray(vectors, dtype=np.float64)
    return EmbeddingTable(vocab=vocab, input_vectors=vin,
                          output_vectors=np.zeros_like(vin))


def _seeds(*names):
    return SeedEntitySet(entities={
        n: SeedEntity(EntityKind.FORMULA, 1) for n in names
    })


def _random_table(rng, size=30, dim=6):
    words = [f"w{i:03d}" for i in range(size)]
    return _table(words, rng.normal(size=(size, dim)))


class TestConceptVector:
    def test_single_pair_exact_difference(self):
        table = _table(["a", "b"], [[2.0, -1.0], [0.5, 3.0]])
        cv = concept_vector(ConceptSpec("R", (("a", "b"),)), table)
        assert np.array_equal(cv.vector, np.array([1.5, -4.0]))
        assert (cv.used_pairs, cv.dropped_pairs) == (1, 0)

    def test_antisymmetric_pairs_cancel(self):
        table = _table(["a", "b"], [[2.0, -1.0], [0.5, 3.0]])
        cv = concept_vector(ConceptSpec("R", (("a", "b"), ("b", "a"))), table)
        assert np.array_equal(cv.vector, np.zeros(2))

    def test_two_pair_mean(self):
        table = _table(["a", "b", "c", "d"],
                       [[1.0, 0.0], [0.0, 1.0], [2.0, 2.0], [1.0, 1.0]])
        cv = concept_vector(
            ConceptSpec("R", (("a", "b"), ("c", "d"))), table)
        assert np.array_equal(cv.vector, np.array([1.0, 0.0]))
        assert cv.used_pairs == 2

    def test_unembeddable_pairs_dropped_and_counted(self):
        table = _table(["a", "b"], [[1.0, 0.0], [0.0, 1.0]])
        cv = concept_vector(
            ConceptSpec("R", (("a", "b"), ("a", "zz"), ("qq", "b"))), table)
        assert (cv.used_pairs, cv.dropped_pairs) == (1, 2)
        assert np.array_equal(cv.vector, np.array([1.0, -1.0]))

    def test_no_usable_pairs_rejected(self):
        table = _table(["a"], [[1.0, 0.0]])
        with pytest.raises(ValueError, match="no embeddable pairs"):
            concept_vector(ConceptSpec("R", (("zz", "qq"),)), table)

    def test_empty_pairs_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            ConceptSpec("R", ())

    def test_linearity_under_scaling(self):
        rng = np.random.default_rng(3)
        vectors = rng.normal(size=(4, 5))
        spec = ConceptSpec("R", (("a", "b"), ("c", "d")))
        base = concept_vector(spec, _table(list("abcd"), vectors))
        scaled = concept_vector(spec, _table(list("abcd"), 2.5 * vectors))
        np.testing.assert_allclose(scaled.vector, 2.5 * base.vector,
                                   rtol=1e-12)


class TestExpandEntity:
    def test_zero_concept_reduces_to_nearest_neighbors(self):
        rng = np.random.default_rng(9)
        table = _random_table(rng)
        zero = ConceptVector("Z", np.zeros(6), 1, 0)
        expanded = expand_entity("w004", zero, table, k=1)
        direct = nearest_neighbors(table, table.vector("w004"), 1,
                                   exclude=("w004",))
        assert expanded == direct

    def test_matches_brute_force(self):
        rng = np.random.default_rng(21)
        table = _random_table(rng, size=60, dim=7)
        concept = ConceptVector("R", rng.normal(size=7), 1, 0)
        for entity in ("w000", "w017", "w059"):
            query = table.vector(entity) + concept.vector
            got = expand_entity(entity, concept, table, k=9)
            want = []
            for i, word in enumerate(table.vocab.words):
                if word == entity:
                    continue
                row = table.input_vectors[i]
                sim = row @ query / (np.linalg.norm(row) * np.linalg.norm(query))
                want.append((word, float(sim)))
            want.sort(key=lambda t: (-t[1], t[0]))
            assert [w for w, _ in got] == [w for w, _ in want[:9]]
            np.testing.assert_allclose([s for _, s in got],
                                       [s for _, s in want[:9]], atol=1e-12)

    def test_analogy_on_handset_vectors(self):
        # capital = country + (0, 1); offset from one exemplar transfers.
        table = _table(
            ["hanoi", "vietnam", "paris", "france", "noise"],
            [[1.0, 1.0], [1.0, 0.0], [5.0, 1.0], [5.0, 0.0], [-3.0, 2.0]])
        concept = concept_vector(
            ConceptSpec("Capital", (("hanoi", "vietnam"),)), table)
        top = expand_entity("france", concept, table, k=1)
        assert top[0][0] == "paris"
        assert top[0][1] == pytest.approx(1.0)

    def test_degenerate_query_returns_empty(self, caplog):
        table = _table(["s", "o"], [[1.0, 0.0], [0.0, 1.0]])
        concept = ConceptVector("R", np.array([-1.0, 0.0]), 1, 0)
        with caplog.at_level("WARNING", logger="melt.graph"):
            assert expand_entity("s", concept, table, k=2) == []
        assert "degenerate" in caplog.text

    def test_k_validated(self):
        table = _table(["s"], [[1.0, 0.0]])
        zero = ConceptVector("R", np.array([1.0, 1.0]), 1, 0)
        with pytest.raises(ValueError):
            expand_entity("s", zero, table, k=0)

    def test_ranking_scale_invariant(self):
        rng = np.random.default_rng(30)
        vectors = rng.normal(size=(25, 5))
        words = [f"w{i:02d}" for i in range(25)]
        spec = ConceptSpec("R", (("w00", "w01"), ("w02", "w03")))
        base_t = _table(words, vectors)
        scaled_t = _table(words, 3.75 * vectors)
        base = expand_entity("w10", concept_vector(spec, base_t), base_t, 6)
        scaled = expand_entity("w10", concept_vector(spec, scaled_t),
                               scaled_t, 6)
        assert [w for w, _ in base] == [w for w, _ in scaled]
        np.testing.assert_allclose([s for _, s in base],
                                   [s for _, s in scaled], atol=1e-12)


class TestBuildSemanticGraph:
    def test_cardinality_bound(self):
        rng = np.random.default_rng(4)
        table = _random_table(rng, size=10)
        concept = ConceptVector("R", rng.normal(size=6), 1, 0)
        graph = build_semantic_graph(_seeds("w003"), [concept], table, k=3,
                                     min_similarity=-1.0)
        assert len(graph.nodes) <= 4
        assert len(graph.edges) <= 3
        graph.validate()

    def test_no_embedded_seed_rejected(self):
        table = _table(["a"], [[1.0, 0.0]])
        concept = ConceptVector("R", np.array([1.0, 0.0]), 1, 0)
        with pytest.raises(ValueError, match="no seed entity"):
            build_semantic_graph(_seeds("zz"), [concept], table, k=1)

    def test_skipped_seeds_recorded(self):
        rng = np.random.default_rng(5)
        table = _random_table(rng, size=8)
        concept = ConceptVector("R", rng.normal(size=6), 1, 0)
        graph = build_semantic_graph(_seeds("w001", "zz", "aa"), [concept],
                                     table, k=2, min_similarity=-1.0)
        assert graph.skipped_seeds == ["aa", "zz"]
        assert graph.seed_flags["w001"] is True

    def test_min_similarity_floor(self):
        table = _table(
            ["s", "near", "far"],
            [[1.0, 0.0], [0.99, 0.1], [0.1, 0.9]])
        zero = ConceptVector("R", np.zeros(2), 1, 0)
        seeds = _seeds("s")
        floored = build_semantic_graph(seeds, [zero], table, k=3,
                                       min_similarity=0.3)
        assert {e.target for e in floored.edges} == {"near"}
        unfloored = build_semantic_graph(seeds, [zero], table, k=3,
                                         min_similarity=-1.0)
        assert {e.target for e in unfloored.edges} == {"near", "far"}

    def test_expansion_words_flagged_non_seed(self):
        rng = np.random.default_rng(6)
        table = _random_table(rng, size=12)
        concept = ConceptVector("R", rng.normal(size=6), 1, 0)
        graph = build_semantic_graph(_seeds("w000", "w001"), [concept], table,
                                     k=3, min_similarity=-1.0)
        for edge in graph.edges:
            assert graph.seed_flags[edge.source] is True
        expansion_only = {n for n in graph.nodes if not graph.seed_flags[n]}
        assert expansion_only.isdisjoint({"w000", "w001"})

    def test_well_formed_on_random_inputs(self):
        rng = np.random.default_rng(77)
        for _ in range(15):
            size = int(rng.integers(5, 25))
            table = _random_table(rng, size=size)
            concepts = [
                ConceptVector(f"C{j}", rng.normal(size=6), 1, 0)
                for j in range(int(rng.integers(1, 4)))
            ]
            seed_words = rng.choice(table.vocab.words,
                                    size=int(rng.integers(1, 4)),
                                    replace=False)
            graph = build_semantic_graph(
                _seeds(*seed_words), concepts, table,
                k=int(rng.integers(1, 5)),
                min_similarity=float(rng.choice([-1.0, 0.0, 0.3])))
            graph.validate()

    def test_monotone_total_unique_in_k(self):
        rng = np.random.default_rng(8)
        table = _random_table(rng, size=40)
        concept = ConceptVector("R", rng.normal(size=6), 1, 0)
        seeds = _seeds("w000", "w010", "w020")
        totals = []
        for k in range(1, 6):
            graph = build_semantic_graph(seeds, [concept], table, k=k,
                                         min_similarity=-1.0)
            totals.append(entity_counts_report(graph, seeds)["total_unique"])
        assert totals == sorted(totals)

    def test_expansion_grows_unique_count(self):
        rng = np.random.default_rng(14)
        table = _random_table(rng, size=20)
        seeds = _seeds("w000")
        concept = ConceptVector("R", rng.normal(size=6), 1, 0)
        graph = build_semantic_graph(seeds, [concept], table, k=4,
                                     min_similarity=-1.0)
        report = entity_counts_report(graph, seeds)
        assert report["total_unique"] > report["seed_count"]


class TestNodeDegrees:
    def test_single_edge(self):
        graph = SemanticGraph(
            nodes={"a", "b"},
            edges=[GraphEdge("a", "b", "R", 0.5)],
            seed_flags={"a": True, "b": False})
        assert node_degrees(graph) == {"a": 1, "b": 1}

    def test_star(self):
        leaves = [f"l{i}" for i in range(5)]
        graph = SemanticGraph(
            nodes={"c", *leaves},
            edges=[GraphEdge("c", leaf, "R", 0.5) for leaf in leaves],
            seed_flags={n: n == "c" for n in ["c", *leaves]})
        degrees = node_degrees(graph)
        assert degrees["c"] == 5
        assert all(degrees[leaf] == 1 for leaf in leaves)

    def test_isolated_node_zero(self):
        graph = SemanticGraph(nodes={"a"}, edges=[], seed_flags={"a": True})
        assert node_degrees(graph) == {"a": 0}

    def test_handshake_lemma_random_graphs(self):
        rng = np.random.default_rng(123)
        for _ in range(20):
            n = int(rng.integers(2, 15))
            nodes = [f"n{i}" for i in range(n)]
            edges = []
            seen = set()
            for _ in range(int(rng.integers(0, 30))):
                a, b = rng.choice(n, size=2, replace=False)
                key = (nodes[a], nodes[b], "R")
                if key in seen:
                    continue
                seen.add(key)
                edges.append(GraphEdge(nodes[a], nodes[b], "R", 0.5))
            graph = SemanticGraph(nodes=set(nodes), edges=edges,
                                  seed_flags={x: True for x in nodes})
            graph.validate()
            assert sum(node_degrees(graph).values()) == 2 * len(edges)


class TestEntityCounts:
    def test_no_expansion(self):
        graph = SemanticGraph(nodes={"a", "b"}, edges=[],
                              seed_flags={"a": True, "b": True})
        report = entity_counts_report(graph, _seeds("a", "b"))
        assert report == {"seed_count": 2, "expanded_count": 0,
                          "total_unique": 2}

    def test_disjoint_expansion_upper_bound(self):
        seeds = _seeds("s1", "s2")
        nodes = {"s1", "s2", "x1", "x2", "x3", "x4"}
        graph = SemanticGraph(
            nodes=nodes,
            edges=[GraphEdge("s1", "x1", "R", 0.5),
                   GraphEdge("s1", "x2", "R", 0.5),
                   GraphEdge("s2", "x3", "R", 0.5),
                   GraphEdge("s2", "x4", "R", 0.5)],
            seed_flags={n: n.startswith("s") for n in nodes})
        report = entity_counts_report(graph, seeds)
        assert report == {"seed_count": 2, "expanded_count": 4,
                          "total_unique": 6}


class TestGraphSerialization:
    def _graph(self):
        rng = np.random.default_rng(2)
        table = _random_table(rng, size=15)
        concept = ConceptVector("R", rng.normal(size=6), 1, 0)
        return build_semantic_graph(_seeds("w002", "w007", "zz"), [concept],
                                    table, k=3, min_similarity=-1.0)

    def test_roundtrip(self, tmp_path):
        graph = self._graph()
        graph.save(tmp_path)
        loaded = SemanticGraph.load(tmp_path)
        loaded.validate()
        assert loaded.nodes == graph.nodes
        assert loaded.seed_flags == graph.seed_flags
        assert loaded.skipped_seeds == graph.skipped_seeds
        assert {(e.source, e.target, e.concept) for e in loaded.edges} == \
            {(e.source, e.target, e.concept) for e in graph.edges}
        by_key = {(e.source, e.target, e.concept): e.similarity
                  for e in graph.edges}
        for e in loaded.edges:
            assert e.similarity == pytest.approx(
                by_key[(e.source, e.target, e.concept)], rel=1e-5)

    def test_serialization_deterministic(self, tmp_path):
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        self._graph().save(a_dir)
        self._graph().save(b_dir)
        for name in ("edges.tsv", "nodes.tsv", "skipped.tsv"):
            assert (a_dir / name).read_bytes() == (b_dir / name).read_bytes()

    def test_file_headers(self, tmp_path):
        self._graph().save(tmp_path)
        assert (tmp_path / "edges.tsv").read_text() \
            .startswith("#from\tto\tconcept\tsimilarity\n")
        assert (tmp_path / "nodes.tsv").read_text() \
            .startswith("#entity\tdegree\tis_seed\n")

    def test_metadata_file(self, tmp_path):
        import json
        graph = self._graph()
        report = entity_counts_report(graph, _seeds("w002", "w007", "zz"))
        save_graph_metadata(
            tmp_path, topk=3, min_similarity=-1.0,
            concepts=[ConceptVector("R", np.zeros(2), 4, 1)], report=report)
        meta = json.loads((tmp_path / "meta.json").read_text())
        assert meta["topk"] == 3
        assert meta["concepts"] == [
            {"name": "R", "used_pairs": 4, "dropped_pairs": 1}]
        assert meta["entity_counts"] == report


class TestConceptPairsIO:
    def test_roundtrip_first_appearance_order(self, tmp_path):
        specs = [
            ConceptSpec("Property", (("capacity", "LiCoO2"),
                                     ("permittivity", "BaTiO3"))),
            ConceptSpec("Application", (("cathode", "LiCoO2"),)),
        ]
        path = tmp_path / "pairs.tsv"
        save_concept_pairs(specs, path)
        loaded = load_concept_pairs(path)
        assert loaded == specs

    def test_malformed_row_rejected(self, tmp_path):
        path = tmp_path / "pairs.tsv"
        path.write_text("Property\tonly-two-fields\n")
        with pytest.raises(ValueError, match="3 tab-separated"):
            load_concept_pairs(path)

    def test_comments_ignored(self, tmp_path):
        path = tmp_path / "pairs.tsv"
        path.write_text("#concept\tsubject\tobject\nR\ta\tb\n\nR\tc\td\n")
        assert load_concept_pairs(path) == [
            ConceptSpec("R", (("a", "b"), ("c", "d")))]
