"""Tests for entity indexing, mask calibration, and dataset emission."""

import json
import random

import pytest

from melt.curriculum import make_plan
from melt.masking import (DIFF_ANCHOR_COUNT, EntityOccurrence, MaskedExample,
                          MaskingConfig, PackedSequence, _EntityMatcher,
                          calibrate_mask_probability, emit_dataset,
                          entity_stage_map, index_entities,
                          load_frequency_table, mask_sequence, overlap_ratio,
                          pack_sequences, read_conll, read_dataset,
                          select_anchor_words)
from melt.rng import SplitMix64

SENTINEL = "[MASK]"


def _matcher(strata):
    return _EntityMatcher(entity_stage_map(strata))


def _occ_tuples(occurrences):
    return [(o.start, o.end, o.entity, o.stage) for o in occurrences]


class TestPackSequences:
    def test_windows_within_document(self):
        docs = [("d1", [[f"a{i}" for i in range(10)],
                        [f"b{i}" for i in range(10)]]),
                ("d2", [[f"c{i}" for i in range(12)]])]
        packed = pack_sequences(docs, sequence_length=8)
        assert [p.sequence_id for p in packed] == [
            "d1:00000", "d1:00001", "d2:00000",
        ]
        assert [len(p.tokens) for p in packed] == [8, 8, 8]
        # second d1 window continues the same document
        assert packed[1].tokens[0] == "a8"
        # d2's 4-token tail is below the min_tail of 8 and dropped
        assert all(not p.tokens[0].startswith("c4") for p in packed)

    def test_short_tail_kept_at_min(self):
        packed = pack_sequences([("d", [[f"t{i}" for i in range(20)]])],
                                sequence_length=12, min_tail=8)
        assert [len(p.tokens) for p in packed] == [12, 8]

    def test_empty_document_yields_nothing(self):
        assert pack_sequences([("d", [[]])], sequence_length=8) == []


class TestIndexEntities:
    def test_stage_annotation(self):
        matcher = _matcher([["LiCoO2"], ["cathode"]])
        occurrences = index_entities(["LiCoO2", "cathode"], matcher)
        assert _occ_tuples(occurrences) == [
            (0, 1, "LiCoO2", 1), (1, 2, "cathode", 2),
        ]

    def test_no_entities(self):
        matcher = _matcher([["LiCoO2"]])
        assert index_entities(["water", "boils"], matcher) == []

    def test_longest_match_beats_substring(self):
        matcher = _matcher([["melting point", "point"]])
        occurrences = index_entities(
            ["the", "melting", "point", "rises"], matcher)
        assert _occ_tuples(occurrences) == [(1, 3, "melting point", 1)]

    def test_lowercase_canonical_matches_capitalized_surface(self):
        matcher = _matcher([["cathode"]])
        occurrences = index_entities(["Cathode", "materials"], matcher)
        assert _occ_tuples(occurrences) == [(0, 1, "cathode", 1)]

    def test_cased_canonical_requires_exact_surface(self):
        matcher = _matcher([["LiCoO2"]])
        assert index_entities(["licoo2"], matcher) == []
        assert _occ_tuples(index_entities(["LiCoO2"], matcher)) == \
            [(0, 1, "LiCoO2", 1)]

    def test_occurrences_non_overlapping(self):
        matcher = _matcher([["a b", "b c", "c"]])
        occurrences = index_entities(["a", "b", "c"], matcher)
        assert _occ_tuples(occurrences) == [(0, 2, "a b", 1), (2, 3, "c", 1)]


class TestCalibration:
    def test_half_probability(self):
        assert calibrate_mask_probability(300, 1000, 0.15) == (0.5, False)

    def test_exact_budget(self):
        assert calibrate_mask_probability(150, 1000, 0.15) == (1.0, False)

    def test_shortfall_flagged(self):
        assert calibrate_mask_probability(50, 1000, 0.15) == (1.0, True)

    def test_zero_entity_tokens(self):
        assert calibrate_mask_probability(0, 1000, 0.15) == (0.0, True)

    def test_zero_total_rejected(self):
        with pytest.raises(ValueError):
            calibrate_mask_probability(10, 0, 0.15)


class TestMaskedExample:
    def _example(self):
        return MaskedExample("s0", (SENTINEL, "b", SENTINEL), (0, 2),
                             ("a", "c"), 1, "melt")

    def test_reconstruct(self):
        assert self._example().reconstruct() == ["a", "b", "c"]

    def test_json_roundtrip_and_fields(self):
        example = self._example()
        doc = json.loads(example.to_json())
        assert set(doc) == {"id", "tokens", "masked_positions", "targets",
                            "stage", "strategy"}
        assert MaskedExample.from_json(example.to_json()) == example

    def test_misaligned_targets_rejected(self):
        with pytest.raises(ValueError, match="align"):
            MaskedExample("s", ("x",), (0,), (), 1, "melt")

    def test_unsorted_positions_rejected(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            MaskedExample("s", (SENTINEL, SENTINEL), (1, 0), ("a", "b"),
                          1, "melt")

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            MaskedExample("s", ("x",), (3,), ("y",), 1, "melt")


class TestMaskSequence:
    CFG = MaskingConfig(target_token_ratio=0.15, sequence_length=8, seed=1)

    def test_exact_budget_masks_entities_only(self):
        tokens = tuple(f"t{i}" for i in range(17)) + ("e1", "e2", "e3")
        seq = PackedSequence("s", tokens)
        occurrences = [EntityOccurrence(17, 20, "e1 e2 e3", 1)]
        example = mask_sequence(seq, occurrences, stage=1, p_m=1.0,
                                cfg=self.CFG, rng=SplitMix64(7))
        assert example.masked_positions == (17, 18, 19)
        assert example.targets == ("e1", "e2", "e3")

    def test_zero_probability_randomizes(self):
        tokens = tuple(f"t{i}" for i in range(18)) + ("e1", "e2")
        occurrences = [EntityOccurrence(18, 20, "e1 e2", 1)]
        example = mask_sequence(PackedSequence("s", tokens), occurrences,
                                stage=1, p_m=0.0, cfg=self.CFG,
                                rng=SplitMix64(3))
        assert 0 < len(example.masked_positions) <= 4
        assert not set(example.masked_positions) & {18, 19}

    def test_stage_zero_masks_randomly(self):
        seq = PackedSequence("s", tuple(f"t{i}" for i in range(40)))
        example = mask_sequence(seq, [], stage=0, p_m=0.0, cfg=self.CFG,
                                rng=SplitMix64(5))
        assert len(example.masked_positions) in (6, 7)  # 0.15 * 40 = 6
        assert all(t == SENTINEL for i, t in enumerate(example.tokens)
                   if i in example.masked_positions)

    def test_later_stage_entity_not_yet_eligible(self):
        tokens = tuple(f"t{i}" for i in range(19)) + ("late",)
        occurrences = [EntityOccurrence(19, 20, "late", 2)]
        cfg = MaskingConfig(target_token_ratio=0.15, sequence_length=8,
                            fallback_random_fill=False)
        example = mask_sequence(PackedSequence("s", tokens), occurrences,
                                stage=1, p_m=1.0, cfg=cfg, rng=SplitMix64(1))
        assert example.masked_positions == ()
        stage2 = mask_sequence(PackedSequence("s", tokens), occurrences,
                               stage=2, p_m=1.0, cfg=cfg, rng=SplitMix64(1))
        assert stage2.masked_positions == (19,)

    def test_short_sequence_skipped(self):
        assert mask_sequence(PackedSequence("s", ("one",)), [], 1, 1.0,
                             self.CFG, SplitMix64(1)) is None

    def test_whole_span_invariant(self):
        rng_py = random.Random(11)
        for trial in range(40):
            n = rng_py.randint(10, 60)
            tokens = [f"t{i}" for i in range(n)]
            occurrences = []
            i = 0
            while i < n - 3:
                if rng_py.random() < 0.2:
                    length = rng_py.randint(1, 3)
                    occurrences.append(EntityOccurrence(
                        i, i + length, " ".join(tokens[i:i + length]),
                        rng_py.randint(1, 2)))
                    i += length
                else:
                    i += 1
            example = mask_sequence(
                PackedSequence("s", tuple(tokens)), occurrences,
                stage=rng_py.randint(1, 2), p_m=rng_py.random(),
                cfg=self.CFG, rng=SplitMix64(trial))
            masked = set(example.masked_positions)
            for occ in occurrences:
                span = set(range(occ.start, occ.end))
                assert span <= masked or span.isdisjoint(masked)
            assert example.reconstruct() == tokens
            for pos in example.masked_positions:
                assert example.tokens[pos] == SENTINEL

    def test_budget_monte_carlo(self):
        rng_py = random.Random(2024)
        entities = [f"ent{i}" for i in range(8)]
        total_tokens = 0
        entity_tokens = 0
        sequences = []
        for s in range(1000):
            tokens = []
            for _ in range(40):
                if rng_py.random() < 0.08:
                    tokens.append(rng_py.choice(entities))
                else:
                    tokens.append(f"w{rng_py.randint(0, 199):03d}")
            sequences.append(PackedSequence(f"s{s}", tuple(tokens)))
            total_tokens += 40
            entity_tokens += sum(t.startswith("ent") for t in tokens)
        matcher = _matcher([entities])
        indexed = [index_entities(s.tokens, matcher) for s in sequences]
        p_m, _need = calibrate_mask_probability(entity_tokens, total_tokens,
                                                0.15)
        rng = SplitMix64(99)
        masked = 0
        for seq, occurrences in zip(sequences, indexed):
            example = mask_sequence(seq, occurrences, 1, p_m, self.CFG, rng)
            masked += len(example.masked_positions)
        assert 0.14 <= masked / total_tokens <= 0.16


class TestAnchors:
    def test_absent_from_generic_ranks_first(self):
        anchors = select_anchor_words({"x": 50, "y": 50}, {"y": 50}, count=2)
        assert anchors == ["x", "y"]

    def test_exact_count(self):
        target = {f"w{i:02d}": 100 - i for i in range(40)}
        assert len(select_anchor_words(target, {})) == DIFF_ANCHOR_COUNT

    def test_frequency_table_io(self, tmp_path):
        path = tmp_path / "freqs.tsv"
        path.write_text("#word\tcount\nthe\t5000\nof\t3000\n")
        assert load_frequency_table(path) == {"the": 5000, "of": 3000}


def _toy_corpus(n_docs=30, sentence_len=24, entity_rate=0.25, seed=5,
                filler_types=50):
    """Docs whose tokens mix filler words with single-token entities."""
    rng_py = random.Random(seed)
    entities = [f"ent{i}" for i in range(6)]
    docs = []
    for d in range(n_docs):
        tokens = []
        for _ in range(sentence_len):
            if rng_py.random() < entity_rate:
                tokens.append(rng_py.choice(entities))
            else:
                tokens.append(f"w{rng_py.randint(0, filler_types - 1):03d}")
        docs.append((f"doc{d:03d}", [tokens]))
    return docs, entities


def _toy_plan(entities, k=3, warmup=10, stage=10, total=70, **kw):
    degrees = {e: len(entities) - i for i, e in enumerate(entities)}
    return make_plan("node-degree", degrees, k=k, warmup_steps=warmup,
                     stage_steps=stage, total_steps=total, **kw)


class TestEmitDataset:
    def test_phase_labels_default_schedule(self, tmp_path):
        docs, entities = _toy_corpus(n_docs=4)
        plan = _toy_plan(entities, warmup=10_000, stage=10_000, total=100_000)
        cfg = MaskingConfig(sequence_length=24, seed=1)
        manifest = emit_dataset(docs, plan, cfg, tmp_path)
        assert [p["label"] for p in manifest["phases"]] == [
            "warmup", "s1", "s2", "s3", "s1", "s2", "s3", "s1", "s2", "s3",
        ]
        assert manifest["phases"][-1]["end"] == 100_000

    def test_stage_datasets_written_with_stats(self, tmp_path):
        docs, entities = _toy_corpus()
        plan = _toy_plan(entities)
        cfg = MaskingConfig(sequence_length=24, seed=3)
        manifest = emit_dataset(docs, plan, cfg, tmp_path)
        for stage in range(4):
            assert (tmp_path / f"stage{stage}_shard0.jsonl").exists()
        for label in ("warmup", "s1", "s2", "s3"):
            stats = manifest["datasets"][label]
            assert stats["examples"] == 30
            assert 0.0 <= stats["realized_ratio"] <= 1.0
        assert manifest["datasets"]["warmup"]["p_m"] is None
        assert manifest["datasets"]["s1"]["p_m"] > 0

    def test_realized_ratio_within_one_percent(self, tmp_path):
        docs, entities = _toy_corpus(n_docs=400, sentence_len=40,
                                     entity_rate=0.08)
        plan = _toy_plan(entities)
        cfg = MaskingConfig(sequence_length=40, seed=2)
        manifest = emit_dataset(docs, plan, cfg, tmp_path)
        for label, stats in manifest["datasets"].items():
            assert 0.14 <= stats["realized_ratio"] <= 0.16, label

    def test_reconstruction_audit(self, tmp_path):
        docs, entities = _toy_corpus()
        plan = _toy_plan(entities)
        emit_dataset(docs, plan, MaskingConfig(sequence_length=24, seed=9),
                     tmp_path)
        examples = read_dataset(tmp_path)
        assert examples
        originals = {}
        for doc_id, sentences in docs:
            originals[f"{doc_id}:00000"] = list(sentences[0])
        for example in examples:
            assert example.reconstruct() == originals[example.sequence_id]

    def test_deterministic_bytes(self, tmp_path):
        docs, entities = _toy_corpus()
        plan = _toy_plan(entities)
        cfg = MaskingConfig(sequence_length=24, seed=4)
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        emit_dataset(docs, plan, cfg, a_dir)
        emit_dataset(docs, plan, cfg, b_dir)
        a_files = sorted(p.name for p in a_dir.iterdir())
        assert a_files == sorted(p.name for p in b_dir.iterdir())
        for name in a_files:
            assert (a_dir / name).read_bytes() == (b_dir / name).read_bytes()

    def test_shard_count_changes_grouping_not_content(self, tmp_path):
        docs, entities = _toy_corpus()
        plan = _toy_plan(entities)
        cfg = MaskingConfig(sequence_length=24, seed=4)
        one, three = tmp_path / "one", tmp_path / "three"
        emit_dataset(docs, plan, cfg, one, shards=1)
        emit_dataset(docs, plan, cfg, three, shards=3)
        assert len(list(three.glob("stage1_shard*.jsonl"))) == 3
        ids_one = {(e.sequence_id, e.stage) for e in read_dataset(one)}
        ids_three = {(e.sequence_id, e.stage) for e in read_dataset(three)}
        assert ids_one == ids_three

    def test_eligibility_sets_nested(self, tmp_path):
        docs, entities = _toy_corpus()
        plan = _toy_plan(entities)
        stages = entity_stage_map(plan.strata)
        matcher = _EntityMatcher(stages)
        sequences = pack_sequences(docs, 24)
        occurrences = [o for s in sequences
                       for o in index_entities(s.tokens, matcher)]
        for i in range(1, plan.k):
            eligible_i = {o.entity for o in occurrences if o.stage <= i}
            eligible_next = {o.entity for o in occurrences if o.stage <= i + 1}
            assert eligible_i <= eligible_next

    def test_empty_corpus_rejected(self, tmp_path):
        plan = _toy_plan(["e1", "e2", "e3"])
        with pytest.raises(ValueError, match="empty corpus"):
            emit_dataset([], plan, MaskingConfig(), tmp_path)

    def test_unknown_strategy_rejected(self, tmp_path):
        docs, entities = _toy_corpus(n_docs=2)
        plan = _toy_plan(entities)
        with pytest.raises(ValueError, match="unknown masking strategy"):
            emit_dataset(docs, plan, MaskingConfig(), tmp_path,
                         strategy="span-bert")


class TestBaselineStrategies:
    def test_random_baseline_ratio(self, tmp_path):
        docs, entities = _toy_corpus(n_docs=200, sentence_len=40)
        plan = _toy_plan(entities)
        manifest = emit_dataset(docs, plan,
                                MaskingConfig(sequence_length=40, seed=6),
                                tmp_path, strategy="random")
        for stats in manifest["datasets"].values():
            assert 0.14 <= stats["realized_ratio"] <= 0.16

    def test_random_baseline_stage_independent(self, tmp_path):
        docs, entities = _toy_corpus(n_docs=10)
        plan = _toy_plan(entities)
        emit_dataset(docs, plan, MaskingConfig(sequence_length=24, seed=6),
                     tmp_path, strategy="random")
        by_stage = {}
        for example in read_dataset(tmp_path):
            by_stage.setdefault(example.stage, {}) \
                [example.sequence_id] = example.masked_positions
        # same derived stream per stage index, so masks differ across
        # stages but ignore the entity structure entirely
        assert set(by_stage) == {0, 1, 2, 3}

    def test_entity_only_uses_seeds_not_expansion(self, tmp_path):
        docs, entities = _toy_corpus(n_docs=60, entity_rate=0.3)
        plan = _toy_plan(entities)
        seeds = entities[:2]
        emit_dataset(docs, plan, MaskingConfig(sequence_length=24, seed=8),
                     tmp_path, strategy="entity-only", seed_entities=seeds)
        seed_set = set(seeds)
        nonseed = set(entities) - seed_set
        for example in read_dataset(tmp_path):
            original = example.reconstruct()
            masked_words = {original[p] for p in example.masked_positions}
            # non-seed entities may only be hit by random fill; seed
            # entities are the only systematically masked group
            assert example.strategy == "entity-only"
            if example.stage >= 1:
                for occ_word in masked_words & nonseed:
                    # random fill avoids indexed entity positions entirely
                    assert occ_word not in seed_set

    def test_diff_masking_anchors_and_ratio(self, tmp_path):
        # anchors must cover < 25% of tokens or masking them all
        # overshoots the budget before any fill happens
        docs, entities = _toy_corpus(n_docs=300, sentence_len=40,
                                     entity_rate=0.10, filler_types=1000)
        plan = _toy_plan(entities)
        generic = {f"w{i:03d}": 1000 for i in range(1000)}
        manifest = emit_dataset(docs, plan,
                                MaskingConfig(sequence_length=40, seed=7),
                                tmp_path, strategy="diff-masking",
                                generic_freqs=generic)
        assert len(manifest["anchors"]) == DIFF_ANCHOR_COUNT
        assert set(entities) <= set(manifest["anchors"])
        assert manifest["target_token_ratio"] == 0.25
        for stats in manifest["datasets"].values():
            assert 0.24 <= stats["realized_ratio"] <= 0.26

    def test_diff_masking_masks_every_anchor_occurrence(self, tmp_path):
        docs, entities = _toy_corpus(n_docs=20, entity_rate=0.2)
        plan = _toy_plan(entities)
        generic = {f"w{i:03d}": 1000 for i in range(50)}
        manifest = emit_dataset(docs, plan,
                                MaskingConfig(sequence_length=24, seed=7),
                                tmp_path, strategy="diff-masking",
                                generic_freqs=generic)
        anchors = set(manifest["anchors"])
        for example in read_dataset(tmp_path):
            original = example.reconstruct()
            masked = set(example.masked_positions)
            for pos, token in enumerate(original):
                if token.lower() in anchors:
                    assert pos in masked

    def test_diff_masking_requires_generic_table(self, tmp_path):
        docs, entities = _toy_corpus(n_docs=2)
        plan = _toy_plan(entities)
        with pytest.raises(ValueError, match="generic frequency table"):
            emit_dataset(docs, plan, MaskingConfig(sequence_length=24),
                         tmp_path, strategy="diff-masking")


def _write_gold(path, docs, sequence_length, tagged_words):
    """CoNLL lines aligned with the packed sequences of docs."""
    sequences = pack_sequences(docs, sequence_length)
    with open(path, "w", encoding="utf-8") as f:
        for seq in sequences:
            for token in seq.tokens:
                tag = "B-ENT" if token in tagged_words else "O"
                f.write(f"{token}\t{tag}\n")
            f.write("\n")


class TestOverlap:
    def test_read_conll(self, tmp_path):
        path = tmp_path / "gold.conll"
        path.write_text("a\tO\nb\tB-ENT\n\nc\tI-ENT\n")
        assert read_conll(path) == [
            [("a", "O"), ("b", "B-ENT")], [("c", "I-ENT")],
        ]

    def test_all_entity_tags_give_one(self, tmp_path):
        docs, entities = _toy_corpus(n_docs=10)
        plan = _toy_plan(entities)
        emit_dataset(docs, plan, MaskingConfig(sequence_length=24, seed=3),
                     tmp_path / "data")
        gold = tmp_path / "gold.conll"
        sequences = pack_sequences(docs, 24)
        with open(gold, "w") as f:
            for seq in sequences:
                for token in seq.tokens:
                    f.write(f"{token}\tB-X\n")
                f.write("\n")
        report = overlap_ratio(tmp_path / "data", gold)
        assert report["overall"] == 1.0
        assert set(report["per_stage"]) == {"warmup", "s1", "s2", "s3"}

    def test_no_entity_tags_give_zero(self, tmp_path):
        docs, entities = _toy_corpus(n_docs=10)
        plan = _toy_plan(entities)
        emit_dataset(docs, plan, MaskingConfig(sequence_length=24, seed=3),
                     tmp_path / "data")
        _write_gold(tmp_path / "gold.conll", docs, 24, tagged_words=set())
        report = overlap_ratio(tmp_path / "data", tmp_path / "gold.conll")
        assert report["overall"] == 0.0

    def test_melt_overlap_exceeds_random(self, tmp_path):
        docs, entities = _toy_corpus(n_docs=150, sentence_len=40,
                                     entity_rate=0.06, seed=13)
        plan = _toy_plan(entities)
        cfg = MaskingConfig(sequence_length=40, seed=1)
        emit_dataset(docs, plan, cfg, tmp_path / "melt", strategy="melt")
        emit_dataset(docs, plan, cfg, tmp_path / "rand", strategy="random")
        _write_gold(tmp_path / "gold.conll", docs, 40, set(entities))
        melt = overlap_ratio(tmp_path / "melt", tmp_path / "gold.conll")
        rand = overlap_ratio(tmp_path / "rand", tmp_path / "gold.conll")
        assert melt["overall"] >= 1.5 * rand["overall"]

    def test_token_mismatch_reports_position(self, tmp_path):
        docs, entities = _toy_corpus(n_docs=2)
        plan = _toy_plan(entities)
        emit_dataset(docs, plan, MaskingConfig(sequence_length=24, seed=3),
                     tmp_path / "data")
        gold = tmp_path / "gold.conll"
        sequences = pack_sequences(docs, 24)
        with open(gold, "w") as f:
            for seq in sequences:
                for i, token in enumerate(seq.tokens):
                    f.write(("WRONG" if i == 5 else token) + "\tO\n")
                f.write("\n")
        with pytest.raises(ValueError, match="position 5"):
            overlap_ratio(tmp_path / "data", gold)

    def test_truncated_gold_rejected(self, tmp_path):
        docs, entities = _toy_corpus(n_docs=3)
        plan = _toy_plan(entities)
        emit_dataset(docs, plan, MaskingConfig(sequence_length=24, seed=3),
                     tmp_path / "data")
        gold = tmp_path / "gold.conll"
        gold.write_text("lonely\tO\n")
        with pytest.raises(ValueError, match="tagged file ends"):
            overlap_ratio(tmp_path / "data", gold)


class TestConfigValidation:
    def test_ratio_bounds(self):
        with pytest.raises(ValueError):
            MaskingConfig(target_token_ratio=0.0)
        with pytest.raises(ValueError):
            MaskingConfig(target_token_ratio=1.0)

    def test_sequence_length_minimum(self):
        with pytest.raises(ValueError):
            MaskingConfig(sequence_length=7)
