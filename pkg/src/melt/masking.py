"""Masked-dataset emission with curriculum staging.

Packs the tokenized corpus into fixed-length sequences, indexes entity
occurrences against the curriculum strata, calibrates per-stage masking
probability to the token budget, and writes one dataset per schedule
phase (warm-up plus stages 1..K) as sharded JSONL.  Baseline strategies
(random, entity-only, diff-masking) reuse the same emission machinery
with phase-independent masking.  Also computes the entity-tag overlap
ratio of a dataset against a CoNLL-tagged reference.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .curriculum import CurriculumPlan
from .rng import SplitMix64, derive_seed

logger = logging.getLogger(__name__)

MASK_SENTINEL = "[MASK]"
DIFF_MASK_RATIO = 0.25
DIFF_ANCHOR_COUNT = 20
STRATEGIES = ("melt", "random", "entity-only", "diff-masking")

_EMIT_STREAM = 3


@dataclass(frozen=True)
class MaskingConfig:
    target_token_ratio: float = 0.15
    sequence_length: int = 128
    mask_sentinel: str = MASK_SENTINEL
    seed: int = 1
    fallback_random_fill: bool = True

    def __post_init__(self):
        if not 0.0 < self.target_token_ratio < 1.0:
            raise ValueError("target_token_ratio must be in (0, 1)")
        if self.sequence_length < 8:
            raise ValueError("sequence_length must be >= 8")


@dataclass(frozen=True)
class EntityOccurrence:
    start: int   # token index, inclusive
    end: int     # token index, exclusive
    entity: str  # canonical form
    stage: int   # smallest i with entity in G_i


@dataclass(frozen=True)
class MaskedExample:
    sequence_id: str
    tokens: tuple[str, ...]
    masked_positions: tuple[int, ...]
    targets: tuple[str, ...]
    stage: int
    strategy: str

    def __post_init__(self):
        if len(self.masked_positions) != len(self.targets):
            raise ValueError("positions and targets must align")
        if list(self.masked_positions) != sorted(set(self.masked_positions)):
            raise ValueError("masked_positions must be strictly increasing")
        if self.masked_positions and not (
            0 <= self.masked_positions[0]
            and self.masked_positions[-1] < len(self.tokens)
        ):
            raise ValueError("masked position out of range")

    def reconstruct(self) -> list[str]:
        original = list(self.tokens)
        for pos, target in zip(self.masked_positions, self.targets):
            original[pos] = target
        return original

    def to_json(self) -> str:
        return json.dumps({
            "id": self.sequence_id,
            "tokens": list(self.tokens),
            "masked_positions": list(self.masked_positions),
            "targets": list(self.targets),
            "stage": self.stage,
            "strategy": self.strategy,
        }, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "MaskedExample":
        doc = json.loads(line)
        return cls(
            sequence_id=doc["id"],
            tokens=tuple(doc["tokens"]),
            masked_positions=tuple(doc["masked_positions"]),
            targets=tuple(doc["targets"]),
            stage=doc["stage"],
            strategy=doc["strategy"],
        )


@dataclass(frozen=True)
class PackedSequence:
    sequence_id: str
    tokens: tuple[str, ...]


def pack_sequences(
    docs: Iterable[tuple[str, Sequence[Sequence[str]]]],
    sequence_length: int = 128,
    min_tail: int = 8,
) -> list[PackedSequence]:
    """Concatenates each document's sentences and cuts length-limited
    windows; windows never cross documents and short tails below
    min_tail tokens are dropped."""
    packed: list[PackedSequence] = []
    for doc_id, sentences in docs:
        flat: list[str] = []
        for sentence in sentences:
            flat.extend(sentence)
        for w, start in enumerate(range(0, len(flat), sequence_length)):
            window = flat[start: start + sequence_length]
            if len(window) < min_tail:
                continue
            packed.append(PackedSequence(f"{doc_id}:{w:05d}", tuple(window)))
    return packed


def entity_stage_map(strata: Sequence[Sequence[str]]) -> dict[str, int]:
    """Entity -> 1-based stage of first membership (strata are disjoint)."""
    stages: dict[str, int] = {}
    for i, stratum in enumerate(strata, 1):
        for entity in stratum:
            stages.setdefault(entity, i)
    return stages


class _EntityMatcher:
    """Greedy longest-match leftmost scan over token sequences.

    Canonicals match their own token split exactly; fully-lowercase
    canonicals additionally match case-insensitively, so "cathode"
    catches "Cathode" at sentence starts while "LiCoO2" never matches
    "licoo2".
    """

    def __init__(self, stages: Mapping[str, int]):
        self._exact: dict[tuple[str, ...], tuple[str, int]] = {}
        self._folded: dict[tuple[str, ...], tuple[str, int]] = {}
        self.max_len = 1
        for entity, stage in stages.items():
            parts = tuple(entity.split(" "))
            if not parts or any(not p for p in parts):
                continue
            self._exact[parts] = (entity, stage)
            if entity == entity.lower():
                self._folded[parts] = (entity, stage)
            self.max_len = max(self.max_len, len(parts))

    def match_at(self, tokens: Sequence[str], i: int) -> tuple[int, str, int] | None:
        """Longest match starting at i as (length, canonical, stage)."""
        limit = min(self.max_len, len(tokens) - i)
        for n in range(limit, 0, -1):
            span = tuple(tokens[i: i + n])
            hit = self._exact.get(span)
            if hit is None:
                hit = self._folded.get(tuple(t.lower() for t in span))
            if hit is not None:
                return n, hit[0], hit[1]
        return None


def index_entities(
    tokens: Sequence[str], matcher: _EntityMatcher
) -> list[EntityOccurrence]:
    """Non-overlapping occurrences, longest-match leftmost."""
    occurrences: list[EntityOccurrence] = []
    i = 0
    n = len(tokens)
    while i < n:
        hit = matcher.match_at(tokens, i)
        if hit is None:
            i += 1
            continue
        length, canonical, stage = hit
        occurrences.append(EntityOccurrence(i, i + length, canonical, stage))
        i += length
    return occurrences


def calibrate_mask_probability(
    entity_tokens_in_stage: int, total_tokens: int, target_ratio: float
) -> tuple[float, bool]:
    """(p_m, needs_random_fill) for one curriculum stage.

    p_m = min(1, target * total / entity_tokens); the flag marks stages
    whose entity coverage cannot reach the budget even at p_m = 1.
    """
    if total_tokens <= 0:
        raise ValueError("total_tokens must be > 0")
    budget = target_ratio * total_tokens
    if entity_tokens_in_stage <= 0:
        return 0.0, True
    p = min(1.0, budget / entity_tokens_in_stage)
    return p, entity_tokens_in_stage < budget


def _randomized_round(x: float, rng: SplitMix64) -> int:
    base = int(x)
    frac = x - base
    return base + (1 if frac > 0 and rng.next_float() < frac else 0)


def _sample_positions(
    eligible: Sequence[int], count: int, rng: SplitMix64
) -> list[int]:
    """count distinct draws via partial Fisher-Yates; order-insensitive."""
    pool = list(eligible)
    count = min(count, len(pool))
    for i in range(count):
        j = i + rng.next_below(len(pool) - i)
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:count]


def _mask_random(
    tokens: Sequence[str], ratio: float, rng: SplitMix64
) -> list[int]:
    budget = ratio * len(tokens)
    count = _randomized_round(budget, rng)
    return sorted(_sample_positions(range(len(tokens)), count, rng))


def _mask_entities(
    tokens: Sequence[str],
    occurrences: Sequence[EntityOccurrence],
    stage: int,
    p_m: float,
    ratio: float,
    rng: SplitMix64,
    random_fill: bool,
) -> list[int]:
    """Whole-span entity masking with optional random fill to the budget.

    Every eligible span flips one Bernoulli(p_m) coin; fill draws only
    from non-entity positions so partial entity spans never appear.
    """
    masked: set[int] = set()
    entity_positions: set[int] = set()
    for occ in occurrences:
        entity_positions.update(range(occ.start, occ.end))
        if occ.stage <= stage and rng.next_float() < p_m:
            masked.update(range(occ.start, occ.end))
    if random_fill:
        budget = ratio * len(tokens)
        gap = budget - len(masked)
        if gap > 0:
            fill = _randomized_round(gap, rng)
            eligible = [
                i for i in range(len(tokens))
                if i not in entity_positions
            ]
            masked.update(_sample_positions(eligible, fill, rng))
    return sorted(masked)


def _apply_mask(
    seq: PackedSequence,
    positions: Sequence[int],
    stage: int,
    strategy: str,
    sentinel: str,
) -> MaskedExample:
    tokens = list(seq.tokens)
    targets = tuple(tokens[p] for p in positions)
    for p in positions:
        tokens[p] = sentinel
    return MaskedExample(
        sequence_id=seq.sequence_id,
        tokens=tuple(tokens),
        masked_positions=tuple(positions),
        targets=targets,
        stage=stage,
        strategy=strategy,
    )


def mask_sequence(
    seq: PackedSequence,
    occurrences: Sequence[EntityOccurrence],
    stage: int,
    p_m: float,
    cfg: MaskingConfig,
    rng: SplitMix64,
    strategy: str = "melt",
) -> MaskedExample | None:
    """One masked example; stage 0 is random warm-up masking.  Returns
    None for sequences under 2 tokens (skip-counted by the emitter)."""
    if len(seq.tokens) < 2:
        return None
    if stage == 0:
        positions = _mask_random(seq.tokens, cfg.target_token_ratio, rng)
    else:
        positions = _mask_entities(
            seq.tokens, occurrences, stage, p_m,
            cfg.target_token_ratio, rng, cfg.fallback_random_fill,
        )
    return _apply_mask(seq, positions, stage, strategy, cfg.mask_sentinel)


def select_anchor_words(
    target_freqs: Mapping[str, int],
    generic_freqs: Mapping[str, int],
    count: int = DIFF_ANCHOR_COUNT,
) -> list[str]:
    """Words most over-represented in the target domain: highest
    target_freq / (generic_freq + 1), ties by ascending word."""
    ranked = sorted(
        target_freqs,
        key=lambda w: (-target_freqs[w] / (generic_freqs.get(w, 0) + 1), w),
    )
    if len(ranked) < count:
        logger.warning("only %d distinct words for %d anchors",
                       len(ranked), count)
    return ranked[:count]


def load_frequency_table(path: str | Path) -> dict[str, int]:
    """TSV word<TAB>count; '#' lines ignored."""
    freqs: dict[str, int] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            word, count = line.split("\t")
            freqs[word] = int(count)
    return freqs


def _phase_labels(plan: CurriculumPlan) -> list[str]:
    """Replay order of dataset labels, e.g. [warmup, s1, s2, s3, s1, ...]."""
    labels = []
    for w in plan.windows:
        labels.append("warmup" if w.phase == "warmup" else f"s{w.stage}")
    return labels


def emit_dataset(
    docs: Iterable[tuple[str, Sequence[Sequence[str]]]],
    plan: CurriculumPlan,
    cfg: MaskingConfig,
    out_dir: str | Path,
    strategy: str = "melt",
    shards: int = 1,
    seed_entities: Iterable[str] = (),
    target_freqs: Mapping[str, int] | None = None,
    generic_freqs: Mapping[str, int] | None = None,
) -> dict:
    """Writes stage{i}_shard{j}.jsonl files plus manifest.json.

    Every dataset (stage 0 = warm-up, then 1..K) is one full pass over
    the packed corpus; the manifest's phase list tells a trainer which
    dataset to replay for each schedule window.  Fixed seeds give
    byte-identical output; shard streams are derived per (stage, shard)
    so shard counts do not change the examples, only their grouping.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown masking strategy: {strategy}")
    if shards < 1:
        raise ValueError("shards must be >= 1")
    sequences = pack_sequences(docs, cfg.sequence_length)
    if not sequences:
        raise ValueError("empty corpus")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    total_tokens = sum(len(s.tokens) for s in sequences)

    # Per-strategy eligibility: melt uses the plan's strata; entity-only
    # collapses to the seed set at every stage; the rest index nothing.
    anchors: list[str] = []
    if strategy == "melt":
        stages = entity_stage_map(plan.strata)
    elif strategy == "entity-only":
        stages = {e: 1 for e in seed_entities}
    elif strategy == "diff-masking":
        if generic_freqs is None:
            raise ValueError("diff-masking needs a generic frequency table")
        if target_freqs is None:
            counts: Counter[str] = Counter()
            for s in sequences:
                counts.update(t.lower() for t in s.tokens)
            target_freqs = dict(counts)
        anchors = select_anchor_words(target_freqs, generic_freqs)
        stages = {a: 1 for a in anchors}
    else:
        stages = {}
    matcher = _EntityMatcher(stages)
    indexed = [index_entities(s.tokens, matcher) for s in sequences]

    k = plan.k
    # Entity tokens available at each stage i = spans in G_1..G_i.
    stage_entity_tokens = [0] * (k + 1)
    for occs in indexed:
        for occ in occs:
            for i in range(occ.stage, k + 1):
                stage_entity_tokens[i] += occ.end - occ.start

    ratio = DIFF_MASK_RATIO if strategy == "diff-masking" else cfg.target_token_ratio
    p_m: dict[int, float | None] = {}
    for i in range(1, k + 1):
        if strategy == "random":
            p_m[i] = None
        elif strategy == "diff-masking":
            p_m[i] = 1.0  # every anchor occurrence is masked
        else:
            p_m[i], _ = calibrate_mask_probability(
                stage_entity_tokens[i], total_tokens, ratio)
    # Warm-up dataset: melt uses random masking (or G_1 when the plan
    # says so); baselines mask identically in every phase.
    if strategy == "melt":
        p_m[0] = p_m[1] if plan.warmup_mode == "g1" else None
    else:
        p_m[0] = p_m[1]

    mask_cfg = _ratio_cfg(cfg, ratio)
    stats: dict[str, dict] = {}
    files: dict[str, list[str]] = {}
    for stage in range(k + 1):
        label = "warmup" if stage == 0 else f"s{stage}"
        eff_stage = _effective_stage(strategy, stage, plan.warmup_mode)
        masked_total = 0
        emitted_tokens = 0
        examples = 0
        skipped = 0
        stage_files = []
        for shard in range(shards):
            name = f"stage{stage}_shard{shard}.jsonl"
            stage_files.append(name)
            rng = SplitMix64(derive_seed(cfg.seed, _EMIT_STREAM, stage, shard))
            with open(out / name, "w", encoding="utf-8", newline="\n") as f:
                for si in range(shard, len(sequences), shards):
                    example = mask_sequence(
                        sequences[si], indexed[si], eff_stage,
                        p_m[stage] or 0.0, mask_cfg, rng, strategy,
                    )
                    if example is None:
                        skipped += 1
                        continue
                    # keep the schedule stage on the record even when the
                    # strategy ignores curriculum structure
                    example = MaskedExample(
                        example.sequence_id, example.tokens,
                        example.masked_positions, example.targets,
                        stage, strategy,
                    )
                    f.write(example.to_json() + "\n")
                    masked_total += len(example.masked_positions)
                    emitted_tokens += len(example.tokens)
                    examples += 1
        stats[label] = {
            "p_m": p_m[stage],
            "entity_tokens": stage_entity_tokens[stage] if stage else None,
            "examples": examples,
            "skipped": skipped,
            "masked_tokens": masked_total,
            "realized_ratio": (masked_total / emitted_tokens
                               if emitted_tokens else 0.0),
        }
        files[label] = stage_files

    manifest = {
        "strategy": strategy,
        "seed": cfg.seed,
        "k": k,
        "shards": shards,
        "target_token_ratio": ratio,
        "sequence_length": cfg.sequence_length,
        "mask_sentinel": cfg.mask_sentinel,
        "fallback_random_fill": cfg.fallback_random_fill,
        "anchors": anchors,
        "total_tokens": total_tokens,
        "sequences": len(sequences),
        "phases": [
            {"label": label, "start": w.start, "end": w.end,
             "files": files[label]}
            for w, label in zip(plan.windows, _phase_labels(plan))
        ],
        "datasets": stats,
    }
    with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def _effective_stage(strategy: str, stage: int, warmup_mode: str) -> int:
    """Masking stage for a dataset: random stays 0 in every phase,
    entity-only and diff-masking ignore warm-up, and melt's warm-up can
    be promoted to G_1 masking via the plan's warmup_mode."""
    if strategy == "random":
        return 0
    if strategy in ("entity-only", "diff-masking"):
        return max(stage, 1)
    if stage == 0 and warmup_mode == "g1":
        return 1
    return stage


def _ratio_cfg(cfg: MaskingConfig, ratio: float) -> MaskingConfig:
    if ratio == cfg.target_token_ratio:
        return cfg
    return MaskingConfig(
        target_token_ratio=ratio,
        sequence_length=cfg.sequence_length,
        mask_sentinel=cfg.mask_sentinel,
        seed=cfg.seed,
        fallback_random_fill=cfg.fallback_random_fill,
    )


# ---------------------------------------------------------------------------
# Dataset reading and overlap analysis


def read_dataset(data_dir: str | Path) -> list[MaskedExample]:
    """All examples, datasets in stage order, shards merged round-robin
    so each dataset's examples appear in corpus order."""
    data_dir = Path(data_dir)
    examples: list[MaskedExample] = []
    for stage in _stage_numbers(data_dir):
        shard_files = sorted(
            data_dir.glob(f"stage{stage}_shard*.jsonl"),
            key=lambda p: int(p.stem.split("shard")[1]),
        )
        shard_examples = []
        for path in shard_files:
            with open(path, encoding="utf-8") as f:
                shard_examples.append([MaskedExample.from_json(l)
                                       for l in f if l.strip()])
        for row in range(max(map(len, shard_examples), default=0)):
            for shard in shard_examples:
                if row < len(shard):
                    examples.append(shard[row])
    return examples


def _stage_numbers(data_dir: Path) -> list[int]:
    stages = set()
    for path in data_dir.glob("stage*_shard*.jsonl"):
        stages.add(int(path.stem.split("_")[0][len("stage"):]))
    return sorted(stages)


def read_conll(path: str | Path) -> list[list[tuple[str, str]]]:
    """CoNLL two-column token<TAB>tag; blank lines separate sequences."""
    sequences: list[list[tuple[str, str]]] = []
    current: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                if current:
                    sequences.append(current)
                    current = []
                continue
            token, tag = line.split("\t")
            current.append((token, tag))
    if current:
        sequences.append(current)
    return sequences


def overlap_ratio(
    data_dir: str | Path, tagged_path: str | Path
) -> dict:
    """Fraction of masked positions carrying B-/I- gold tags.

    The tagged file aligns token-for-token with the distinct packed
    sequences in corpus order (one pass); every emitted phase is scored
    against that alignment.
    """
    examples = read_dataset(data_dir)
    if not examples:
        raise ValueError("no dataset files found")
    gold_flat: list[tuple[str, str]] = []
    for seq in read_conll(tagged_path):
        gold_flat.extend(seq)

    # Reconstruct the distinct sequences in first-seen (corpus) order.
    originals: dict[str, list[str]] = {}
    order: list[str] = []
    for ex in examples:
        if ex.sequence_id not in originals:
            originals[ex.sequence_id] = ex.reconstruct()
            order.append(ex.sequence_id)

    tags: dict[str, list[str]] = {}
    cursor = 0
    for sid in order:
        tokens = originals[sid]
        if cursor + len(tokens) > len(gold_flat):
            raise ValueError(
                f"tagged file ends at token {len(gold_flat)} but sequence "
                f"{sid} needs {len(tokens)} more tokens"
            )
        seq_tags = []
        for j, token in enumerate(tokens):
            gold_token, tag = gold_flat[cursor + j]
            if gold_token != token:
                raise ValueError(
                    f"token mismatch at position {cursor + j}: "
                    f"dataset {token!r} vs tagged {gold_token!r}"
                )
            seq_tags.append(tag)
        tags[sid] = seq_tags
        cursor += len(tokens)

    total = 0
    entity_hits = 0
    per_stage: dict[str, list[int]] = {}
    for ex in examples:
        seq_tags = tags[ex.sequence_id]
        label = "warmup" if ex.stage == 0 else f"s{ex.stage}"
        bucket = per_stage.setdefault(label, [0, 0])
        for pos in ex.masked_positions:
            hit = seq_tags[pos].startswith(("B-", "I-"))
            total += 1
            entity_hits += hit
            bucket[0] += hit
            bucket[1] += 1
    return {
        "overall": entity_hits / total if total else 0.0,
        "masked_positions": total,
        "per_stage": {
            label: (hits / n if n else 0.0)
            for label, (hits, n) in sorted(per_stage.items())
        },
    }
