"""End-to-end orchestration: config, staged execution, caching, report.

A run executes ingest -> extract -> embed -> graph -> curriculum -> emit
under one output root.  Every stage records a hash of its inputs (config
slice plus upstream artifact hashes); a rerun skips stages whose input
hash and output hashes are unchanged.  All run outputs are deterministic
for a fixed config and seed; wall-clock timings go to a separate
timings.json that is excluded from the determinism contract.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Callable

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .curriculum import CurriculumPlan, make_plan
from .embeddings import (EmbeddingHyperparams, EmbeddingTable,
                         train_embeddings)
from .entities import SeedEntitySet, TermDictionary, extract_corpus_entities
from .graph import (SemanticGraph, build_semantic_graph, concept_vector,
                    entity_counts_report, load_concept_pairs, node_degrees,
                    save_graph_metadata)
from .ingest import (Vocabulary, build_vocabulary, iter_token_sentences,
                     read_corpus, read_tokens_jsonl, tokenize_document,
                     write_tokens_jsonl)
from .masking import MaskingConfig, emit_dataset, load_frequency_table

logger = logging.getLogger(__name__)

STAGES = ("ingest", "extract", "embed", "graph", "curriculum", "emit")


class InputError(Exception):
    """Missing or unreadable input; maps to exit code 1."""


class StageError(Exception):
    """A pipeline stage failed; maps to exit code 2."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


class ValidationError(Exception):
    """Config or artifact validation failed; maps to exit code 3."""


def bundled_data_path(name: str) -> Path:
    return Path(str(resources.files("melt").joinpath("data", name)))


@dataclass(frozen=True)
class PathsConfig:
    corpus: str
    output: str = "out"
    dictionary: str = ""      # empty -> bundled materials dictionary
    concept_pairs: str = ""   # empty -> bundled six-concept pairs
    generic_freqs: str = ""   # needed only for diff-masking


@dataclass(frozen=True)
class IngestConfig:
    min_count: int = 5


@dataclass(frozen=True)
class EmbeddingConfig:
    dim: int = 200
    epochs: int = 30
    learning_rate: float = 0.01
    window: int = 8
    negatives: int = 15
    subsample_threshold: float = 1e-4
    lr_decay: str = "linear"
    workers: int = 1


@dataclass(frozen=True)
class GraphConfig:
    topk: int = 5
    min_similarity: float = 0.3


@dataclass(frozen=True)
class CurriculumConfig:
    strategy: str = "node-degree"
    k: int = 3
    warmup_steps: int = 10_000
    stage_steps: int = 10_000
    total_steps: int = 100_000
    warmup_mode: str = "random"


@dataclass(frozen=True)
class MaskingSection:
    strategy: str = "melt"
    target_token_ratio: float = 0.15
    sequence_length: int = 128
    mask_sentinel: str = "[MASK]"
    fallback_random_fill: bool = True
    shards: int = 1


@dataclass(frozen=True)
class PipelineConfig:
    paths: PathsConfig
    ingest: IngestConfig = field(default_factory=IngestConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    masking: MaskingSection = field(default_factory=MaskingSection)
    seed: int = 1
    base_dir: str = "."  # directory relative paths resolve against

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def output_root(self) -> Path:
        return self.resolve(self.paths.output)

    def dictionary_path(self) -> Path:
        if self.paths.dictionary:
            return self.resolve(self.paths.dictionary)
        return bundled_data_path("materials_dict.txt")

    def concept_pairs_path(self) -> Path:
        if self.paths.concept_pairs:
            return self.resolve(self.paths.concept_pairs)
        return bundled_data_path("concept_pairs_six.tsv")

    def validate(self) -> None:
        corpus = self.resolve(self.paths.corpus)
        if not corpus.exists():
            raise InputError(f"corpus path does not exist: {corpus}")
        for p in (self.dictionary_path(), self.concept_pairs_path()):
            if not p.exists():
                raise InputError(f"input file does not exist: {p}")
        if self.masking.strategy == "diff-masking":
            if not self.paths.generic_freqs:
                raise InputError("diff-masking needs paths.generic_freqs")
            gp = self.resolve(self.paths.generic_freqs)
            if not gp.exists():
                raise InputError(f"generic frequency table missing: {gp}")
        try:
            self.hyperparams()
            MaskingConfig(
                target_token_ratio=self.masking.target_token_ratio,
                sequence_length=self.masking.sequence_length,
                mask_sentinel=self.masking.mask_sentinel,
                seed=self.seed,
                fallback_random_fill=self.masking.fallback_random_fill,
            )
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
        if self.ingest.min_count < 1:
            raise ValidationError("ingest.min_count must be >= 1")
        if self.graph.topk < 1:
            raise ValidationError("graph.topk must be >= 1")
        if self.curriculum.k < 1:
            raise ValidationError("curriculum.k must be >= 1")
        if self.masking.shards < 1:
            raise ValidationError("masking.shards must be >= 1")

    def hyperparams(self) -> EmbeddingHyperparams:
        e = self.embedding
        return EmbeddingHyperparams(
            dim=e.dim, epochs=e.epochs, learning_rate=e.learning_rate,
            window=e.window, subsample_threshold=e.subsample_threshold,
            negatives=e.negatives, min_count=self.ingest.min_count,
            seed=self.seed, lr_decay=e.lr_decay,
        )

    def masking_config(self) -> MaskingConfig:
        m = self.masking
        return MaskingConfig(
            target_token_ratio=m.target_token_ratio,
            sequence_length=m.sequence_length,
            mask_sentinel=m.mask_sentinel,
            seed=self.seed,
            fallback_random_fill=m.fallback_random_fill,
        )

    # -- serialization ------------------------------------------------------

    def to_toml(self) -> str:
        lines: list[str] = []
        sections = (
            ("paths", self.paths),
            ("ingest", self.ingest),
            ("embedding", self.embedding),
            ("graph", self.graph),
            ("curriculum", self.curriculum),
            ("masking", self.masking),
        )
        lines.append("[run]")
        lines.append(f"seed = {self.seed}")
        for name, section in sections:
            lines.append("")
            lines.append(f"[{name}]")
            for f_ in fields(section):
                lines.append(f"{f_.name} = {_toml_value(getattr(section, f_.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_toml(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            with open(path, "rb") as f:
                doc = tomllib.load(f)
        except FileNotFoundError as exc:
            raise InputError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise InputError(f"config parse error in {path}: {exc}") from exc
        return cls.from_dict(doc, base_dir=str(path.parent))

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str = ".") -> "PipelineConfig":
        known = {"run", "paths", "ingest", "embedding", "graph",
                 "curriculum", "masking"}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown config sections: {sorted(unknown)}")
        if "paths" not in doc or "corpus" not in doc["paths"]:
            raise ValidationError("config must set paths.corpus")

        def build(section_cls, name):
            data = dict(doc.get(name, {}))
            allowed = {f_.name for f_ in fields(section_cls)}
            bad = set(data) - allowed
            if bad:
                raise ValidationError(
                    f"unknown keys in [{name}]: {sorted(bad)}")
            return section_cls(**data)

        run = dict(doc.get("run", {}))
        if set(run) - {"seed"}:
            raise ValidationError(
                f"unknown keys in [run]: {sorted(set(run) - {'seed'})}")
        return cls(
            paths=build(PathsConfig, "paths"),
            ingest=build(IngestConfig, "ingest"),
            embedding=build(EmbeddingConfig, "embedding"),
            graph=build(GraphConfig, "graph"),
            curriculum=build(CurriculumConfig, "curriculum"),
            masking=build(MaskingSection, "masking"),
            seed=int(run.get("seed", 1)),
            base_dir=base_dir,
        )


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    raise TypeError(f"unsupported config value: {value!r}")


# ---------------------------------------------------------------------------
# Hashing and cache bookkeeping


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _hash_obj(obj: Any) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _corpus_fingerprint(corpus: Path) -> list[tuple[str, str]]:
    if corpus.is_dir():
        paths = sorted(corpus.glob("*.txt"))
    else:
        paths = [corpus]
    return [(p.name, sha256_file(p)) for p in paths]


class _Cache:
    def __init__(self, root: Path):
        self.path = root / "cache.json"
        self.data: dict[str, dict] = {}
        if self.path.exists():
            try:
                self.data = json.loads(self.path.read_text())
            except json.JSONDecodeError:
                logger.warning("ignoring corrupt cache file %s", self.path)

    def fresh(self, stage: str, inputs_hash: str, root: Path) -> bool:
        entry = self.data.get(stage)
        if not entry or entry.get("inputs") != inputs_hash:
            return False
        for rel, digest in entry.get("outputs", {}).items():
            p = root / rel
            if not p.exists() or sha256_file(p) != digest:
                return False
        return True

    def record(self, stage: str, inputs_hash: str,
               outputs: dict[str, str]) -> None:
        self.data[stage] = {"inputs": inputs_hash, "outputs": outputs}

    def outputs(self, stage: str) -> dict[str, str]:
        return dict(self.data.get(stage, {}).get("outputs", {}))

    def save(self) -> None:
        self.path.write_text(
            json.dumps(self.data, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Stage implementations (each returns {relative_path: sha256})


def _stage_ingest(cfg: PipelineConfig, root: Path) -> dict[str, str]:
    docs = read_corpus(cfg.resolve(cfg.paths.corpus))
    tokenized = [t for t in map(tokenize_document, docs) if t is not None]
    vocab = build_vocabulary(tokenized, min_count=cfg.ingest.min_count)
    vocab.save_tsv(root / "vocab.tsv")
    write_tokens_jsonl(tokenized, root / "tokens.jsonl")
    return {p: sha256_file(root / p) for p in ("vocab.tsv", "tokens.jsonl")}


def _stage_extract(cfg: PipelineConfig, root: Path) -> dict[str, str]:
    dictionary = TermDictionary.from_file(cfg.dictionary_path())
    docs = read_tokens_jsonl(root / "tokens.jsonl")
    seeds = extract_corpus_entities(docs, dictionary)
    seeds.save_tsv(root / "seeds.tsv")
    return {"seeds.tsv": sha256_file(root / "seeds.tsv")}


def _stage_embed(cfg: PipelineConfig, root: Path) -> dict[str, str]:
    vocab = Vocabulary.load_tsv(root / "vocab.tsv")
    sentences = iter_token_sentences(read_tokens_jsonl(root / "tokens.jsonl"))
    table = train_embeddings(sentences, vocab, cfg.hyperparams(),
                             workers=cfg.embedding.workers)
    table.save_text(root / "emb.vec")
    return {"emb.vec": sha256_file(root / "emb.vec")}


def _stage_graph(cfg: PipelineConfig, root: Path) -> dict[str, str]:
    table = EmbeddingTable.load_text(root / "emb.vec")
    seeds = SeedEntitySet.load_tsv(root / "seeds.tsv")
    specs = load_concept_pairs(cfg.concept_pairs_path())
    concepts = []
    for spec in specs:
        try:
            concepts.append(concept_vector(spec, table))
        except ValueError:
            logger.warning("concept %s has no embeddable pairs; skipped",
                           spec.name)
    if not concepts:
        raise ValueError("no concept has embeddable pairs")
    graph = build_semantic_graph(
        seeds, concepts, table,
        k=cfg.graph.topk, min_similarity=cfg.graph.min_similarity,
    )
    graph.validate()
    out = root / "graph"
    graph.save(out)
    save_graph_metadata(
        out, topk=cfg.graph.topk, min_similarity=cfg.graph.min_similarity,
        concepts=concepts, report=entity_counts_report(graph, seeds),
    )
    rels = ("graph/edges.tsv", "graph/nodes.tsv", "graph/skipped.tsv",
            "graph/meta.json")
    return {p: sha256_file(root / p) for p in rels}


def _stage_curriculum(cfg: PipelineConfig, root: Path) -> dict[str, str]:
    graph = SemanticGraph.load(root / "graph")
    seeds = SeedEntitySet.load_tsv(root / "seeds.tsv")
    vocab = Vocabulary.load_tsv(root / "vocab.tsv")
    degrees = node_degrees(graph)
    # Unembedded seeds are still maskable corpus entities; they join the
    # universe at degree 0 (the hardest stratum).
    for skipped in graph.skipped_seeds:
        degrees.setdefault(skipped, 0)
    frequencies: dict[str, int] = {}
    seed_freq = {c: e.corpus_frequency for c, e in seeds.sorted_items()}
    for entity in degrees:
        index = vocab.lookup(entity)
        if index is not None:
            frequencies[entity] = vocab.counts()[index]
        else:
            frequencies[entity] = seed_freq.get(entity, 0)
    c = cfg.curriculum
    plan = make_plan(
        c.strategy, degrees, frequencies, k=c.k,
        warmup_steps=c.warmup_steps, stage_steps=c.stage_steps,
        total_steps=c.total_steps, warmup_mode=c.warmup_mode,
    )
    plan.save(root / "plan")
    return {"plan/plan.json": sha256_file(root / "plan" / "plan.json")}


def _stage_emit(cfg: PipelineConfig, root: Path) -> dict[str, str]:
    plan = CurriculumPlan.load(root / "plan")
    docs = (
        (doc.doc_id, [[t.surface for t in s] for s in doc.sentences])
        for doc in read_tokens_jsonl(root / "tokens.jsonl")
    )
    seeds = SeedEntitySet.load_tsv(root / "seeds.tsv")
    generic = None
    if cfg.masking.strategy == "diff-masking":
        generic = load_frequency_table(cfg.resolve(cfg.paths.generic_freqs))
    out = root / "data"
    emit_dataset(
        docs, plan, cfg.masking_config(), out,
        strategy=cfg.masking.strategy, shards=cfg.masking.shards,
        seed_entities=[c for c, _ in seeds.sorted_items()],
        generic_freqs=generic,
    )
    rels = sorted(
        str(p.relative_to(root)) for p in out.glob("*.jsonl")
    ) + ["data/manifest.json"]
    return {p: sha256_file(root / p) for p in rels}


_STAGE_FUNCS: dict[str, Callable[[PipelineConfig, Path], dict[str, str]]] = {
    "ingest": _stage_ingest,
    "extract": _stage_extract,
    "embed": _stage_embed,
    "graph": _stage_graph,
    "curriculum": _stage_curriculum,
    "emit": _stage_emit,
}


def _stage_inputs(cfg: PipelineConfig, stage: str,
                  upstream: dict[str, dict[str, str]]) -> str:
    """Hash of everything a stage's output depends on."""
    paths = cfg.paths
    if stage == "ingest":
        payload: Any = {
            "corpus": _corpus_fingerprint(cfg.resolve(paths.corpus)),
            "min_count": cfg.ingest.min_count,
        }
    elif stage == "extract":
        payload = {
            "tokens": upstream["ingest"]["tokens.jsonl"],
            "dictionary": sha256_file(cfg.dictionary_path()),
        }
    elif stage == "embed":
        payload = {
            "tokens": upstream["ingest"]["tokens.jsonl"],
            "vocab": upstream["ingest"]["vocab.tsv"],
            "params": asdict(cfg.embedding),
            "seed": cfg.seed,
        }
    elif stage == "graph":
        payload = {
            "emb": upstream["embed"]["emb.vec"],
            "seeds": upstream["extract"]["seeds.tsv"],
            "pairs": sha256_file(cfg.concept_pairs_path()),
            "params": asdict(cfg.graph),
        }
    elif stage == "curriculum":
        payload = {
            "graph": upstream["graph"],
            "seeds": upstream["extract"]["seeds.tsv"],
            "vocab": upstream["ingest"]["vocab.tsv"],
            "params": asdict(cfg.curriculum),
        }
    elif stage == "emit":
        payload = {
            "tokens": upstream["ingest"]["tokens.jsonl"],
            "plan": upstream["curriculum"]["plan/plan.json"],
            "seeds": upstream["extract"]["seeds.tsv"],
            "params": asdict(cfg.masking),
            "seed": cfg.seed,
            "generic": (sha256_file(cfg.resolve(paths.generic_freqs))
                        if cfg.masking.strategy == "diff-masking" else None),
        }
    else:
        raise ValueError(f"unknown stage: {stage}")
    return _hash_obj(payload)


def run_pipeline(cfg: PipelineConfig, force: bool = False) -> dict:
    """Executes all stages with caching; writes run.json and timings.json.

    Returns the run manifest.  Raises InputError / ValidationError for
    bad configs and StageError when a stage body fails.
    """
    cfg.validate()
    root = cfg.output_root
    root.mkdir(parents=True, exist_ok=True)
    cache = _Cache(root)
    upstream: dict[str, dict[str, str]] = {}
    stage_records: dict[str, dict] = {}
    timings: dict[str, float] = {}

    for stage in STAGES:
        inputs_hash = _stage_inputs(cfg, stage, upstream)
        cached = not force and cache.fresh(stage, inputs_hash, root)
        if cached:
            outputs = cache.outputs(stage)
            logger.info("stage %s: cache hit", stage)
        else:
            logger.info("stage %s: running", stage)
            started = time.perf_counter()
            try:
                outputs = _STAGE_FUNCS[stage](cfg, root)
            except (InputError, ValidationError):
                raise
            except Exception as exc:
                raise StageError(stage, exc) from exc
            timings[stage] = time.perf_counter() - started
            cache.record(stage, inputs_hash, outputs)
            cache.save()
        upstream[stage] = outputs
        stage_records[stage] = {
            "inputs": inputs_hash,
            "outputs": outputs,
            "cached": cached,
        }

    manifest = {
        "tool_version": __version__,
        "config": json.loads(json.dumps({
            "paths": asdict(cfg.paths),
            "ingest": asdict(cfg.ingest),
            "embedding": asdict(cfg.embedding),
            "graph": asdict(cfg.graph),
            "curriculum": asdict(cfg.curriculum),
            "masking": asdict(cfg.masking),
            "seed": cfg.seed,
        })),
        "config_hash": _hash_obj({
            "toml": cfg.to_toml(),
        }),
        "stages": stage_records,
    }
    with open(root / "run.json", "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(root / "timings.json", "w", encoding="utf-8",
              newline="\n") as f:
        json.dump({"stages_seconds": timings}, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


# ---------------------------------------------------------------------------
# Reporting


def report(run_dir: str | Path) -> str:
    """Human-readable run summary; missing artifacts are listed, not fatal."""
    root = Path(run_dir)
    lines: list[str] = []
    missing: list[str] = []

    run_path = root / "run.json"
    if not run_path.exists():
        raise InputError(f"no run manifest at {run_path}")
    manifest = json.loads(run_path.read_text())
    lines.append("MELT run report")
    lines.append(f"  tool version: {manifest.get('tool_version', '?')}")
    lines.append(f"  config hash:  {manifest.get('config_hash', '?')}")

    meta_path = root / "graph" / "meta.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        counts = meta.get("entity_counts", {})
        lines.append("entities")
        lines.append(f"  seeds:        {counts.get('seed_count', '?')}")
        lines.append(f"  expanded:     {counts.get('expanded_count', '?')}")
        lines.append(f"  total unique: {counts.get('total_unique', '?')}")
    else:
        missing.append(str(meta_path))

    plan_path = root / "plan" / "plan.json"
    data_path = root / "data" / "manifest.json"
    plan = json.loads(plan_path.read_text()) if plan_path.exists() else None
    data = json.loads(data_path.read_text()) if data_path.exists() else None
    if plan is None:
        missing.append(str(plan_path))
    if data is None:
        missing.append(str(data_path))

    if plan is not None:
        lines.append(
            f"curriculum (strategy={plan['strategy']}, K={plan['k']}, "
            f"warmup={plan['warmup_steps']}, stage={plan['stage_steps']}, "
            f"total={plan['total_steps']})"
        )
        nodes_path = root / "graph" / "nodes.tsv"
        degrees: dict[str, int] = {}
        if nodes_path.exists():
            for line in nodes_path.read_text().splitlines():
                if line and not line.startswith("#"):
                    entity, degree, _ = line.split("\t")
                    degrees[entity] = int(degree)
        cumulative: set[str] = set()
        for i, stratum in enumerate(plan["strata"], 1):
            cumulative |= set(stratum)
            ds = [degrees.get(e, 0) for e in cumulative] or [0]
            row = (f"  stage {i}: |G_{i}|={len(cumulative)} "
                   f"degrees [{min(ds)}, {max(ds)}]")
            if data is not None:
                stage_stats = data["datasets"].get(f"s{i}", {})
                row += (f" p_m={_fmt(stage_stats.get('p_m'))} "
                        f"realized={_fmt(stage_stats.get('realized_ratio'))}")
            lines.append(row)
        if data is not None:
            warm = data["datasets"].get("warmup", {})
            lines.append(
                f"  warmup: realized={_fmt(warm.get('realized_ratio'))}")

    lines.append("hyperparameters")
    for section in ("embedding", "graph", "curriculum", "masking"):
        values = manifest.get("config", {}).get(section, {})
        pairs = ", ".join(f"{k}={v}" for k, v in sorted(values.items()))
        lines.append(f"  {section}: {pairs}")
    if missing:
        lines.append("missing artifacts")
        for m in missing:
            lines.append(f"  {m}")
    return "\n".join(lines)


def _fmt(value: Any) -> str:
    if value is None:
        return "n/a"
    return f"{value:.4f}" if isinstance(value, float) else str(value)
