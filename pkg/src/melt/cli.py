"""Command-line interface.

Subcommands mirror the pipeline stages (ingest, extract, embed, graph,
curriculum, emit), plus analyze, run, and report.  Exit codes: 0 on
success, 1 input error, 2 stage failure, 3 validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, curriculum as curriculum_mod
from .embeddings import EmbeddingHyperparams, EmbeddingTable, train_embeddings
from .entities import SeedEntitySet, TermDictionary, extract_corpus_entities
from .graph import (SemanticGraph, build_semantic_graph, concept_vector,
                    entity_counts_report, load_concept_pairs, node_degrees,
                    save_graph_metadata)
from .ingest import (Vocabulary, build_vocabulary, iter_token_sentences,
                     read_corpus, read_tokens_jsonl, tokenize_document,
                     write_tokens_jsonl)
from .masking import (MaskingConfig, emit_dataset, load_frequency_table,
                      overlap_ratio)
from .pipeline import (InputError, PipelineConfig, StageError,
                       ValidationError, report, run_pipeline)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_STAGE = 2
EXIT_VALIDATION = 3

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """Argument errors are input errors (exit 1, not argparse's 2)."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="melt", description=__doc__)
    parser.add_argument("--version", action="version",
                        version=f"melt {__version__}")
    parser.add_argument("--log-level", default="info",
                        choices=("debug", "info", "warning", "error"))
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("ingest", help="tokenize a corpus and build the vocabulary")
    p.add_argument("--input", required=True,
                   help="corpus directory of .txt files, or a .jsonl file")
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--out", required=True, help="vocabulary TSV path")
    p.add_argument("--tokens", required=True, help="token JSONL output path")

    p = sub.add_parser("extract", help="tag seed entities")
    p.add_argument("--tokens", required=True)
    p.add_argument("--dict", dest="dictionary", required=True,
                   help="term dictionary, one term per line")
    p.add_argument("--out", required=True, help="seed entity TSV path")

    p = sub.add_parser("embed", help="train SGNS word embeddings")
    p.add_argument("--tokens", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True, help="embedding .vec path")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--dim", type=int, default=200)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--window", type=int, default=8)
    p.add_argument("--negatives", type=int, default=15)
    p.add_argument("--subsample", type=float, default=1e-4)
    p.add_argument("--lr-decay", choices=("linear", "none"), default="linear")

    p = sub.add_parser("graph", help="expand seeds into the semantic graph")
    p.add_argument("--emb", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--concepts", required=True,
                   help="concept pair TSV: concept<TAB>subject<TAB>object")
    p.add_argument("--topk", type=int, default=5)
    p.add_argument("--min-sim", type=float, default=0.3,
                   help="similarity floor inside the top-k; -1 disables")
    p.add_argument("--out", required=True, help="graph output directory")

    p = sub.add_parser("curriculum", help="stratify entities and build the schedule")
    p.add_argument("--graph", required=True, help="graph directory")
    p.add_argument("--strategy", default="node-degree",
                   choices=curriculum_mod.STRATEGIES)
    p.add_argument("--k", type=int, default=curriculum_mod.DEFAULT_K)
    p.add_argument("--warmup", type=int,
                   default=curriculum_mod.DEFAULT_WARMUP_STEPS)
    p.add_argument("--stage", type=int,
                   default=curriculum_mod.DEFAULT_STAGE_STEPS)
    p.add_argument("--total", type=int,
                   default=curriculum_mod.DEFAULT_TOTAL_STEPS)
    p.add_argument("--warmup-mode", choices=curriculum_mod.WARMUP_MODES,
                   default="random")
    p.add_argument("--seeds", default="",
                   help="seed TSV (frequencies for frequency/concept strategies)")
    p.add_argument("--vocab", default="",
                   help="vocabulary TSV (frequencies for expansion words)")
    p.add_argument("--out", required=True, help="plan output directory")

    p = sub.add_parser("emit", help="write curriculum-masked datasets")
    p.add_argument("--tokens", required=True)
    p.add_argument("--plan", required=True, help="plan directory")
    p.add_argument("--out", required=True, help="dataset output directory")
    p.add_argument("--ratio", type=float, default=0.15)
    p.add_argument("--seqlen", type=int, default=128)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--strategy", default="melt",
                   choices=("melt", "random", "entity-only", "diff-masking"))
    p.add_argument("--shards", type=int, default=1)
    p.add_argument("--seeds", default="",
                   help="seed TSV (required for entity-only)")
    p.add_argument("--generic", default="",
                   help="generic frequency TSV (required for diff-masking)")

    p = sub.add_parser("analyze", help="dataset analyses")
    asub = p.add_subparsers(dest="analysis", required=True,
                            parser_class=_Parser)
    po = asub.add_parser("overlap", help="entity-tag overlap of masked positions")
    po.add_argument("--data", required=True, help="dataset directory")
    po.add_argument("--tagged", required=True,
                    help="CoNLL token<TAB>tag reference")

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--out", default=None, help="override the output root")
    p.add_argument("--force", action="store_true",
                   help="ignore cached artifacts")

    p = sub.add_parser("report", help="summarize a finished run")
    p.add_argument("--run", required=True, help="run output directory")
    return parser


# ---------------------------------------------------------------------------
# Command bodies


def _cmd_ingest(args) -> int:
    docs = [t for t in map(tokenize_document, read_corpus(args.input))
            if t is not None]
    vocab = build_vocabulary(docs, min_count=args.min_count)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    vocab.save_tsv(args.out)
    n = write_tokens_jsonl(docs, args.tokens)
    logger.info("ingest: %d documents, vocabulary %d", n, len(vocab))
    return EXIT_OK


def _cmd_extract(args) -> int:
    dictionary = TermDictionary.from_file(args.dictionary)
    seeds = extract_corpus_entities(read_tokens_jsonl(args.tokens), dictionary)
    seeds.save_tsv(args.out)
    logger.info("extract: %d seed entities", len(seeds))
    return EXIT_OK


def _cmd_embed(args) -> int:
    vocab = Vocabulary.load_tsv(args.vocab)
    hp = EmbeddingHyperparams(
        dim=args.dim, epochs=args.epochs, learning_rate=args.lr,
        window=args.window, subsample_threshold=args.subsample,
        negatives=args.negatives, seed=args.seed, lr_decay=args.lr_decay,
    )
    sentences = iter_token_sentences(read_tokens_jsonl(args.tokens))
    table = train_embeddings(sentences, vocab, hp, workers=args.workers)
    table.save_text(args.out)
    logger.info("embed: %d vectors of dim %d, final epoch loss %.4f",
                len(table), table.dim,
                table.epoch_losses[-1] if table.epoch_losses else float("nan"))
    return EXIT_OK


def _cmd_graph(args) -> int:
    table = EmbeddingTable.load_text(args.emb)
    seeds = SeedEntitySet.load_tsv(args.seeds)
    concepts = []
    for spec in load_concept_pairs(args.concepts):
        try:
            concepts.append(concept_vector(spec, table))
        except ValueError:
            logger.warning("concept %s has no embeddable pairs; skipped",
                           spec.name)
    if not concepts:
        raise ValidationError("no concept has embeddable pairs")
    graph = build_semantic_graph(seeds, concepts, table, k=args.topk,
                                 min_similarity=args.min_sim)
    graph.validate()
    graph.save(args.out)
    counts = entity_counts_report(graph, seeds)
    save_graph_metadata(args.out, topk=args.topk,
                        min_similarity=args.min_sim, concepts=concepts,
                        report=counts)
    logger.info("graph: %d nodes, %d edges, %d skipped seeds",
                len(graph.nodes), len(graph.edges), len(graph.skipped_seeds))
    return EXIT_OK


def _cmd_curriculum(args) -> int:
    graph = SemanticGraph.load(args.graph)
    degrees = node_degrees(graph)
    for skipped in graph.skipped_seeds:
        degrees.setdefault(skipped, 0)
    frequencies = None
    if args.strategy in ("frequency", "concept"):
        frequencies = {}
        seed_freq = {}
        if args.seeds:
            seed_set = SeedEntitySet.load_tsv(args.seeds)
            seed_freq = {c: e.corpus_frequency
                         for c, e in seed_set.sorted_items()}
        vocab = Vocabulary.load_tsv(args.vocab) if args.vocab else None
        for entity in degrees:
            index = vocab.lookup(entity) if vocab else None
            if index is not None:
                frequencies[entity] = vocab.counts()[index]
            else:
                frequencies[entity] = seed_freq.get(entity, 0)
    plan = curriculum_mod.make_plan(
        args.strategy, degrees, frequencies, k=args.k,
        warmup_steps=args.warmup, stage_steps=args.stage,
        total_steps=args.total, warmup_mode=args.warmup_mode,
    )
    plan.save(args.out)
    sizes = [len(s) for s in plan.strata]
    logger.info("curriculum: strategy=%s K=%d strata sizes %s",
                plan.strategy, plan.k, sizes)
    return EXIT_OK


def _cmd_emit(args) -> int:
    plan = curriculum_mod.CurriculumPlan.load(args.plan)
    cfg = MaskingConfig(
        target_token_ratio=args.ratio, sequence_length=args.seqlen,
        seed=args.seed,
    )
    seed_entities: list[str] = []
    if args.strategy == "entity-only":
        if not args.seeds:
            raise InputError("--seeds is required for --strategy entity-only")
        seed_entities = [
            c for c, _ in SeedEntitySet.load_tsv(args.seeds).sorted_items()
        ]
    generic = None
    if args.strategy == "diff-masking":
        if not args.generic:
            raise InputError("--generic is required for --strategy diff-masking")
        generic = load_frequency_table(args.generic)
    docs = (
        (doc.doc_id, [[t.surface for t in s] for s in doc.sentences])
        for doc in read_tokens_jsonl(args.tokens)
    )
    manifest = emit_dataset(
        docs, plan, cfg, args.out, strategy=args.strategy,
        shards=args.shards, seed_entities=seed_entities,
        generic_freqs=generic,
    )
    for label, stats in sorted(manifest["datasets"].items()):
        logger.info("emit %s: %d examples, realized ratio %.4f",
                    label, stats["examples"], stats["realized_ratio"])
    return EXIT_OK


def _cmd_analyze(args) -> int:
    result = overlap_ratio(args.data, args.tagged)
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = PipelineConfig.from_toml(args.config)
    if args.seed is not None or args.out is not None:
        from dataclasses import replace
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, paths=replace(cfg.paths, output=args.out))
    run_pipeline(cfg, force=args.force)
    print(report(cfg.output_root))
    return EXIT_OK


def _cmd_report(args) -> int:
    print(report(args.run))
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "extract": _cmd_extract,
    "embed": _cmd_embed,
    "graph": _cmd_graph,
    "curriculum": _cmd_curriculum,
    "emit": _cmd_emit,
    "analyze": _cmd_analyze,
    "run": _cmd_run,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except InputError as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        logger.error("input not found: %s", exc)
        return EXIT_INPUT
    except StageError as exc:
        logger.error("%s", exc)
        return EXIT_STAGE
    except ValidationError as exc:
        logger.error("validation: %s", exc)
        return EXIT_VALIDATION
    except ValueError as exc:
        logger.error("validation: %s", exc)
        return EXIT_VALIDATION
    except Exception:  # pragma: no cover - last-resort stage failure
        logger.exception("unexpected failure")
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
