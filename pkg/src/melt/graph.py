"""Concept vectors and semantic-graph expansion.

A concept is represented by exemplar (subject, object) word pairs; its
vector is the mean embedding difference over pairs.  Seed entities are
expanded along each concept by compositional cosine similarity, and the
resulting edges form a graph whose node degrees drive the curriculum.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingTable, nearest_neighbors
from .entities import SeedEntitySet

logger = logging.getLogger(__name__)

# Six relation presets from the bundled pair files; arbitrary names are
# accepted so a seventh (or custom) concept needs no code change.
STANDARD_CONCEPTS = (
    "Material",
    "Property",
    "Application",
    "Characterization",
    "Descriptor",
    "SymmetryPhase",
)


@dataclass(frozen=True)
class ConceptSpec:
    name: str
    pairs: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("concept pairs must be non-empty")


@dataclass(frozen=True)
class ConceptVector:
    name: str
    vector: np.ndarray
    used_pairs: int
    dropped_pairs: int

    def __post_init__(self):
        if self.used_pairs < 1:
            raise ValueError("used_pairs must be >= 1")
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("concept vector must be finite")


@dataclass(frozen=True)
class GraphEdge:
    source: str
    target: str
    concept: str
    similarity: float


@dataclass
class SemanticGraph:
    nodes: set[str] = field(default_factory=set)
    edges: list[GraphEdge] = field(default_factory=list)
    seed_flags: dict[str, bool] = field(default_factory=dict)
    skipped_seeds: list[str] = field(default_factory=list)

    def validate(self) -> None:
        seen: set[tuple[str, str, str]] = set()
        for e in self.edges:
            if e.source not in self.nodes or e.target not in self.nodes:
                raise ValueError(f"edge endpoint not a node: {e}")
            if e.source == e.target:
                raise ValueError(f"self-loop edge: {e}")
            if not -1.0 - 1e-12 <= e.similarity <= 1.0 + 1e-12:
                raise ValueError(f"similarity out of range: {e}")
            key = (e.source, e.target, e.concept)
            if key in seen:
                raise ValueError(f"duplicate edge triple: {key}")
            seen.add(key)
        if set(self.seed_flags) != self.nodes:
            raise ValueError("seed_flags must cover exactly the node set")

    # -- serialization ------------------------------------------------------

    def save(self, out_dir: str | Path) -> None:
        """Writes edges.tsv, nodes.tsv and skipped.tsv with stable ordering."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        edges = sorted(
            self.edges,
            key=lambda e: (e.source, e.concept, -e.similarity, e.target),
        )
        with open(out / "edges.tsv", "w", encoding="utf-8", newline="\n") as f:
            f.write("#from\tto\tconcept\tsimilarity\n")
            for e in edges:
                f.write(f"{e.source}\t{e.target}\t{e.concept}\t{e.similarity:.6g}\n")
        degrees = node_degrees(self)
        with open(out / "nodes.tsv", "w", encoding="utf-8", newline="\n") as f:
            f.write("#entity\tdegree\tis_seed\n")
            for node in sorted(self.nodes):
                flag = 1 if self.seed_flags.get(node, False) else 0
                f.write(f"{node}\t{degrees[node]}\t{flag}\n")
        with open(out / "skipped.tsv", "w", encoding="utf-8", newline="\n") as f:
            f.write("#seed_without_embedding\n")
            for seed in sorted(self.skipped_seeds):
                f.write(f"{seed}\n")

    @classmethod
    def load(cls, in_dir: str | Path) -> "SemanticGraph":
        in_dir = Path(in_dir)
        graph = cls()
        with open(in_dir / "edges.tsv", encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                src, dst, concept, sim = line.split("\t")
                graph.edges.append(GraphEdge(src, dst, concept, float(sim)))
        with open(in_dir / "nodes.tsv", encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                entity, _degree, flag = line.split("\t")
                graph.nodes.add(entity)
                graph.seed_flags[entity] = flag == "1"
        skipped = in_dir / "skipped.tsv"
        if skipped.exists():
            with open(skipped, encoding="utf-8") as f:
                graph.skipped_seeds = [
                    line.rstrip("\n") for line in f
                    if line.strip() and not line.startswith("#")
                ]
        return graph


def load_concept_pairs(path: str | Path) -> list[ConceptSpec]:
    """Reads TSV rows concept<TAB>subject<TAB>object; '#' lines ignored.
    Concepts keep first-appearance order."""
    groups: dict[str, list[tuple[str, str]]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
            concept, subject, obj = parts
            groups.setdefault(concept, []).append((subject, obj))
    return [ConceptSpec(name, tuple(pairs)) for name, pairs in groups.items()]


def save_concept_pairs(specs: Iterable[ConceptSpec], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("#concept\tsubject\tobject\n")
        for spec in specs:
            for subject, obj in spec.pairs:
                f.write(f"{spec.name}\t{subject}\t{obj}\n")


def concept_vector(spec: ConceptSpec, table: EmbeddingTable) -> ConceptVector:
    """Mean of e(subject) - e(object) over pairs with both words embedded."""
    total = np.zeros(table.dim, dtype=np.float64)
    used = 0
    dropped = 0
    for subject, obj in spec.pairs:
        if table.has(subject) and table.has(obj):
            total += table.vector(subject) - table.vector(obj)
            used += 1
        else:
            dropped += 1
    if used == 0:
        raise ValueError("concept has no embeddable pairs")
    if dropped:
        logger.info("concept %s: dropped %d/%d pairs without embeddings",
                    spec.name, dropped, len(spec.pairs))
    return ConceptVector(spec.name, total / used, used, dropped)


def expand_entity(
    entity: str,
    concept: ConceptVector,
    table: EmbeddingTable,
    k: int,
) -> list[tuple[str, float]]:
    """Top-k cosine neighbors of e(entity) + e(concept), entity excluded.

    A zero-norm query cannot be ranked; it yields an empty list with a
    warning rather than an error.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    query = table.vector(entity) + concept.vector
    if np.linalg.norm(query) == 0.0:
        logger.warning("degenerate query for entity %r along %s; skipping",
                       entity, concept.name)
        return []
    return nearest_neighbors(table, query, k, exclude=(entity,))


def build_semantic_graph(
    seeds: SeedEntitySet,
    concepts: Sequence[ConceptVector],
    table: EmbeddingTable,
    k: int = 5,
    min_similarity: float = 0.3,
) -> SemanticGraph:
    """One expansion hop from every embedded seed along every concept.

    Expansion words below min_similarity are dropped even inside the
    top-k (pass -1 to disable the floor).  Seeds without embeddings go
    to graph.skipped_seeds; isolated they may be, but embedded seeds are
    always nodes.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    graph = SemanticGraph()
    embedded = []
    for canonical, _entity in seeds.sorted_items():
        if table.has(canonical):
            embedded.append(canonical)
        else:
            graph.skipped_seeds.append(canonical)
    if not embedded:
        raise ValueError("no seed entity has an embedding")

    for seed in embedded:
        graph.nodes.add(seed)
        graph.seed_flags[seed] = True

    for seed in sorted(embedded):
        for concept in concepts:
            for word, sim in expand_entity(seed, concept, table, k):
                if sim < min_similarity:
                    continue
                if word not in graph.nodes:
                    graph.nodes.add(word)
                    graph.seed_flags[word] = False
                graph.edges.append(GraphEdge(seed, word, concept.name, sim))
    graph.skipped_seeds.sort()
    return graph


def node_degrees(graph: SemanticGraph) -> dict[str, int]:
    """Undirected incident-edge counts; isolated nodes report 0."""
    degrees = {node: 0 for node in graph.nodes}
    for e in graph.edges:
        degrees[e.source] += 1
        degrees[e.target] += 1
    return degrees


def entity_counts_report(
    graph: SemanticGraph, seeds: SeedEntitySet
) -> dict[str, int]:
    """Unique-entity counts before and after expansion."""
    seed_names = {canonical for canonical, _ in seeds.sorted_items()}
    expansion = {n for n in graph.nodes if not graph.seed_flags.get(n, False)}
    return {
        "seed_count": len(seed_names),
        "expanded_count": len(expansion - seed_names),
        "total_unique": len(seed_names | expansion),
    }


def save_graph_metadata(
    out_dir: str | Path,
    *,
    topk: int,
    min_similarity: float,
    concepts: Sequence[ConceptVector],
    report: Mapping[str, int],
) -> None:
    meta = {
        "topk": topk,
        "min_similarity": min_similarity,
        "concepts": [
            {"name": c.name, "used_pairs": c.used_pairs,
             "dropped_pairs": c.dropped_pairs}
            for c in concepts
        ],
        "entity_counts": dict(report),
    }
    path = Path(out_dir) / "meta.json"
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
