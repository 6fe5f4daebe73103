"""Corpus-to-curriculum pipeline for materials-entity masked pretraining.

The stages, each usable as a library module or CLI subcommand:

1. ingest      - normalize, sentence-split, tokenize, build the vocabulary
2. extract     - tag chemical formulas and dictionary terms as seed entities
3. embed       - train skip-gram negative-sampling word embeddings
4. graph       - expand seeds along concept vectors into a semantic graph
5. curriculum  - stratify entities by node degree into staged sets
6. emit        - write curriculum-scheduled masked MLM datasets
"""

__version__ = "0.1.0"

from .curriculum import (CurriculumPlan, build_windows, cumulative_sets,
                         make_plan, masking_ratio_at, phase_at,
                         stratify_by_degree)
from .embeddings import (EmbeddingHyperparams, EmbeddingTable,
                         cosine_similarity, nearest_neighbors, sgns_step,
                         subsample_keep_probability, train_embeddings)
from .entities import (EntityKind, EntitySpan, SeedEntitySet, TermDictionary,
                       extract_corpus_entities, tag_entities)
from .formulas import FormulaComposition, looks_like_formula, parse_formula
from .graph import (ConceptSpec, ConceptVector, SemanticGraph,
                    build_semantic_graph, concept_vector,
                    entity_counts_report, expand_entity, load_concept_pairs,
                    node_degrees)
from .ingest import (Token, TokenizedDocument, Vocabulary, build_vocabulary,
                     normalize_text, read_corpus, split_sentences, tokenize,
                     tokenize_document)
from .masking import (MaskedExample, MaskingConfig, calibrate_mask_probability,
                      emit_dataset, index_entities, mask_sequence,
                      overlap_ratio, pack_sequences, select_anchor_words)
from .pipeline import PipelineConfig, report, run_pipeline

__all__ = [
    "__version__",
    "CurriculumPlan", "build_windows", "cumulative_sets", "make_plan",
    "masking_ratio_at", "phase_at", "stratify_by_degree",
    "EmbeddingHyperparams", "EmbeddingTable", "cosine_similarity",
    "nearest_neighbors", "sgns_step", "subsample_keep_probability",
    "train_embeddings",
    "EntityKind", "EntitySpan", "SeedEntitySet", "TermDictionary",
    "extract_corpus_entities", "tag_entities",
    "FormulaComposition", "looks_like_formula", "parse_formula",
    "ConceptSpec", "ConceptVector", "SemanticGraph", "build_semantic_graph",
    "concept_vector", "entity_counts_report", "expand_entity",
    "load_concept_pairs", "node_degrees",
    "Token", "TokenizedDocument", "Vocabulary", "build_vocabulary",
    "normalize_text", "read_corpus", "split_sentences", "tokenize",
    "tokenize_document",
    "MaskedExample", "MaskingConfig", "calibrate_mask_probability",
    "emit_dataset", "index_entities", "mask_sequence", "overlap_ratio",
    "pack_sequences", "select_anchor_words",
    "PipelineConfig", "report", "run_pipeline",
]
