"""
Concept vectors and semantic-graph expansion
============================================

A concept (Material, Property, Application, ...) is the mean embedding
difference over exemplar subject/object pairs.  Adding a concept vector
to an entity's embedding points at related words; the top-k cosine hits
become graph edges, growing the entity universe beyond the seeds.
"""

from melt.entities import TermDictionary, extract_corpus_entities
from melt.embeddings import EmbeddingHyperparams, train_embeddings
from melt.graph import (build_semantic_graph, concept_vector,
                        entity_counts_report, expand_entity,
                        load_concept_pairs, node_degrees)
from melt.ingest import (build_vocabulary, iter_token_sentences, read_corpus,
                         tokenize_document)
from melt.pipeline import bundled_data_path

# Rebuild the toy corpus artifacts from the earlier demos.
docs = [t for t in map(tokenize_document,
                       read_corpus(bundled_data_path("toy_corpus.jsonl")))
        if t is not None]
vocab = build_vocabulary(docs, min_count=2)
seeds = extract_corpus_entities(
    docs, TermDictionary.from_file(bundled_data_path("materials_dict.txt")))
hp = EmbeddingHyperparams(dim=32, epochs=20, learning_rate=0.025, window=4,
                          negatives=5, subsample_threshold=1e-3,
                          min_count=2, seed=7)
table = train_embeddings(list(iter_token_sentences(docs)), vocab, hp)

# Each line of the pairs file is concept<TAB>subject<TAB>object; pairs
# whose words lack embeddings are dropped from the mean.
concepts = []
for spec in load_concept_pairs(bundled_data_path("concept_pairs_six.tsv")):
    cv = concept_vector(spec, table)
    concepts.append(cv)
    print(f"concept {cv.name:14s} used {cv.used_pairs} pairs, "
          f"dropped {cv.dropped_pairs}")

# A single entity expanded along one concept: the query embedding is
# e(entity) + e(concept), the entity itself excluded from the hits.
material = concepts[0]
print(f"\nexpanding 'cathode' along {material.name}:")
for word, similarity in expand_entity("cathode", material, table, k=5):
    print(f"  {word:16s} cosine {similarity:+.3f}")

# The full graph takes one hop from every embedded seed along every
# concept, keeping hits above the similarity floor.
graph = build_semantic_graph(seeds, concepts, table, k=4,
                             min_similarity=0.3)
graph.validate()
counts = entity_counts_report(graph, seeds)
print(f"\ngraph: {len(graph.edges)} edges; "
      f"{counts['seed_count']} seeds -> {counts['total_unique']} unique "
      f"entities ({counts['expanded_count']} new)")

# Node degree is the curriculum's difficulty proxy: high degree means a
# well-connected, familiar entity.
degrees = node_degrees(graph)
ranked = sorted(degrees.items(), key=lambda kv: (-kv[1], kv[0]))
print("highest-degree nodes:")
for node, degree in ranked[:6]:
    print(f"  {node:16s} degree {degree}")
