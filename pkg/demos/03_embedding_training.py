"""
Skip-gram negative-sampling embeddings
======================================

Word vectors are trained from scratch with SGNS: a dynamic context
window, frequency subsampling, and unigram^0.75 negative sampling.
Training is deterministic for a fixed seed, so every run of this script
prints the same numbers.
"""

import numpy as np

from melt.embeddings import (EmbeddingHyperparams, cosine_similarity,
                             nearest_neighbors, train_embeddings)
from melt.ingest import (build_vocabulary, iter_token_sentences, read_corpus,
                         tokenize_document)
from melt.pipeline import bundled_data_path

docs = [t for t in map(tokenize_document,
                       read_corpus(bundled_data_path("toy_corpus.jsonl")))
        if t is not None]
vocab = build_vocabulary(docs, min_count=2)
sentences = list(iter_token_sentences(docs))
print(f"training corpus: {len(sentences)} sentences, "
      f"{len(vocab)} vocabulary words")

hp = EmbeddingHyperparams(dim=32, epochs=20, learning_rate=0.025, window=4,
                          negatives=5, subsample_threshold=1e-3,
                          min_count=2, seed=7)
table = train_embeddings(sentences, vocab, hp)

# The published embedding of a word is its input vector.
losses = table.epoch_losses
print(f"mean pair loss: epoch 1 = {losses[0]:.4f}, "
      f"epoch {len(losses)} = {losses[-1]:.4f}")

# Words that appear in the same contexts end up nearby.  The query is a
# vector, so any arithmetic over vectors is searchable.
query = table.vector("LiCoO2")
print("neighbors of LiCoO2:")
for word, similarity in nearest_neighbors(table, query, k=6):
    print(f"  {word:16s} cosine {similarity:+.3f}")

pair = cosine_similarity(table.vector("cathode"), table.vector("capacitor"))
print(f"cosine(cathode, capacitor) = {pair:+.3f}")

# Vectors round-trip through both text and binary formats.
import tempfile
from pathlib import Path
tmp = Path(tempfile.mkdtemp(prefix="melt_demo_"))
table.save_text(tmp / "toy.vec")
table.save_binary(tmp / "toy.bin")
print("wrote", sorted(p.name for p in tmp.iterdir()))

reloaded = type(table).load_binary(tmp / "toy.bin")
print("binary round-trip exact:",
      np.array_equal(reloaded.input_vectors, table.input_vectors))
