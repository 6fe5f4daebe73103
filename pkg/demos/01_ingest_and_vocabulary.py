"""
Ingest: normalization, sentence splitting, tokenization, vocabulary
===================================================================

The ingest stage turns raw scientific prose into token sentences and a
counted vocabulary.  Formula-shaped tokens get special treatment all the
way through: they survive punctuation detachment and keep their casing.
"""

from melt.ingest import (RawDocument, build_vocabulary, normalize_text,
                         split_sentences, tokenize, tokenize_document)
from melt.pipeline import bundled_data_path
from melt.ingest import read_corpus

# Normalization folds unicode compatibility forms and collapses runs of
# whitespace; control characters disappear entirely.
raw = "The sample  was\tannealed\x00 at 500 K."
print("normalized:", repr(normalize_text(raw)))

# The sentence splitter knows decimals and common abbreviations, so
# neither "2.5" nor "Fig." ends a sentence here.
text = ("The band gap was 2.5 eV as shown in Fig. 3. "
        "Smith et al. reported a higher value. A second phase appeared.")
for i, sentence in enumerate(split_sentences(text)):
    print(f"sentence {i}:", sentence)

# Tokenization detaches punctuation but keeps formulas whole, including
# the hydrate dot; offsets index back into the original text.
sentence = "LiCoO2, CuSO4·5H2O and water (H2O) were mixed."
for token in tokenize(sentence):
    print(f"  {token.surface!r:18s} chars [{token.char_start}, {token.char_end})")

# The vocabulary keeps words seen strictly more than min_count times,
# but every formula is kept no matter how rare.  Ordinary words are
# lowercased; formulas keep their case.
doc = RawDocument(doc_id="demo", text=(
    "The cathode was LiCoO2. The cathode was cycled. "
    "The cathode degraded. The anode was graphite."))
vocab = build_vocabulary([tokenize_document(doc)], min_count=2)
print("vocabulary:", vocab.words)
print("lookup('Cathode') ->", vocab.lookup("Cathode"))  # case-folded
print("lookup('licoo2')  ->", vocab.lookup("licoo2"))   # formulas are exact

# The same machinery scales to a corpus directory or JSONL file.
docs = read_corpus(bundled_data_path("toy_corpus.jsonl"))
tokenized = [t for t in map(tokenize_document, docs) if t is not None]
corpus_vocab = build_vocabulary(tokenized, min_count=2)
print(f"toy corpus: {len(tokenized)} documents, "
      f"{sum(t.token_count() for t in tokenized)} tokens, "
      f"{len(corpus_vocab)} vocabulary entries")
