"""
Chemical formulas and seed entities
===================================

A small grammar decides whether a token is a chemical formula and, if
so, what its element composition is.  Formula hits plus dictionary
matches become the seed entities of the corpus.
"""

from melt.entities import TermDictionary, extract_corpus_entities, tag_entities
from melt.formulas import parse_formula
from melt.ingest import RawDocument, read_corpus, tokenize_document
from melt.pipeline import bundled_data_path

# parse_formula returns the element composition, or None on rejection.
for token in ("LiCoO2", "Ba(OH)2", "CuSO4·5H2O", "LiNi0.5Mn1.5O4",
              "In", "No", "cathode", "123"):
    comp = parse_formula(token)
    if comp is None:
        print(f"{token!r:16s} -> rejected")
    else:
        counts = {el: str(n) for el, n in comp.elements.items()}
        print(f"{token!r:16s} -> {counts}")

# "In" and "No" alone are ambiguous English words (stoplist), but they
# parse fine inside a larger formula.
print("In2O3 parses:", parse_formula("In2O3") is not None)

# Dictionary terms are tagged case-insensitively with longest-match
# priority, and a dictionary term beats a formula reading of the same
# tokens ("NO gas" is the dictionary term, not nitric oxide).
dictionary = TermDictionary(["band gap", "NO gas", "specific capacity"])
doc = tokenize_document(RawDocument(doc_id="d", text=(
    "The band gap of LiCoO2 shrank after NO gas exposure.")))
for span in tag_entities(doc, dictionary):
    print(f"  tokens [{span.token_start}, {span.token_end}) "
          f"{span.entity_kind.value:10s} -> {span.canonical}")

# Over a corpus, spans aggregate into a seed entity set with corpus
# frequencies, the starting universe for graph expansion.
docs = [t for t in map(tokenize_document,
                       read_corpus(bundled_data_path("toy_corpus.jsonl")))
        if t is not None]
seeds = extract_corpus_entities(
    docs, TermDictionary.from_file(bundled_data_path("materials_dict.txt")))
print(f"{len(seeds)} seed entities; most frequent:")
top = sorted(seeds.sorted_items(), key=lambda kv: -kv[1].corpus_frequency)
for canonical, entity in top[:8]:
    print(f"  {canonical:16s} {entity.kind.value:10s} "
          f"x{entity.corpus_frequency}")
