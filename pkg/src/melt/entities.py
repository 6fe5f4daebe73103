"""Seed entity extraction: dictionary term tagging plus formula spans.

Dictionary terms are matched longest-first, left to right and
case-insensitively; any remaining single token that parses as a
stoichiometric formula becomes a formula span.  Spans never overlap.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .formulas import parse_formula
from .ingest import TokenizedDocument, tokenize

logger = logging.getLogger(__name__)


class EntityKind(enum.Enum):
    FORMULA = "formula"
    DICTIONARY_TERM = "dictionary"


@dataclass(frozen=True)
class EntitySpan:
    doc_id: str
    sentence_idx: int
    token_start: int
    token_end: int
    entity_kind: EntityKind
    canonical: str


@dataclass(frozen=True)
class SeedEntity:
    kind: EntityKind
    corpus_frequency: int


@dataclass
class SeedEntitySet:
    entities: dict[str, SeedEntity]

    def __len__(self) -> int:
        return len(self.entities)

    def sorted_items(self) -> list[tuple[str, SeedEntity]]:
        return sorted(
            self.entities.items(),
            key=lambda item: (-item[1].corpus_frequency, item[0]),
        )

    def save_tsv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for canonical, entity in self.sorted_items():
                f.write(
                    f"{canonical}\t{entity.kind.value}\t{entity.corpus_frequency}\n"
                )

    @classmethod
    def load_tsv(cls, path: str | Path) -> "SeedEntitySet":
        entities: dict[str, SeedEntity] = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                canonical, kind, freq = line.split("\t")
                entities[canonical] = SeedEntity(EntityKind(kind), int(freq))
        return cls(entities=entities)


class TermDictionary:
    """Multi-word term list pre-tokenized with the pipeline tokenizer."""

    def __init__(self, terms: Iterable[str] = ()):
        self._terms: dict[tuple[str, ...], str] = {}
        self._by_first: dict[str, list[tuple[str, ...]]] = {}
        self.max_len = 0
        for term in terms:
            self.add(term)

    def add(self, term: str) -> None:
        tokens = tuple(t.surface.lower() for t in tokenize(term))
        if not tokens:
            return
        canonical = " ".join(tokens)
        if tokens in self._terms:
            return
        self._terms[tokens] = canonical
        bucket = self._by_first.setdefault(tokens[0], [])
        bucket.append(tokens)
        bucket.sort(key=len, reverse=True)
        self.max_len = max(self.max_len, len(tokens))

    def __len__(self) -> int:
        return len(self._terms)

    def __contains__(self, term: str) -> bool:
        return tuple(term.lower().split()) in self._terms

    def match_at(self, lowered: list[str], i: int) -> tuple[int, str] | None:
        """Longest dictionary match starting at position i, or None."""
        for tokens in self._by_first.get(lowered[i], ()):
            n = len(tokens)
            if i + n <= len(lowered) and tuple(lowered[i : i + n]) == tokens:
                return n, self._terms[tokens]
        return None

    @classmethod
    def from_file(cls, path: str | Path) -> "TermDictionary":
        """One term per line, UTF-8, '#' starts a comment."""
        dictionary = cls()
        with open(path, encoding="utf-8") as f:
            for line in f:
                term = line.split("#", 1)[0].strip()
                if term:
                    dictionary.add(term)
        return dictionary


def tag_entities(
    doc: TokenizedDocument, dictionary: TermDictionary
) -> list[EntitySpan]:
    """Greedy left-to-right tagging; dictionary matches beat formula spans."""
    spans: list[EntitySpan] = []
    for sentence_idx, sentence in enumerate(doc.sentences):
        surfaces = [t.surface for t in sentence]
        lowered = [s.lower() for s in surfaces]
        i = 0
        while i < len(surfaces):
            match = dictionary.match_at(lowered, i) if len(dictionary) else None
            if match is not None:
                n, canonical = match
                spans.append(EntitySpan(
                    doc.doc_id, sentence_idx, i, i + n,
                    EntityKind.DICTIONARY_TERM, canonical,
                ))
                i += n
                continue
            if parse_formula(surfaces[i]) is not None:
                spans.append(EntitySpan(
                    doc.doc_id, sentence_idx, i, i + 1,
                    EntityKind.FORMULA, surfaces[i],
                ))
            i += 1
    return spans


def extract_corpus_entities(
    docs: Iterable[TokenizedDocument], dictionary: TermDictionary
) -> SeedEntitySet:
    """Aggregate spans over the corpus into canonical entities with counts."""
    entities: dict[str, SeedEntity] = {}
    saw_document = False
    for doc in docs:
        saw_document = True
        for span in tag_entities(doc, dictionary):
            prior = entities.get(span.canonical)
            freq = prior.corpus_frequency + 1 if prior else 1
            entities[span.canonical] = SeedEntity(span.entity_kind, freq)
    if not saw_document:
        raise ValueError("empty corpus")
    return SeedEntitySet(entities=entities)


def iter_entity_spans(
    docs: Iterable[TokenizedDocument], dictionary: TermDictionary
) -> Iterator[EntitySpan]:
    for doc in docs:
        yield from tag_entities(doc, dictionary)
