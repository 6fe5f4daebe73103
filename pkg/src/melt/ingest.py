"""Corpus ingestion: normalization, sentence split, chemistry-aware
tokenization and vocabulary construction.

The tokenizer keeps formula-like tokens intact ("Ba(OH)2" stays one
token) while detaching ordinary punctuation, and the vocabulary exempts
chemical formulas from the frequency cutoff so the rare tail of formulas
survives into embedding training.
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .formulas import looks_like_formula

logger = logging.getLogger(__name__)

# Sentence terminators split only when followed by whitespace and an
# uppercase letter or digit, and never directly after these (matched
# case-insensitively at a word boundary).
ABBREVIATIONS = (
    "et al.", "fig.", "figs.", "e.g.", "i.e.", "vs.", "etc.", "cf.",
    "eq.", "eqs.", "ref.", "refs.", "no.", "ca.", "approx.",
)

# Detached into standalone tokens when they flank a chunk; hyphens and
# hydrate dots are never detached (hyphenated chemical names, CuSO4·5H2O).
_DETACHABLE = set(",.;:!?()[]{}\"'“”‘’«»")

_WS_RUN = re.compile(r"\s+")
_CHUNK = re.compile(r"\S+")


@dataclass(frozen=True)
class RawDocument:
    doc_id: str
    text: str
    source_path: str = ""


@dataclass(frozen=True)
class Token:
    surface: str
    char_start: int
    char_end: int


@dataclass(frozen=True)
class TokenizedDocument:
    doc_id: str
    sentences: list[list[Token]]

    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)


def normalize_text(raw: str) -> str:
    """NFKC-normalize, drop control characters, collapse whitespace runs."""
    text = unicodedata.normalize("NFKC", raw)
    # Whitespace controls (tab, newline, ...) act as separators; every
    # other control or format character is dropped outright.
    text = "".join(
        c for c in text
        if c in "\t\n\x0b\x0c\r"
        or unicodedata.category(c) not in ("Cc", "Cf")
    )
    return _WS_RUN.sub(" ", text).strip()


def _ends_with_abbreviation(text: str, dot_index: int) -> bool:
    head = text[: dot_index + 1].lower()
    for abbr in ABBREVIATIONS:
        if head.endswith(abbr):
            boundary = len(head) - len(abbr) - 1
            if boundary < 0 or not head[boundary].isalnum():
                return True
    return False


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """(start, end) spans of sentences within normalized text."""
    spans = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c in ".!?" and i + 1 < n and text[i + 1].isspace():
            j = i + 1
            while j < n and text[j].isspace():
                j += 1
            if j < n and (text[j].isupper() or text[j].isdigit()):
                if not (c == "." and _ends_with_abbreviation(text, i)):
                    spans.append((start, i + 1))
                    start = j
                    i = j
                    continue
        i += 1
    if start < n:
        spans.append((start, n))
    return [(s, e) for s, e in spans if text[s:e].strip()]


def split_sentences(text: str) -> list[str]:
    """Split normalized text into sentences; no terminator -> one sentence."""
    return [text[s:e] for s, e in sentence_spans(text)]


def _split_chunk(
    chunk: str, base: int, is_formula: Callable[[str], bool]
) -> list[Token]:
    left: list[Token] = []
    right: list[Token] = []
    s, e = 0, len(chunk)
    while s < e:
        if is_formula(chunk[s:e]):
            break
        if chunk[s] in _DETACHABLE:
            left.append(Token(chunk[s], base + s, base + s + 1))
            s += 1
        elif chunk[e - 1] in _DETACHABLE:
            right.append(Token(chunk[e - 1], base + e - 1, base + e))
            e -= 1
        else:
            break
    core = [Token(chunk[s:e], base + s, base + e)] if s < e else []
    return left + core + right[::-1]


def tokenize(
    sentence: str, is_formula: Callable[[str], bool] = looks_like_formula
) -> list[Token]:
    """Whitespace split then punctuation detachment, formula tokens kept whole.

    Offsets are relative to the sentence string and round-trip:
    sentence[t.char_start:t.char_end] == t.surface.
    """
    tokens: list[Token] = []
    for m in _CHUNK.finditer(sentence):
        tokens.extend(_split_chunk(m.group(), m.start(), is_formula))
    return tokens


def tokenize_document(
    doc: RawDocument, is_formula: Callable[[str], bool] = looks_like_formula
) -> TokenizedDocument | None:
    """Normalize and tokenize one document; None when empty after cleanup.

    Token offsets are absolute into the normalized text, so slicing it
    reproduces every surface.
    """
    text = normalize_text(doc.text)
    if not text:
        logger.warning("document %s empty after normalization, skipped", doc.doc_id)
        return None
    sentences = []
    for start, end in sentence_spans(text):
        sent_tokens = tokenize(text[start:end], is_formula)
        sentences.append(
            [Token(t.surface, t.char_start + start, t.char_end + start)
             for t in sent_tokens]
        )
    return TokenizedDocument(doc_id=doc.doc_id, sentences=sentences)


# ---------------------------------------------------------------------------
# Vocabulary


@dataclass(frozen=True)
class VocabEntry:
    index: int
    count: int
    is_formula: bool


@dataclass
class Vocabulary:
    """Dense word -> index store; indices ordered by count desc, word asc."""

    entries: dict[str, VocabEntry]
    total_tokens: int
    _words: list[str] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self._words:
            self._words = [""] * len(self.entries)
            for word, entry in self.entries.items():
                self._words[entry.index] = word

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    @property
    def words(self) -> list[str]:
        return self._words

    def key_for(self, surface: str) -> str:
        """Vocabulary key of a raw surface: formulas keep case, words fold."""
        if surface in self.entries and self.entries[surface].is_formula:
            return surface
        return surface.lower()

    def lookup(self, surface: str) -> int | None:
        entry = self.entries.get(surface)
        if entry is None:
            entry = self.entries.get(surface.lower())
        return entry.index if entry is not None else None

    def counts(self) -> list[int]:
        return [self.entries[w].count for w in self._words]

    def save_tsv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"#total_tokens\t{self.total_tokens}\n")
            for word in self._words:
                e = self.entries[word]
                f.write(f"{word}\t{e.count}\t{1 if e.is_formula else 0}\n")

    @classmethod
    def load_tsv(cls, path: str | Path) -> "Vocabulary":
        entries: dict[str, VocabEntry] = {}
        total = 0
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                if line.startswith("#total_tokens\t"):
                    total = int(line.split("\t")[1])
                    continue
                word, count, flag = line.split("\t")
                entries[word] = VocabEntry(len(entries), int(count), flag == "1")
        return cls(entries=entries, total_tokens=total)


def build_vocabulary(
    docs: Iterable[TokenizedDocument],
    min_count: int = 5,
    formula_detector: Callable[[str], bool] = looks_like_formula,
) -> Vocabulary:
    """Count tokens and keep words with count > min_count plus every formula.

    Non-formula words are lowercased; formula surfaces keep their case
    (FeO3 != feo3).  total_tokens counts every occurrence, kept or not.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: dict[str, int] = {}
    formula_keys: set[str] = set()
    total = 0
    for doc in docs:
        for sentence in doc.sentences:
            for token in sentence:
                total += 1
                if formula_detector(token.surface):
                    key = token.surface
                    formula_keys.add(key)
                else:
                    key = token.surface.lower()
                counts[key] = counts.get(key, 0) + 1
    if total == 0:
        raise ValueError("empty corpus")

    kept = [
        (word, count) for word, count in counts.items()
        if count > min_count or word in formula_keys
    ]
    kept.sort(key=lambda item: (-item[1], item[0]))
    entries = {
        word: VocabEntry(index, count, word in formula_keys)
        for index, (word, count) in enumerate(kept)
    }
    return Vocabulary(entries=entries, total_tokens=total)


# ---------------------------------------------------------------------------
# Corpus and token-file I/O


def read_corpus(path: str | Path) -> Iterator[RawDocument]:
    """Yield documents from a directory of .txt files or a JSONL file.

    Undecodable or duplicate-id documents are skipped with a warning.
    """
    path = Path(path)
    seen: set[str] = set()
    if path.is_dir():
        for txt in sorted(path.glob("*.txt")):
            try:
                text = txt.read_text(encoding="utf-8")
            except UnicodeDecodeError:
                logger.warning("skipping %s: not valid UTF-8", txt)
                continue
            doc_id = txt.stem
            if doc_id in seen:
                logger.warning("skipping duplicate doc_id %r", doc_id)
                continue
            seen.add(doc_id)
            yield RawDocument(doc_id=doc_id, text=text, source_path=str(txt))
    elif path.is_file():
        with open(path, encoding="utf-8", errors="strict") as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    doc_id, text = record["doc_id"], record["text"]
                except (json.JSONDecodeError, KeyError, TypeError):
                    logger.warning("skipping %s line %d: bad record", path, lineno)
                    continue
                if doc_id in seen:
                    logger.warning("skipping duplicate doc_id %r", doc_id)
                    continue
                seen.add(doc_id)
                yield RawDocument(doc_id=doc_id, text=text, source_path=str(path))
    else:
        raise FileNotFoundError(f"corpus path does not exist: {path}")


def write_tokens_jsonl(docs: Iterable[TokenizedDocument], path: str | Path) -> int:
    """One document per line: {"doc_id", "sentences": [[[surface, start, end]..]..]}."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for doc in docs:
            record = {
                "doc_id": doc.doc_id,
                "sentences": [
                    [[t.surface, t.char_start, t.char_end] for t in sent]
                    for sent in doc.sentences
                ],
            }
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_tokens_jsonl(path: str | Path) -> Iterator[TokenizedDocument]:
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            yield TokenizedDocument(
                doc_id=record["doc_id"],
                sentences=[
                    [Token(s, int(a), int(b)) for s, a, b in sent]
                    for sent in record["sentences"]
                ],
            )


def iter_token_sentences(docs: Iterable[TokenizedDocument]) -> Iterator[list[str]]:
    """Flatten documents into per-sentence surface lists."""
    for doc in docs:
        for sentence in doc.sentences:
            yield [t.surface for t in sentence]
