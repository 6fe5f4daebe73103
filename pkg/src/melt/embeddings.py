"""Skip-gram negative-sampling embeddings with similarity search.

Input vectors are the published word embeddings; output vectors are
training-internal.  Training runs through a numba kernel in two modes:
single worker (bit-deterministic for a fixed seed) or multi-worker with
lock-free shared updates where races are tolerated.
"""

from __future__ import annotations

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .formulas import looks_like_formula
from .ingest import VocabEntry, Vocabulary
from .rng import derive_seed, splitmix64_array
from .sgns_kernel import train_epochs

logger = logging.getLogger(__name__)

_INIT_STREAM = 1
_TRAIN_STREAM = 2


@dataclass(frozen=True)
class EmbeddingHyperparams:
    """Training knobs; defaults follow the materials word2vec recipe."""

    dim: int = 200
    epochs: int = 30
    learning_rate: float = 0.01
    window: int = 8
    subsample_threshold: float = 1e-4
    negatives: int = 15
    min_count: int = 5
    seed: int = 1
    lr_decay: str = "linear"  # "linear" decays to lr_min; "none" stays flat
    lr_min: float = 1e-4

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("dim must be > 0")
        if self.epochs <= 0:
            raise ValueError("epochs must be > 0")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if not (0.0 < self.subsample_threshold <= 1.0):
            raise ValueError("subsample_threshold must be in (0, 1]")
        if self.lr_decay not in ("linear", "none"):
            raise ValueError("lr_decay must be 'linear' or 'none'")

    @property
    def final_learning_rate(self) -> float:
        return self.learning_rate if self.lr_decay == "none" else self.lr_min


@dataclass
class EmbeddingTable:
    vocab: Vocabulary
    input_vectors: np.ndarray   # |V| x dim, the published e(w)
    output_vectors: np.ndarray  # |V| x dim, training-internal
    epoch_losses: list[float] = field(default_factory=list)

    def __post_init__(self):
        self._row_norms: np.ndarray | None = None
        self._word_arr: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.input_vectors.shape[1]

    def __len__(self) -> int:
        return self.input_vectors.shape[0]

    def has(self, word: str) -> bool:
        return self.vocab.lookup(word) is not None

    def vector(self, word: str) -> np.ndarray:
        index = self.vocab.lookup(word)
        if index is None:
            raise KeyError(word)
        return self.input_vectors[index]

    def row_norms(self) -> np.ndarray:
        if self._row_norms is None:
            self._row_norms = np.linalg.norm(self.input_vectors, axis=1)
        return self._row_norms

    def word_array(self) -> np.ndarray:
        if self._word_arr is None:
            self._word_arr = np.array(self.vocab.words)
        return self._word_arr

    # -- serialization ------------------------------------------------------

    def save_text(self, path: str | Path) -> None:
        """word2vec text format: header '<V> <dim>', then rows with 6
        significant digits."""
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"{len(self)} {self.dim}\n")
            for i, word in enumerate(self.vocab.words):
                values = " ".join(f"{v:.6g}" for v in self.input_vectors[i])
                f.write(f"{word} {values}\n")

    @classmethod
    def load_text(cls, path: str | Path) -> "EmbeddingTable":
        with open(path, encoding="utf-8") as f:
            header = f.readline().split()
            size, dim = int(header[0]), int(header[1])
            vectors = np.zeros((size, dim), dtype=np.float64)
            entries: dict[str, VocabEntry] = {}
            for i in range(size):
                parts = f.readline().rstrip("\n").split(" ")
                word = parts[0]
                vectors[i] = [float(x) for x in parts[1 : dim + 1]]
                entries[word] = VocabEntry(i, 0, looks_like_formula(word))
        vocab = Vocabulary(entries=entries, total_tokens=0)
        return cls(vocab=vocab, input_vectors=vectors,
                   output_vectors=np.zeros_like(vectors))

    def save_binary(self, path: str | Path) -> None:
        """Little-endian binary: magic 'MELTVEC1', uint32 vocab size,
        uint32 dim, then per word a uint16 UTF-8 byte length, the bytes,
        and dim float64 values."""
        with open(path, "wb") as f:
            f.write(b"MELTVEC1")
            f.write(struct.pack("<II", len(self), self.dim))
            for i, word in enumerate(self.vocab.words):
                raw = word.encode("utf-8")
                f.write(struct.pack("<H", len(raw)))
                f.write(raw)
                f.write(self.input_vectors[i].astype("<f8").tobytes())

    @classmethod
    def load_binary(cls, path: str | Path) -> "EmbeddingTable":
        with open(path, "rb") as f:
            if f.read(8) != b"MELTVEC1":
                raise ValueError("not a MELTVEC1 file")
            size, dim = struct.unpack("<II", f.read(8))
            vectors = np.zeros((size, dim), dtype=np.float64)
            entries: dict[str, VocabEntry] = {}
            for i in range(size):
                (wlen,) = struct.unpack("<H", f.read(2))
                word = f.read(wlen).decode("utf-8")
                vectors[i] = np.frombuffer(f.read(8 * dim), dtype="<f8")
                entries[word] = VocabEntry(i, 0, looks_like_formula(word))
        vocab = Vocabulary(entries=entries, total_tokens=0)
        return cls(vocab=vocab, input_vectors=vectors,
                   output_vectors=np.zeros_like(vectors))


def subsample_keep_probability(
    word_freq: int, total_tokens: int, threshold: float
) -> float:
    """Keep probability min(1, sqrt(t/f) + t/f) with f the corpus fraction."""
    if word_freq < 1 or total_tokens < word_freq:
        raise ValueError("need 1 <= word_freq <= total_tokens")
    f = word_freq / total_tokens
    return min(1.0, (threshold / f) ** 0.5 + threshold / f)


def negative_sampling_cdf(counts: Sequence[int]) -> np.ndarray:
    """Cumulative unigram^(3/4) distribution over vocabulary indices."""
    weights = np.asarray(counts, dtype=np.float64) ** 0.75
    total = weights.sum()
    if total <= 0:
        raise ValueError("all counts are zero")
    cdf = np.cumsum(weights / total)
    cdf[-1] = 1.0
    return cdf


def sample_negatives(cdf: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n indices by inverse CDF; used for distribution checks."""
    u = rng.random(n)
    return np.searchsorted(cdf, u, side="right").clip(0, len(cdf) - 1)


def sgns_step(
    center: int,
    context: int,
    negatives: Sequence[int],
    lr: float,
    table: EmbeddingTable,
) -> float:
    """One negative-sampling update; returns the pre-update loss.

    loss = -log sigma(u_ctx . v_c) - sum_neg log sigma(-u_neg . v_c).
    Gradients are applied with step lr to the center's input vector and
    to the output vectors of the context and negatives.
    """
    vin = table.input_vectors
    vout = table.output_vectors
    v_c = vin[center].copy()  # snapshot: output updates use pre-step v_c
    grad_v = np.zeros_like(v_c)

    s = float(vout[context] @ v_c)
    loss = float(np.logaddexp(0.0, -s))
    g = _sigmoid(s) - 1.0
    grad_v += g * vout[context]
    vout[context] -= lr * g * v_c

    for neg in negatives:
        s = float(vout[neg] @ v_c)
        loss += float(np.logaddexp(0.0, s))
        g = _sigmoid(s)
        grad_v += g * vout[neg]
        vout[neg] -= lr * g * v_c

    vin[center] -= lr * grad_v
    return loss


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def initial_vectors(vocab_size: int, dim: int, seed: int) -> np.ndarray:
    """word2vec-style init: uniform in [-0.5/dim, 0.5/dim)."""
    u = splitmix64_array(derive_seed(seed, _INIT_STREAM), vocab_size * dim)
    return ((u - 0.5) / dim).reshape(vocab_size, dim)


def encode_sentences(
    sentences: Iterable[Sequence[str]], vocab: Vocabulary
) -> tuple[np.ndarray, np.ndarray]:
    """Map sentences to (token_ids, sentence_offsets); OOV tokens dropped."""
    ids: list[int] = []
    offsets = [0]
    for sentence in sentences:
        for surface in sentence:
            index = vocab.lookup(surface)
            if index is not None:
                ids.append(index)
        offsets.append(len(ids))
    return (np.asarray(ids, dtype=np.int64),
            np.asarray(offsets, dtype=np.int64))


def train_embeddings(
    sentences: Iterable[Sequence[str]],
    vocab: Vocabulary,
    hp: EmbeddingHyperparams,
    workers: int = 1,
) -> EmbeddingTable:
    """Train SGNS embeddings over the corpus.

    Single-worker runs are bit-deterministic for a fixed hp.seed.
    Multi-worker mode shards sentences round-robin and updates shared
    vectors without locks, so results are non-deterministic.
    """
    tokens, offsets = encode_sentences(sentences, vocab)
    if tokens.size == 0:
        raise ValueError("empty corpus")
    if tokens.max() >= len(vocab) or tokens.min() < 0:
        raise ValueError(
            f"token index out of range: corpus max {tokens.max()} vs "
            f"vocabulary size {len(vocab)}"
        )

    counts = np.asarray(vocab.counts(), dtype=np.int64)
    total = max(vocab.total_tokens, int(counts.sum()))
    keep = np.array([
        subsample_keep_probability(int(c), total, hp.subsample_threshold)
        for c in counts
    ])
    cdf = negative_sampling_cdf(counts)

    vin = initial_vectors(len(vocab), hp.dim, hp.seed)
    vout = np.zeros_like(vin)
    table = EmbeddingTable(vocab=vocab, input_vectors=vin, output_vectors=vout)

    if workers <= 1:
        losses = np.zeros(hp.epochs)
        train_epochs(
            tokens, offsets, keep, cdf, vin, vout,
            hp.window, hp.negatives, hp.learning_rate,
            hp.final_learning_rate, hp.epochs * tokens.size, hp.epochs,
            np.uint64(derive_seed(hp.seed, _TRAIN_STREAM, 0)), losses,
        )
        table.epoch_losses = [float(x) for x in losses]
        return table

    shards = _shard_sentences(tokens, offsets, workers)
    all_losses = []

    def run(worker: int, shard_tokens: np.ndarray, shard_offsets: np.ndarray):
        losses = np.zeros(hp.epochs)
        train_epochs(
            shard_tokens, shard_offsets, keep, cdf, vin, vout,
            hp.window, hp.negatives, hp.learning_rate,
            hp.final_learning_rate, hp.epochs * shard_tokens.size, hp.epochs,
            np.uint64(derive_seed(hp.seed, _TRAIN_STREAM, worker)), losses,
        )
        return shard_tokens.size, losses

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(run, w, st, so)
            for w, (st, so) in enumerate(shards) if st.size
        ]
        for future in futures:
            size, losses = future.result()
            all_losses.append((size, losses))

    weight = sum(s for s, _ in all_losses)
    mean = sum(s * l for s, l in all_losses) / max(1, weight)
    table.epoch_losses = [float(x) for x in np.atleast_1d(mean)]
    return table


def _shard_sentences(
    tokens: np.ndarray, offsets: np.ndarray, workers: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    shards = []
    n_sent = len(offsets) - 1
    for w in range(workers):
        ids: list[int] = []
        shard_offsets = [0]
        for si in range(w, n_sent, workers):
            ids.extend(tokens[offsets[si]: offsets[si + 1]])
            shard_offsets.append(len(ids))
        shards.append((
            np.asarray(ids, dtype=np.int64),
            np.asarray(shard_offsets, dtype=np.int64),
        ))
    return shards


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("dimension mismatch")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("degenerate vector")
    return float(u @ v / (nu * nv))


def nearest_neighbors(
    table: EmbeddingTable,
    query: np.ndarray,
    k: int,
    exclude: Iterable[str] = (),
) -> list[tuple[str, float]]:
    """k highest-cosine vocabulary words not excluded, similarity
    descending, ties by ascending word; zero-norm rows skipped.  Returns
    fewer than k when the eligible vocabulary is smaller."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(q)
    if qn == 0.0:
        raise ValueError("degenerate vector")
    norms = table.row_norms()
    denom = norms * qn
    safe = np.where(denom == 0.0, 1.0, denom)
    sims = (table.input_vectors @ q) / safe
    sims = np.where(norms == 0.0, -np.inf, sims)

    words = table.word_array()
    order = np.lexsort((words, -sims))
    excluded = set(exclude)
    out: list[tuple[str, float]] = []
    for i in order:
        if norms[i] == 0.0:
            continue
        word = table.vocab.words[int(i)]
        if word in excluded:
            continue
        out.append((word, float(sims[i])))
        if len(out) == k:
            break
    return out
