"""Skip-gram word embeddings with negative sampling.

The trained table feeds both the summarizer input (as initialization) and
the matcher's similarity matrix. The <pad> row is pinned to zero so padded
positions contribute nothing to word-pair dot products.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .tensor import Tensor
from .text import EntityCorpus, PAD_ID, SPECIALS, Vocabulary


class EmbeddingTable:
    """|V| x dim float matrix, one row per vocabulary id (specials included)."""

    def __init__(self, vocab: Vocabulary, vectors: np.ndarray):
        if vectors.shape[0] != len(vocab):
            raise ValueError(
                f"embedding rows {vectors.shape[0]} != vocabulary size {len(vocab)}")
        self.vocab = vocab
        self.vectors = np.asarray(vectors, dtype=np.float64)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def lookup(self, ids: Sequence[int]) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vectors.shape[0]):
            raise ValueError(f"embedding id out of range for table of {self.vectors.shape[0]}")
        return Tensor(self.vectors[ids])

    def vector(self, token: str) -> np.ndarray:
        return self.vectors[self.vocab.token_to_id[token]]


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine is undefined for a zero vector")
    return float(np.dot(u, v) / (nu * nv))


def nearest_neighbors(table: EmbeddingTable, token: str, k: int) -> list[str]:
    """k most cosine-similar tokens, excluding the query and specials."""
    query = table.vector(token)
    scored = []
    for other, idx in table.vocab.token_to_id.items():
        if other == token or other in SPECIALS:
            continue
        vec = table.vectors[idx]
        if np.linalg.norm(vec) == 0.0:
            continue
        scored.append((cosine(query, vec), other))
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return [tok for _, tok in scored[:k]]


def _corpus_sentences(corpora: Iterable[EntityCorpus], vocab: Vocabulary):
    for corpus in corpora:
        for doc in corpus.documents:
            yield vocab.encode(doc.tokens)


def train_skipgram(corpora: Sequence[EntityCorpus], vocab: Vocabulary,
                   dim: int = 64, window: int = 5, negatives: int = 5,
                   epochs: int = 3, lr: float = 0.025, seed: int = 0) -> EmbeddingTable:
    """Skip-gram with negative sampling; deterministic for a fixed seed.

    Negative draws use the unigram^0.75 distribution; the learning rate
    decays linearly to 1e-4 over training.
    """
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    if window < 1 or negatives < 1:
        raise ValueError("window and negatives must be >= 1")
    sentences = list(_corpus_sentences(corpora, vocab))
    if not any(sentences):
        raise ValueError("cannot train embeddings on an empty corpus")

    v = len(vocab)
    rng = np.random.default_rng(seed)
    w_in = (rng.random((v, dim)) - 0.5) / dim
    w_out = np.zeros((v, dim))
    w_in[PAD_ID] = 0.0

    counts = np.zeros(v)
    for sent in sentences:
        for i in sent:
            counts[i] += 1
    counts[:len(SPECIALS)] = 0.0
    noise = counts ** 0.75
    if noise.sum() == 0.0:
        raise ValueError("cannot train embeddings on an empty corpus")
    noise /= noise.sum()

    total_centers = sum(len(s) for s in sentences) * epochs
    min_lr, done = 1e-4, 0
    for _ in range(epochs):
        for sent in sentences:
            for pos, center in enumerate(sent):
                alpha = max(min_lr, lr * (1.0 - done / total_centers))
                done += 1
                if center == PAD_ID:
                    continue
                span = rng.integers(1, window + 1)
                lo, hi = max(0, pos - span), min(len(sent), pos + span + 1)
                context = [sent[j] for j in range(lo, hi) if j != pos]
                for ctx in context:
                    targets = np.empty(1 + negatives, dtype=np.int64)
                    targets[0] = ctx
                    targets[1:] = rng.choice(v, size=negatives, p=noise)
                    labels = np.zeros(1 + negatives)
                    labels[0] = 1.0
                    vec = w_in[center]
                    outs = w_out[targets]
                    scores = 1.0 / (1.0 + np.exp(-np.clip(outs @ vec, -60, 60)))
                    gsc = (scores - labels) * alpha
                    gin = gsc @ outs
                    w_out[targets] -= np.outer(gsc, vec)
                    w_in[center] -= gin
        if not np.isfinite(w_in).all() or not np.isfinite(w_out).all():
            raise FloatingPointError("skip-gram training produced non-finite vectors")

    w_in[PAD_ID] = 0.0
    return EmbeddingTable(vocab, w_in)
