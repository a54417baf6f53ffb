"""Similarity-matrix CNN matcher.

Both summaries are embedded, their word-pair dot products form an L x L
matrix treated as a one-channel image, and stacked conv/maxpool layers
feed a two-layer MLP ending in a single sigmoid probability.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .embeddings import EmbeddingTable
from .optim import Adam
from .tensor import (
    ShapeMismatchError,
    Tensor,
    bce_with_logits,
    conv2d,
    matmul,
    maxpool2d,
    relu,
    sigmoid,
)
from .text import PAD_ID, SEP_ID, Vocabulary


@dataclass(frozen=True)
class MatcherConfig:
    summary_max_tokens: int = 32           # tokens per side after splicing
    embedding_dim: int = 64
    conv_specs: tuple = ((5, 8), (3, 10))  # (kernel size, out channels)
    pool_specs: tuple = ((2, 2), (2, 2))
    mlp_hidden: int = 32
    threshold: float = 0.5
    normalize: bool = False                # cosine cells instead of raw dots

    def __post_init__(self):
        if len(self.conv_specs) != len(self.pool_specs):
            raise ValueError("conv_specs and pool_specs must pair up")
        if self.feature_size() <= 0:
            raise ValueError(
                f"L={self.summary_max_tokens} leaves no features after conv/pool")

    def feature_size(self) -> int:
        h = w = self.summary_max_tokens
        channels = 1
        for (r, c_out), (ph, pw) in zip(self.conv_specs, self.pool_specs):
            h, w = h - r + 1, w - r + 1
            if h <= 0 or w <= 0:
                return 0
            h, w = h // ph, w // pw
            channels = c_out
        return channels * h * w

    def to_dict(self) -> dict:
        return {"summary_max_tokens": self.summary_max_tokens,
                "embedding_dim": self.embedding_dim,
                "conv_specs": [list(s) for s in self.conv_specs],
                "pool_specs": [list(s) for s in self.pool_specs],
                "mlp_hidden": self.mlp_hidden,
                "threshold": self.threshold,
                "normalize": self.normalize}

    @classmethod
    def from_dict(cls, d: dict) -> "MatcherConfig":
        return cls(summary_max_tokens=d["summary_max_tokens"],
                   embedding_dim=d["embedding_dim"],
                   conv_specs=tuple(tuple(s) for s in d["conv_specs"]),
                   pool_specs=tuple(tuple(s) for s in d["pool_specs"]),
                   mlp_hidden=d["mlp_hidden"], threshold=d["threshold"],
                   normalize=d.get("normalize", False))


@dataclass
class MatchExample:
    celebrity_id: str
    brand_id: str
    celebrity_ids: list
    brand_ids: list
    label: Optional[int] = None


def prepare_pair(celebrity_summaries: Sequence[Sequence[str]],
                 brand_summaries: Sequence[Sequence[str]],
                 vocab: Vocabulary, max_tokens: int,
                 celebrity_id: str = "", brand_id: str = "") -> MatchExample:
    """Splice per-document summaries (document order, [SEP]-separated),
    encode, and pad/truncate both sides to max_tokens."""

    def splice(summaries):
        ids: list[int] = []
        for i, summary in enumerate(summaries):
            if i > 0:
                ids.append(SEP_ID)
            ids.extend(vocab.encode(summary))
        return ids

    cel, brand = splice(celebrity_summaries), splice(brand_summaries)
    if not cel and not brand:
        raise ValueError("both sides are empty after encoding")

    def fit(ids):
        ids = ids[:max_tokens]
        return ids + [PAD_ID] * (max_tokens - len(ids))

    return MatchExample(celebrity_id, brand_id, fit(cel), fit(brand))


def similarity_matrix(e_cel: Tensor, e_brand: Tensor) -> Tensor:
    """Word-pair dot products: M[i, j] = e_cel[i] . e_brand[j]."""
    if e_cel.data.shape[1] != e_brand.data.shape[1]:
        raise ShapeMismatchError(
            f"similarity_matrix: dims {e_cel.data.shape} vs {e_brand.data.shape}")
    return matmul(e_cel, e_brand.T)


class MatcherModel:
    def __init__(self, config: MatcherConfig, table: EmbeddingTable, seed: int = 0):
        if table.dim != config.embedding_dim:
            raise ValueError(
                f"embedding table dim {table.dim} != config dim {config.embedding_dim}")
        self.config = config
        self.table = table
        rng = np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {}
        c_in = 1
        for n, (r, c_out) in enumerate(config.conv_specs, start=1):
            scale = np.sqrt(2.0 / (c_in * r * r))
            self.params[f"match.conv{n}.w"] = Tensor(
                rng.standard_normal((c_out, c_in, r, r)) * scale, requires_grad=True)
            self.params[f"match.conv{n}.b"] = Tensor(np.zeros(c_out), requires_grad=True)
            c_in = c_out
        feat = config.feature_size()
        self.params["match.mlp.w1"] = Tensor(
            rng.standard_normal((feat, config.mlp_hidden)) * np.sqrt(2.0 / feat),
            requires_grad=True)
        self.params["match.mlp.b1"] = Tensor(np.zeros(config.mlp_hidden),
                                             requires_grad=True)
        self.params["match.mlp.w2"] = Tensor(
            rng.standard_normal((config.mlp_hidden, 1)) * np.sqrt(1.0 / config.mlp_hidden),
            requires_grad=True)
        self.params["match.mlp.b2"] = Tensor(np.zeros(1), requires_grad=True)

    def parameters(self) -> list[Tensor]:
        return [self.params[k] for k in sorted(self.params)]

    def _embed(self, ids: Sequence[int]) -> Tensor:
        rows = self.table.lookup(ids)
        if not self.config.normalize:
            return rows
        norms = np.linalg.norm(rows.data, axis=1, keepdims=True)
        return Tensor(rows.data / np.where(norms == 0.0, 1.0, norms))

    def logit(self, example: MatchExample) -> Tensor:
        cfg = self.config
        if len(example.celebrity_ids) != cfg.summary_max_tokens \
                or len(example.brand_ids) != cfg.summary_max_tokens:
            raise ValueError(
                f"example sides must be length {cfg.summary_max_tokens}, got "
                f"{len(example.celebrity_ids)}/{len(example.brand_ids)}")
        m = similarity_matrix(self._embed(example.celebrity_ids),
                              self._embed(example.brand_ids))
        x = m.reshape(1, cfg.summary_max_tokens, cfg.summary_max_tokens)
        for n, (ph, pw) in enumerate(cfg.pool_specs, start=1):
            x = conv2d(x, self.params[f"match.conv{n}.w"],
                       self.params[f"match.conv{n}.b"], activation="relu")
            x = maxpool2d(x, ph, pw)
        z = x.reshape(1, cfg.feature_size())
        hidden = relu(matmul(z, self.params["match.mlp.w1"]) + self.params["match.mlp.b1"])
        out = matmul(hidden, self.params["match.mlp.w2"]) + self.params["match.mlp.b2"]
        return out.reshape(1)

    def forward(self, example: MatchExample) -> float:
        return float(sigmoid(self.logit(example)).data[0])

    def predict(self, example: MatchExample,
                threshold: Optional[float] = None) -> tuple[int, float]:
        threshold = self.config.threshold if threshold is None else threshold
        p = self.forward(example)
        return (1 if p >= threshold else 0), p


def train(model: MatcherModel, examples: Sequence[MatchExample], epochs: int = 100,
          lr: float = 1e-3, batch_size: int = 2, seed: int = 0,
          positive_weight: float = 1.0) -> list[float]:
    """Minibatch BCE training; returns the mean per-example loss by epoch."""
    if not examples:
        raise ValueError("training set is empty")
    labels = {ex.label for ex in examples}
    if None in labels:
        raise ValueError("all training examples need labels")
    if len(labels) == 1:
        import warnings
        warnings.warn("training set contains a single class", stacklevel=2)
    opt = Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    order = np.arange(len(examples))
    log = []
    for _ in range(epochs):
        rng.shuffle(order)
        total = 0.0
        for start in range(0, len(order), batch_size):
            batch = [examples[i] for i in order[start:start + batch_size]]
            opt.zero_grad()
            loss = None
            for ex in batch:
                weight = positive_weight if ex.label == 1 else 1.0
                term = bce_with_logits(model.logit(ex), [float(ex.label)]) * weight
                loss = term if loss is None else loss + term
            loss.backward()
            opt.step()
            total += float(loss.data)
        log.append(total / len(order))
    return log
