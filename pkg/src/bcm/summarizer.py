"""Transformer encoder-decoder abstractive summarizer with greedy decoding.

Post-norm residual blocks (Norm(x + Sublayer(x))), learned position
embeddings, teacher-forced cross-entropy training, and argmax decoding
that stops at [SEP] or the configured length cap.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .embeddings import EmbeddingTable
from .optim import Adam
from .tensor import (
    ACTIVATIONS,
    Tensor,
    concat,
    cross_entropy,
    layer_norm,
    matmul,
    scaled_dot_product_attention,
)
from .text import CLS_ID, EntityCorpus, PAD_ID, SEP_ID, Vocabulary


@dataclass(frozen=True)
class SummarizerConfig:
    vocab_size: int
    num_layers: int = 2
    hidden_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 128
    max_source_len: int = 128
    max_decode_len: int = 30
    interlayer_activation: str = "gelu"

    def __post_init__(self):
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}")
        if self.max_decode_len < 1:
            raise ValueError("max_decode_len must be >= 1")
        if self.interlayer_activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.interlayer_activation!r}")

    def to_dict(self) -> dict:
        return {"vocab_size": self.vocab_size, "num_layers": self.num_layers,
                "hidden_dim": self.hidden_dim, "num_heads": self.num_heads,
                "ffn_dim": self.ffn_dim, "max_source_len": self.max_source_len,
                "max_decode_len": self.max_decode_len,
                "interlayer_activation": self.interlayer_activation}

    @classmethod
    def from_dict(cls, d: dict) -> "SummarizerConfig":
        return cls(**d)


def desk_config(vocab_size: int, **overrides) -> SummarizerConfig:
    return replace(SummarizerConfig(vocab_size=vocab_size), **overrides)


def full_scale_config(vocab_size: int) -> SummarizerConfig:
    """12-layer / 768-hidden / 12-head preset; constructible, not test-scale."""
    return SummarizerConfig(vocab_size=vocab_size, num_layers=12, hidden_dim=768,
                            num_heads=12, ffn_dim=3072, max_source_len=512,
                            max_decode_len=100, interlayer_activation="gelu")


class SummarizerModel:
    def __init__(self, config: SummarizerConfig, seed: int = 0,
                 init_embeddings: Optional[EmbeddingTable] = None):
        self.config = config
        rng = np.random.default_rng(seed)
        d, f, v = config.hidden_dim, config.ffn_dim, config.vocab_size
        p: dict[str, Tensor] = {}

        def weight(shape, scale=0.02):
            return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)

        p["emb.tok"] = weight((v, d))
        if init_embeddings is not None:
            if init_embeddings.dim != d:
                raise ValueError(
                    f"init embedding dim {init_embeddings.dim} != hidden_dim {d}")
            if init_embeddings.vectors.shape[0] != v:
                raise ValueError(
                    f"init embedding rows {init_embeddings.vectors.shape[0]} != vocab {v}")
            p["emb.tok"].data[...] = init_embeddings.vectors
        p["emb.pos"] = weight((max(config.max_source_len, config.max_decode_len + 1), d))
        for l in range(config.num_layers):
            for name in ("wq", "wk", "wv", "wo"):
                p[f"enc.{l}.attn.{name}"] = weight((d, d))
            p[f"enc.{l}.ffn.w1"] = weight((d, f))
            p[f"enc.{l}.ffn.b1"] = Tensor(np.zeros(f), requires_grad=True)
            p[f"enc.{l}.ffn.w2"] = weight((f, d))
            p[f"enc.{l}.ffn.b2"] = Tensor(np.zeros(d), requires_grad=True)
            for ln in ("ln1", "ln2"):
                p[f"enc.{l}.{ln}.g"] = Tensor(np.ones(d), requires_grad=True)
                p[f"enc.{l}.{ln}.b"] = Tensor(np.zeros(d), requires_grad=True)
            for block in ("self", "cross"):
                for name in ("wq", "wk", "wv", "wo"):
                    p[f"dec.{l}.{block}.{name}"] = weight((d, d))
            p[f"dec.{l}.ffn.w1"] = weight((d, f))
            p[f"dec.{l}.ffn.b1"] = Tensor(np.zeros(f), requires_grad=True)
            p[f"dec.{l}.ffn.w2"] = weight((f, d))
            p[f"dec.{l}.ffn.b2"] = Tensor(np.zeros(d), requires_grad=True)
            for ln in ("ln1", "ln2", "ln3"):
                p[f"dec.{l}.{ln}.g"] = Tensor(np.ones(d), requires_grad=True)
                p[f"dec.{l}.{ln}.b"] = Tensor(np.zeros(d), requires_grad=True)
        p["out_proj.w"] = weight((d, v))
        p["out_proj.b"] = Tensor(np.zeros(v), requires_grad=True)
        self.params = p
        assert self.parameter_count() == self._analytic_parameter_count()

    def parameters(self) -> list[Tensor]:
        return [self.params[k] for k in sorted(self.params)]

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def _analytic_parameter_count(self) -> int:
        c = self.config
        d, f, v = c.hidden_dim, c.ffn_dim, c.vocab_size
        pos = max(c.max_source_len, c.max_decode_len + 1)
        enc_layer = 4 * d * d + (d * f + f) + (f * d + d) + 2 * 2 * d
        dec_layer = 8 * d * d + (d * f + f) + (f * d + d) + 3 * 2 * d
        return (v * d + pos * d + c.num_layers * (enc_layer + dec_layer)
                + d * v + v)

    # ---- building blocks ----

    def _attention(self, prefix: str, x_q: Tensor, x_kv: Tensor,
                   mask: Optional[np.ndarray]) -> Tensor:
        p, h = self.params, self.config.num_heads
        d = self.config.hidden_dim
        dh = d // h
        q = matmul(x_q, p[f"{prefix}.wq"])
        k = matmul(x_kv, p[f"{prefix}.wk"])
        v = matmul(x_kv, p[f"{prefix}.wv"])
        heads = []
        for i in range(h):
            cols = (slice(None), slice(i * dh, (i + 1) * dh))
            heads.append(scaled_dot_product_attention(q[cols], k[cols], v[cols], mask))
        return matmul(concat(heads, axis=1), p[f"{prefix}.wo"])

    def _ffn(self, prefix: str, x: Tensor) -> Tensor:
        p = self.params
        act = ACTIVATIONS[self.config.interlayer_activation]
        hidden = act(matmul(x, p[f"{prefix}.w1"]) + p[f"{prefix}.b1"])
        return matmul(hidden, p[f"{prefix}.w2"]) + p[f"{prefix}.b2"]

    def _embed(self, ids: Sequence[int]) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        tok = self.params["emb.tok"][ids]
        pos = self.params["emb.pos"][np.arange(len(ids))]
        return tok + pos

    # ---- encoder / decoder ----

    def encode(self, source_ids: Sequence[int]) -> Tensor:
        ids = list(source_ids)
        if not ids:
            raise ValueError("cannot encode an empty source")
        if len(ids) > self.config.max_source_len:
            raise ValueError(
                f"source length {len(ids)} exceeds max_source_len "
                f"{self.config.max_source_len}")
        keep = np.asarray(ids) != PAD_ID
        if not keep.any():
            raise ValueError("source is all padding")
        mask = np.broadcast_to(keep, (len(ids), len(ids)))
        x = self._embed(ids)
        for l in range(self.config.num_layers):
            att = self._attention(f"enc.{l}.attn", x, x, mask)
            x = layer_norm(x + att, self.params[f"enc.{l}.ln1.g"],
                           self.params[f"enc.{l}.ln1.b"])
            f = self._ffn(f"enc.{l}.ffn", x)
            x = layer_norm(x + f, self.params[f"enc.{l}.ln2.g"],
                           self.params[f"enc.{l}.ln2.b"])
        return x

    def decoder_logits(self, encoder_out: Tensor, prefix_ids: Sequence[int],
                       source_ids: Sequence[int]) -> Tensor:
        """Logits (prefix_len x vocab) under causal self + cross attention."""
        prefix = list(prefix_ids)
        if not prefix:
            raise ValueError("decoder prefix is empty")
        if prefix[0] != CLS_ID:
            raise ValueError("decoder prefix must start with [CLS]")
        t = len(prefix)
        causal = np.tril(np.ones((t, t), dtype=bool))
        src_keep = np.broadcast_to(np.asarray(list(source_ids)) != PAD_ID,
                                   (t, len(list(source_ids))))
        x = self._embed(prefix)
        for l in range(self.config.num_layers):
            att = self._attention(f"dec.{l}.self", x, x, causal)
            x = layer_norm(x + att, self.params[f"dec.{l}.ln1.g"],
                           self.params[f"dec.{l}.ln1.b"])
            cross = self._attention(f"dec.{l}.cross", x, encoder_out, src_keep)
            x = layer_norm(x + cross, self.params[f"dec.{l}.ln2.g"],
                           self.params[f"dec.{l}.ln2.b"])
            f = self._ffn(f"dec.{l}.ffn", x)
            x = layer_norm(x + f, self.params[f"dec.{l}.ln3.g"],
                           self.params[f"dec.{l}.ln3.b"])
        return matmul(x, self.params["out_proj.w"]) + self.params["out_proj.b"]

    def decode_step(self, encoder_out: Tensor, prefix_ids: Sequence[int],
                    source_ids: Sequence[int]) -> np.ndarray:
        """Next-token logits given the generated prefix."""
        logits = self.decoder_logits(encoder_out, prefix_ids, source_ids)
        return logits.data[-1]

    def generate_greedy(self, source_ids: Sequence[int]) -> list[int]:
        """Argmax decoding from [CLS]; ties break toward the lowest token id.

        The returned sequence contains neither [CLS] nor [SEP].
        """
        encoder_out = self.encode(source_ids)
        prefix = [CLS_ID]
        out: list[int] = []
        while len(out) < self.config.max_decode_len:
            logits = self.decode_step(encoder_out, prefix, source_ids).copy()
            logits[[PAD_ID, CLS_ID]] = -np.inf  # control symbols are never emitted
            nxt = int(np.argmax(logits))
            if nxt == SEP_ID:
                break
            out.append(nxt)
            prefix.append(nxt)
        return out


def train_step(model: SummarizerModel, source_ids: Sequence[int],
               target_ids: Sequence[int], optimizer: Adam) -> float:
    """One teacher-forced step: predict target..[SEP] from [CLS]..target."""
    target_ids = list(target_ids)
    if len(target_ids) > model.config.max_decode_len:
        raise ValueError(
            f"target length {len(target_ids)} exceeds max_decode_len "
            f"{model.config.max_decode_len}")
    decoder_in = [CLS_ID] + target_ids
    expected = target_ids + [SEP_ID]
    encoder_out = model.encode(source_ids)
    logits = model.decoder_logits(encoder_out, decoder_in, source_ids)
    loss = cross_entropy(logits, expected, ignore_index=PAD_ID)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return float(loss.data)


def summarize_entity(model: SummarizerModel, corpus: EntityCorpus,
                     vocab: Vocabulary, max_docs: int = 1) -> list[list[str]]:
    """Greedy per-document summaries for the first max_docs documents."""
    if max_docs < 1:
        raise ValueError("max_docs must be >= 1")
    summaries = []
    for doc in corpus.documents[:max_docs]:
        ids = vocab.encode(doc.tokens)[:model.config.max_source_len]
        summaries.append(vocab.decode(model.generate_greedy(ids)))
    return summaries
