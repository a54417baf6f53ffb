"""Synthetic corpus/pair generation and seeded dataset splitting.

Stands in for the private endorsement dataset: every brand owns a small
set of signature tokens; a matched celebrity's documents quote them, so
matched pairs share planted topic tokens and the task is learnable by
construction. Each brand also owns private domain words that surround its
signature tokens, so signature embeddings of different brands stay apart
under distributional training. With signal_strength 0 nothing is planted
and the labels carry no signal at all.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

_CELEBRITY_WORDS = [
    "stage", "film", "drama", "concert", "award", "fans", "studio", "scene",
    "role", "tour", "album", "interview", "gala", "camera", "premiere", "agent",
    "acting", "singer", "dancer", "host", "variety", "charity", "audience",
    "spotlight", "magazine", "festival", "red", "carpet", "talent", "debut",
]
_BRAND_WORDS = [
    "product", "market", "store", "launch", "sales", "design", "quality",
    "customer", "retail", "factory", "logo", "campaign", "price", "flagship",
    "series", "model", "company", "founder", "industry", "supply", "brandname",
    "warranty", "package", "outlet", "export", "patent", "slogan", "revenue",
]


def _sentence(words) -> str:
    return " ".join(words) + " ."


def generate_synthetic_dataset(corpus_path, pairs_path, num_celebrities: int = 63,
                               num_brands: int = 35, positive_rate: float = 0.055,
                               signal_strength: float = 0.9, seed: int = 0,
                               news_per_entity: int = 5,
                               signal_docs=None) -> dict:
    """Write corpus + pair-label JSON-lines files; byte-identical per seed.

    Each entity gets 1 encyclopedia + news_per_entity news documents.
    signal_docs selects which celebrity document positions (0 =
    encyclopedia, 1.. = news) may quote a matched brand's signature
    tokens; default is every document. Returns summary statistics.
    """
    if not 0.0 < positive_rate < 1.0:
        raise ValueError(f"positive_rate must be in (0,1), got {positive_rate}")
    if not 0.0 <= signal_strength <= 1.0:
        raise ValueError(f"signal_strength must be in [0,1], got {signal_strength}")
    rng = np.random.default_rng(seed)
    celebrities = [f"cel{i:03d}" for i in range(num_celebrities)]
    brands = [f"brd{j:03d}" for j in range(num_brands)]
    signatures = {b: [f"sig_{b}_{k}" for k in range(3)] for b in brands}
    domains = {b: [f"dom_{b}_{k}" for k in range(4)] for b in brands}

    labels = {}
    for c in celebrities:
        for b in brands:
            labels[(c, b)] = int(rng.random() < positive_rate)
    n_positive = sum(labels.values())
    if n_positive == 0:
        raise ValueError(
            "no positive pairs drawn; raise positive_rate or change the seed")

    # celebrity doc -> brand signature phrases quoted there
    quoted: dict[tuple, list] = {}
    doc_count = 1 + news_per_entity
    allowed = set(range(doc_count)) if signal_docs is None else set(signal_docs)
    for (c, b), label in labels.items():
        if not label:
            continue
        for pos in sorted(allowed):
            if pos < doc_count and rng.random() < signal_strength:
                quoted.setdefault((c, pos), []).extend(signatures[b])

    def filler(pool, n):
        return [pool[i] for i in rng.integers(0, len(pool), n)]

    records = []
    for c in celebrities:
        for pos in range(doc_count):
            kind = "encyclopedia" if pos == 0 else "news"
            q = quoted.get((c, pos), [])
            lead = [c, kind] + q + filler(_CELEBRITY_WORDS, 4)
            # signatures repeat in the body so their embeddings get enough
            # updates to drift toward the quoting brand's domain
            body = filler(_CELEBRITY_WORDS, 8) + q
            records.append({"entity_id": c, "entity_type": "celebrity",
                            "source_kind": kind, "doc_id": f"{c}-doc{pos}",
                            "text": _sentence(lead) + " " + _sentence(body)})
    for b in brands:
        for pos in range(doc_count):
            kind = "encyclopedia" if pos == 0 else "news"
            lead = [b, kind] + signatures[b] + filler(domains[b], 2)
            body = filler(domains[b], 4) + filler(_BRAND_WORDS, 2) + signatures[b]
            records.append({"entity_id": b, "entity_type": "brand",
                            "source_kind": kind, "doc_id": f"{b}-doc{pos}",
                            "text": _sentence(lead) + " " + _sentence(body)})

    Path(corpus_path).write_text(
        "\n".join(json.dumps(r, sort_keys=True) for r in records) + "\n",
        encoding="utf-8")
    Path(pairs_path).write_text(
        "\n".join(json.dumps({"celebrity_id": c, "brand_id": b, "label": y},
                             sort_keys=True)
                  for (c, b), y in labels.items()) + "\n",
        encoding="utf-8")
    return {"pairs": len(labels), "positives": n_positive,
            "documents": len(records),
            "prevalence": n_positive / len(labels)}


def split_dataset(items, fraction: float, seed: int):
    """Seeded shuffle, then a ceil(fraction * N) / remainder split."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0,1), got {fraction}")
    items = list(items)
    if not items:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(items))
    cut = math.ceil(fraction * len(items))
    train = [items[i] for i in order[:cut]]
    test = [items[i] for i in order[cut:]]
    return train, test


def first_sentence_tokens(raw_text: str, clean, max_tokens: int = 12) -> list:
    """Silver summary target: the document's first sentence, cleaned.

    Falls back to the head of the document when no sentence boundary
    exists.
    """
    for stop in (".", "!", "?", "。"):
        idx = raw_text.find(stop)
        if idx > 0:
            tokens = clean(raw_text[:idx])
            if tokens:
                return tokens[:max_tokens]
    return clean(raw_text)[:max_tokens]
