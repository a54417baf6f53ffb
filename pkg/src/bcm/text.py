"""Document cleaning, tokenization, vocabulary, and the entity-corpus model.

Script-agnostic: spaced scripts get lowercased word tokens, CJK runs fall
back to character-level tokens. Documents whose cleaned token list is empty
are rejected at corpus admission, not silently dropped.
"""

from __future__ import annotations

import json
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

PAD, UNK, CLS, SEP = "<pad>", "<unk>", "[CLS]", "[SEP]"
SPECIALS = (PAD, UNK, CLS, SEP)
PAD_ID, UNK_ID, CLS_ID, SEP_ID = 0, 1, 2, 3

SOURCE_KINDS = ("encyclopedia", "news")
ENTITY_TYPES = ("celebrity", "brand")

# \w-runs keep underscores and digits together; CJK handled separately below
_WORD_RE = re.compile(r"[\w]+", re.UNICODE)
_CJK_RE = re.compile(r"[一-鿿㐀-䶿぀-ヿ]")


class CorpusError(ValueError):
    """Malformed corpus input."""


def clean_text(raw: str, stopwords: Optional[set] = None) -> list[str]:
    """Lowercase, strip control chars and punctuation, drop stopwords.

    CJK characters become single-character tokens; everything else is
    split on non-word characters. Empty output is allowed here.
    """
    stopwords = stopwords or set()
    raw = "".join(ch if unicodedata.category(ch)[0] != "C" or ch.isspace() else " "
                  for ch in raw)
    tokens: list[str] = []
    for run in _WORD_RE.findall(raw.lower()):
        pieces: list[str] = []
        buf = ""
        for ch in run:
            if _CJK_RE.match(ch):
                if buf:
                    pieces.append(buf)
                    buf = ""
                pieces.append(ch)
            else:
                buf += ch
        if buf:
            pieces.append(buf)
        tokens.extend(pieces)
    return [t for t in tokens if t and t not in stopwords]


def load_stopwords(path) -> set:
    """One token per line; blank lines ignored."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            words.add(line)
    return words


@dataclass(frozen=True)
class Document:
    doc_id: str
    source_kind: str
    raw_text: str
    tokens: tuple

    def __post_init__(self):
        if self.source_kind not in SOURCE_KINDS:
            raise CorpusError(f"unknown source_kind {self.source_kind!r}")


@dataclass(frozen=True)
class EntityCorpus:
    """An entity with its ordered, cleaned documents (encyclopedia first)."""

    entity_id: str
    entity_type: str
    documents: tuple

    def __post_init__(self):
        if self.entity_type not in ENTITY_TYPES:
            raise CorpusError(f"unknown entity_type {self.entity_type!r}")
        if not self.documents:
            raise CorpusError(f"entity {self.entity_id!r} has no documents")


class Vocabulary:
    """Token <-> id bijection with fixed special ids 0-3."""

    def __init__(self, tokens: Iterable[str]):
        self.id_to_token: list[str] = list(SPECIALS)
        seen = set(SPECIALS)
        for t in tokens:
            if t in seen:
                continue
            seen.add(t)
            self.id_to_token.append(t)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        out = []
        for i in ids:
            if not 0 <= i < len(self.id_to_token):
                raise ValueError(f"token id {i} out of range for vocabulary of {len(self)}")
            out.append(self.id_to_token[i])
        return out


def build_vocabulary(corpora: Iterable[EntityCorpus], min_count: int = 1) -> Vocabulary:
    """Frequency-filtered vocabulary, ordered (freq desc, token asc) after specials."""
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts: Counter = Counter()
    for corpus in corpora:
        for doc in corpus.documents:
            counts.update(doc.tokens)
    kept = sorted((t for t, c in counts.items() if c >= min_count),
                  key=lambda t: (-counts[t], t))
    if not kept:
        raise CorpusError("vocabulary is empty after frequency filtering")
    return Vocabulary(kept)


_KIND_ORDER = {k: i for i, k in enumerate(SOURCE_KINDS)}


def load_corpus(path, stopwords: Optional[set] = None) -> list[EntityCorpus]:
    """Read the JSON-lines corpus format and group documents by entity.

    Required fields per line: entity_id, entity_type, source_kind, doc_id,
    text. Encyclopedia documents sort before news; within a kind the file
    order is preserved.
    """
    grouped: dict[str, dict] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            missing = [k for k in ("entity_id", "entity_type", "source_kind",
                                   "doc_id", "text") if k not in rec]
            if missing:
                raise CorpusError(f"{path}:{lineno}: missing fields {missing}")
            if rec["entity_type"] not in ENTITY_TYPES:
                raise CorpusError(
                    f"{path}:{lineno}: unknown entity_type {rec['entity_type']!r}")
            if rec["source_kind"] not in SOURCE_KINDS:
                raise CorpusError(
                    f"{path}:{lineno}: unknown source_kind {rec['source_kind']!r}")
            entry = grouped.setdefault(rec["entity_id"],
                                       {"type": rec["entity_type"], "docs": []})
            if entry["type"] != rec["entity_type"]:
                raise CorpusError(
                    f"{path}:{lineno}: entity {rec['entity_id']!r} changes type")
            tokens = clean_text(rec["text"], stopwords)
            if tokens:
                entry["docs"].append(Document(rec["doc_id"], rec["source_kind"],
                                              rec["text"], tuple(tokens)))
    corpora = []
    for entity_id, entry in grouped.items():
        if not entry["docs"]:
            raise CorpusError(
                f"entity {entity_id!r} has no documents that survive cleaning")
        docs = sorted(entry["docs"], key=lambda d: _KIND_ORDER[d.source_kind])
        corpora.append(EntityCorpus(entity_id, entry["type"], tuple(docs)))
    return corpora


@dataclass(frozen=True)
class LabeledPair:
    celebrity_id: str
    brand_id: str
    label: int


def load_pairs(path) -> list[LabeledPair]:
    """Pair-label JSON-lines: celebrity_id, brand_id, label in {0,1}."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            missing = [k for k in ("celebrity_id", "brand_id", "label") if k not in rec]
            if missing:
                raise CorpusError(f"{path}:{lineno}: missing fields {missing}")
            if rec["label"] not in (0, 1):
                raise CorpusError(f"{path}:{lineno}: label must be 0 or 1")
            pairs.append(LabeledPair(rec["celebrity_id"], rec["brand_id"],
                                     int(rec["label"])))
    return pairs
