"""End-to-end orchestration: load -> embed -> summarize -> match -> evaluate.

Every stage draws its randomness from a named child seed of the single
pipeline seed, so identical (config, inputs) produce byte-identical
artifacts and each stage can be reproduced on its own.
"""

from __future__ import annotations

import abc
import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import checkpoint as ckpt
from . import data as datagen
from .embeddings import EmbeddingTable, train_skipgram
from .matcher import MatcherConfig, MatcherModel, prepare_pair
from .matcher import train as train_matcher_model
from .metrics import MetricsReport, classification_metrics, rouge_n
from .optim import Adam
from .summarizer import (
    SummarizerConfig,
    SummarizerModel,
    full_scale_config,
    summarize_entity,
    train_step,
)
from .text import (
    CorpusError,
    Vocabulary,
    build_vocabulary,
    clean_text,
    load_corpus,
    load_pairs,
    load_stopwords,
)

# stage order is fixed; child seeds are derived per stage name
_STAGE_SEEDS = {"embeddings": 1, "summarizer": 2, "split": 3, "matcher": 4}

RUNNING_MARKER = "RUNNING"


class DocumentSource(abc.ABC):
    """Where descriptive documents come from; only local files ship."""

    @abc.abstractmethod
    def fetch(self, entity_id: str, entity_type: str) -> list:
        """Return the entity's documents, encyclopedia first."""


class LocalCorpusSource(DocumentSource):
    def __init__(self, corpus_path, stopwords: Optional[set] = None):
        self._corpora = {c.entity_id: c
                         for c in load_corpus(corpus_path, stopwords=stopwords)}

    def fetch(self, entity_id: str, entity_type: str) -> list:
        corpus = self._corpora.get(entity_id)
        if corpus is None:
            raise KeyError(f"no documents for entity {entity_id!r}")
        if corpus.entity_type != entity_type:
            raise ValueError(
                f"entity {entity_id!r} is a {corpus.entity_type}, not {entity_type}")
        return list(corpus.documents)


class StageError(RuntimeError):
    """Pipeline failure tagged with the stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    corpus_path: str
    pairs_path: str
    output_dir: str
    seed: int = 0
    docs_per_entity: int = 4
    split_fraction: float = 0.7
    min_count: int = 1
    stopwords_path: Optional[str] = None
    # embeddings
    embedding_dim: int = 64
    embedding_window: int = 5
    embedding_negatives: int = 5
    embedding_epochs: int = 8
    # summarizer
    summarizer_preset: str = "desk"       # "desk" or "full"
    summarizer_mode: str = "extractive"   # "extractive" or "train"
    summarizer_epochs: int = 4
    summarizer_lr: float = 3e-3
    supervision_path: Optional[str] = None
    silver_summary_tokens: int = 12
    # matcher
    summary_max_tokens: int = 32
    conv_specs: tuple = ((5, 8), (3, 10))
    pool_specs: tuple = ((2, 2), (2, 2))
    mlp_hidden: int = 32
    threshold: float = 0.5
    normalize_similarity: bool = True
    matcher_epochs: int = 30
    matcher_lr: float = 1e-3
    matcher_batch: int = 8
    positive_weight: float = 8.0

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError(f"split_fraction must be in (0,1), got {self.split_fraction}")
        if self.docs_per_entity < 1:
            raise ValueError("docs_per_entity must be >= 1")
        if self.summarizer_mode not in ("train", "extractive"):
            raise ValueError(f"unknown summarizer_mode {self.summarizer_mode!r}")
        if self.summarizer_preset not in ("desk", "full"):
            raise ValueError(f"unknown summarizer_preset {self.summarizer_preset!r}")

    def matcher_config(self) -> MatcherConfig:
        return MatcherConfig(summary_max_tokens=self.summary_max_tokens,
                             embedding_dim=self.embedding_dim,
                             conv_specs=tuple(tuple(s) for s in self.conv_specs),
                             pool_specs=tuple(tuple(s) for s in self.pool_specs),
                             mlp_hidden=self.mlp_hidden, threshold=self.threshold,
                             normalize=self.normalize_similarity)

    def summarizer_config(self, vocab_size: int) -> SummarizerConfig:
        if self.summarizer_preset == "full":
            return full_scale_config(vocab_size)
        return SummarizerConfig(vocab_size=vocab_size)

    def child_seed(self, stage: str) -> int:
        return self.seed * 10 + _STAGE_SEEDS[stage]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_specs"] = [list(s) for s in self.conv_specs]
        d["pool_specs"] = [list(s) for s in self.pool_specs]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        for key in ("conv_specs", "pool_specs"):
            if key in d:
                d[key] = tuple(tuple(s) for s in d[key])
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]


def _silver_target(doc, config: PipelineConfig) -> list:
    return datagen.first_sentence_tokens(doc.raw_text, clean_text,
                                         max_tokens=config.silver_summary_tokens)


def _load_supervision(path) -> dict:
    """Optional JSON-lines supervision: {doc_id, summary} per line."""
    refs = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if "doc_id" not in rec or "summary" not in rec:
                raise CorpusError(f"{path}:{lineno}: need doc_id and summary")
            refs[rec["doc_id"]] = clean_text(rec["summary"])
    return refs


def train_summarizer_stage(config: PipelineConfig, corpora: list,
                           vocab: Vocabulary,
                           table: Optional[EmbeddingTable]) -> SummarizerModel:
    """Teacher-forced training over every document's reference summary.

    References come from the supervision file when given, otherwise each
    document's first sentence serves as the silver target.
    """
    scfg = config.summarizer_config(len(vocab))
    init = table if table is not None and table.dim == scfg.hidden_dim else None
    model = SummarizerModel(scfg, seed=config.child_seed("summarizer"),
                            init_embeddings=init)
    refs = _load_supervision(config.supervision_path) if config.supervision_path else None
    examples = []
    for corpus in corpora:
        for doc in corpus.documents:
            target = refs.get(doc.doc_id) if refs is not None else _silver_target(doc, config)
            if not target:
                continue
            src = vocab.encode(doc.tokens)[:scfg.max_source_len]
            tgt = vocab.encode(target)[:scfg.max_decode_len]
            examples.append((src, tgt))
    if not examples:
        raise ValueError("no (document, summary) supervision pairs available")
    opt = Adam(model.parameters(), lr=config.summarizer_lr)
    rng = np.random.default_rng(config.child_seed("summarizer"))
    order = np.arange(len(examples))
    for _ in range(config.summarizer_epochs):
        rng.shuffle(order)
        for i in order:
            src, tgt = examples[i]
            train_step(model, src, tgt, opt)
    return model


def summarize_corpora(config: PipelineConfig, corpora: list, vocab: Vocabulary,
                      model: Optional[SummarizerModel]) -> dict:
    """entity_id -> list of per-document summaries (token lists)."""
    summaries = {}
    for corpus in corpora:
        if model is None:  # extractive fallback: first sentence verbatim
            summaries[corpus.entity_id] = [
                _silver_target(doc, config)
                for doc in corpus.documents[:config.docs_per_entity]]
        else:
            summaries[corpus.entity_id] = summarize_entity(
                model, corpus, vocab, max_docs=config.docs_per_entity)
    return summaries


def _mean_rouge(config: PipelineConfig, corpora: list, summaries: dict,
                n: int) -> float:
    scores = []
    for corpus in corpora:
        docs = corpus.documents[:config.docs_per_entity]
        for doc, summary in zip(docs, summaries[corpus.entity_id]):
            scores.append(rouge_n(_silver_target(doc, config), summary, n))
    return float(np.mean(scores)) if scores else 0.0


def build_examples(config: PipelineConfig, pairs, summaries, vocab) -> list:
    examples = []
    for pair in pairs:
        if pair.celebrity_id not in summaries:
            raise KeyError(f"no corpus for celebrity {pair.celebrity_id!r}")
        if pair.brand_id not in summaries:
            raise KeyError(f"no corpus for brand {pair.brand_id!r}")
        ex = prepare_pair(summaries[pair.celebrity_id], summaries[pair.brand_id],
                          vocab, config.summary_max_tokens,
                          celebrity_id=pair.celebrity_id, brand_id=pair.brand_id)
        ex.label = pair.label
        examples.append(ex)
    return examples


def save_embedding_table(path, table: EmbeddingTable) -> None:
    ckpt.save_checkpoint(path, {"kind": "embeddings",
                                "vocab": table.vocab.id_to_token},
                         {"emb.vectors": table.vectors})


def load_embedding_table(path) -> EmbeddingTable:
    config, tensors = ckpt.load_checkpoint(path)
    if config.get("kind") != "embeddings":
        raise ckpt.CheckpointError(f"{path} is not an embedding checkpoint")
    vocab = Vocabulary(config["vocab"][4:])
    return EmbeddingTable(vocab, tensors["emb.vectors"])


def save_summarizer(path, model: SummarizerModel) -> None:
    ckpt.save_checkpoint(path, {"kind": "summarizer",
                                "config": model.config.to_dict()},
                         {k: v.data for k, v in model.params.items()})


def load_summarizer(path) -> SummarizerModel:
    config, tensors = ckpt.load_checkpoint(path)
    if config.get("kind") != "summarizer":
        raise ckpt.CheckpointError(f"{path} is not a summarizer checkpoint")
    model = SummarizerModel(SummarizerConfig.from_dict(config["config"]))
    ckpt.restore_into(model.params, tensors)
    return model


def save_matcher(path, model: MatcherModel) -> None:
    ckpt.save_checkpoint(path, {"kind": "matcher",
                                "config": model.config.to_dict()},
                         {k: v.data for k, v in model.params.items()})


def load_matcher(path, table: EmbeddingTable) -> MatcherModel:
    config, tensors = ckpt.load_checkpoint(path)
    if config.get("kind") != "matcher":
        raise ckpt.CheckpointError(f"{path} is not a matcher checkpoint")
    model = MatcherModel(MatcherConfig.from_dict(config["config"]), table)
    ckpt.restore_into(model.params, tensors)
    return model


def _stage(name):
    class _Guard:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(name, exc) from exc
            return False

    return _Guard()


def run_pipeline(config: PipelineConfig) -> MetricsReport:
    """Full acquire -> summarize -> match run; writes report, scores, checkpoints.

    A RUNNING marker flags partially written output directories; it is
    removed only after the report lands.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / RUNNING_MARKER
    marker.write_text("pipeline in progress; artifacts may be stale\n")

    with _stage("load"):
        stopwords = (load_stopwords(config.stopwords_path)
                     if config.stopwords_path else set())
        corpora = load_corpus(config.corpus_path, stopwords=stopwords)
        pairs = load_pairs(config.pairs_path)
        vocab = build_vocabulary(corpora, min_count=config.min_count)

    with _stage("embeddings"):
        table = train_skipgram(corpora, vocab, dim=config.embedding_dim,
                               window=config.embedding_window,
                               negatives=config.embedding_negatives,
                               epochs=config.embedding_epochs,
                               seed=config.child_seed("embeddings"))
        save_embedding_table(out / "embeddings.ckpt", table)

    with _stage("summarizer"):
        summarizer = None
        if config.summarizer_mode == "train":
            summarizer = train_summarizer_stage(config, corpora, vocab, table)
            save_summarizer(out / "summarizer.ckpt", summarizer)
        summaries = summarize_corpora(config, corpora, vocab, summarizer)
        rouge1 = _mean_rouge(config, corpora, summaries, 1)
        rouge2 = _mean_rouge(config, corpora, summaries, 2)

    with _stage("split"):
        examples = build_examples(config, pairs, summaries, vocab)
        train_set, test_set = datagen.split_dataset(
            examples, config.split_fraction, config.child_seed("split"))

    with _stage("matcher"):
        matcher = MatcherModel(config.matcher_config(), table,
                               seed=config.child_seed("matcher"))
        train_matcher_model(matcher, train_set, epochs=config.matcher_epochs,
                            lr=config.matcher_lr, batch_size=config.matcher_batch,
                            seed=config.child_seed("matcher"),
                            positive_weight=config.positive_weight)
        save_matcher(out / "matcher.ckpt", matcher)

    with _stage("evaluate"):
        scored = []
        for ex in test_set:
            label, prob = matcher.predict(ex)
            scored.append({"celebrity_id": ex.celebrity_id, "brand_id": ex.brand_id,
                           "probability": prob, "label": label,
                           "true_label": ex.label})
        scored.sort(key=lambda r: (r["celebrity_id"], r["brand_id"]))
        report = classification_metrics([r["label"] for r in scored],
                                        [r["true_label"] for r in scored])
        report = replace(report, rouge1=rouge1, rouge2=rouge2)

    with _stage("write"):
        (out / "scores.jsonl").write_text(
            "\n".join(json.dumps(r, sort_keys=True) for r in scored) + "\n",
            encoding="utf-8")
        payload = report.to_dict()
        payload["config_hash"] = config.config_hash()
        payload["seed"] = config.seed
        (out / "report.json").write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")

    marker.unlink()
    return report


def run_ablation_docs(config: PipelineConfig, k_values=(1, 2, 3, 4, 5)) -> dict:
    """One full pipeline run per document count k, with a shared seed.

    Writes a plain plot-data table (k, precision, recall, f1, accuracy)
    to <output_dir>/ablation.tsv and returns {k: MetricsReport}.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    for k in k_values:
        sub = replace(config, docs_per_entity=k,
                      output_dir=str(out / f"k{k}"))
        try:
            results[k] = run_pipeline(sub)
        except StageError as exc:
            raise StageError(f"k={k}/{exc.stage}", exc.cause) from exc
    lines = ["k\tprecision\trecall\tf1\taccuracy"]
    for k in k_values:
        r = results[k]
        lines.append(f"{k}\t{r.precision:.6f}\t{r.recall:.6f}"
                     f"\t{r.f1:.6f}\t{r.accuracy:.6f}")
    (out / "ablation.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return results
