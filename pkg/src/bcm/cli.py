"""Command-line entry points for the matching pipeline.

Every subcommand maps onto one library operation. Configuration comes
from an optional JSON file (--config) whose keys mirror PipelineConfig;
explicit flags override file values. Exit codes: 0 success, 1 runtime
failure, 2 usage error.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .checkpoint import CheckpointError
from .data import generate_synthetic_dataset
from .embeddings import train_skipgram
from .matcher import MatcherModel
from .matcher import train as train_matcher_model
from .pipeline import (
    PipelineConfig,
    StageError,
    build_examples,
    load_embedding_table,
    load_summarizer,
    run_ablation_docs,
    run_pipeline,
    save_embedding_table,
    save_matcher,
    save_summarizer,
    summarize_corpora,
    train_summarizer_stage,
)
from .text import CorpusError, build_vocabulary, load_corpus, load_pairs, load_stopwords

_RUNTIME_ERRORS = (StageError, CorpusError, CheckpointError, ValueError,
                   KeyError, OSError)


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _RUNTIME_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def build_config(config_file, **overrides) -> PipelineConfig:
    base: dict = {}
    if config_file:
        try:
            base = json.loads(Path(config_file).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise click.UsageError(f"cannot read config {config_file}: {exc}")
    base.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("corpus_path", "pairs_path", "output_dir"):
        base.setdefault(key, "")
    try:
        return PipelineConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise click.UsageError(f"invalid configuration: {exc}")


def require(cfg: PipelineConfig, *fields):
    for field in fields:
        if not getattr(cfg, field):
            raise click.UsageError(
                f"{field} is required (set it via --config or the matching flag)")


def require_seed(config_file, seed):
    """--seed is mandatory for training commands unless the config file sets it."""
    if seed is None and not (config_file
                             and "seed" in json.loads(Path(config_file).read_text())):
        raise click.UsageError("--seed is required for training commands")


def config_options(fn):
    opts = [
        click.option("--config", "config_file", type=click.Path(), default=None,
                     help="JSON file with PipelineConfig fields."),
        click.option("--corpus-path", default=None, help="Corpus JSON-lines file."),
        click.option("--pairs-path", default=None, help="Labeled pairs JSON-lines file."),
        click.option("--output-dir", default=None, help="Artifact directory."),
        click.option("--seed", type=int, default=None),
        click.option("--docs-per-entity", type=int, default=None),
        click.option("--split-fraction", type=float, default=None),
        click.option("--stopwords-path", default=None),
        click.option("--embedding-dim", type=int, default=None),
        click.option("--embedding-epochs", type=int, default=None),
        click.option("--summarizer-mode",
                     type=click.Choice(["extractive", "train"]), default=None),
        click.option("--summarizer-epochs", type=int, default=None),
        click.option("--summarizer-lr", type=float, default=None),
        click.option("--supervision-path", default=None),
        click.option("--summary-max-tokens", type=int, default=None),
        click.option("--matcher-epochs", type=int, default=None),
        click.option("--matcher-lr", type=float, default=None),
        click.option("--matcher-batch", type=int, default=None),
        click.option("--positive-weight", type=float, default=None),
        click.option("--threshold", type=float, default=None),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Brand-celebrity matching experiments."""


@main.command("gen-data")
@click.option("--corpus-path", required=True)
@click.option("--pairs-path", required=True)
@click.option("--num-celebrities", type=int, default=63, show_default=True)
@click.option("--num-brands", type=int, default=35, show_default=True)
@click.option("--positive-rate", type=float, default=0.055, show_default=True)
@click.option("--signal-strength", type=float, default=0.9, show_default=True)
@click.option("--news-per-entity", type=int, default=5, show_default=True)
@click.option("--signal-docs", default=None,
              help="Comma-separated document positions that may carry signal.")
@click.option("--seed", type=int, default=0, show_default=True)
@guarded
def gen_data(corpus_path, pairs_path, num_celebrities, num_brands, positive_rate,
             signal_strength, news_per_entity, signal_docs, seed):
    """Generate a planted-signal synthetic corpus and pair labels."""
    docs = None
    if signal_docs:
        docs = {int(p) for p in signal_docs.split(",")}
    stats = generate_synthetic_dataset(
        corpus_path, pairs_path, num_celebrities=num_celebrities,
        num_brands=num_brands, positive_rate=positive_rate,
        signal_strength=signal_strength, seed=seed,
        news_per_entity=news_per_entity, signal_docs=docs)
    click.echo(json.dumps(stats, sort_keys=True))


@main.command("train-embeddings")
@config_options
@click.option("--output", required=True, help="Embedding checkpoint to write.")
@guarded
def train_embeddings(config_file, output, seed, **overrides):
    """Train skip-gram embeddings on a corpus."""
    require_seed(config_file, seed)
    cfg = build_config(config_file, seed=seed, **overrides)
    require(cfg, "corpus_path")
    stopwords = load_stopwords(cfg.stopwords_path) if cfg.stopwords_path else set()
    corpora = load_corpus(cfg.corpus_path, stopwords=stopwords)
    vocab = build_vocabulary(corpora, min_count=cfg.min_count)
    table = train_skipgram(corpora, vocab, dim=cfg.embedding_dim,
                           window=cfg.embedding_window,
                           negatives=cfg.embedding_negatives,
                           epochs=cfg.embedding_epochs,
                           seed=cfg.child_seed("embeddings"))
    save_embedding_table(output, table)
    click.echo(json.dumps({"checkpoint": str(output), "vocabulary": len(vocab),
                           "dim": table.dim}, sort_keys=True))


@main.command("train-summarizer")
@config_options
@click.option("--embeddings", default=None,
              help="Embedding checkpoint used for vocabulary and initialization.")
@click.option("--output", required=True, help="Summarizer checkpoint to write.")
@guarded
def train_summarizer(config_file, embeddings, output, seed, **overrides):
    """Teacher-force the summarizer on supervision or first-sentence targets."""
    require_seed(config_file, seed)
    cfg = build_config(config_file, seed=seed, **overrides)
    require(cfg, "corpus_path")
    stopwords = load_stopwords(cfg.stopwords_path) if cfg.stopwords_path else set()
    corpora = load_corpus(cfg.corpus_path, stopwords=stopwords)
    table = load_embedding_table(embeddings) if embeddings else None
    vocab = table.vocab if table else build_vocabulary(corpora, min_count=cfg.min_count)
    model = train_summarizer_stage(cfg, corpora, vocab, table)
    save_summarizer(output, model)
    click.echo(json.dumps({"checkpoint": str(output),
                           "parameters": model.parameter_count()}, sort_keys=True))


@main.command("summarize")
@config_options
@click.option("--model", default=None, help="Summarizer checkpoint; omit for the "
              "extract-first-sentence fallback.")
@click.option("--entity", default=None, help="Entity id; omit for every entity.")
@guarded
def summarize(config_file, model, entity, **overrides):
    """Print per-document summaries as JSON lines."""
    cfg = build_config(config_file, **overrides)
    require(cfg, "corpus_path")
    corpora = load_corpus(cfg.corpus_path)
    if entity is not None:
        matches = [c for c in corpora if c.entity_id == entity]
        if not matches:
            raise KeyError(f"unknown entity {entity!r}")
        corpora = matches
    summarizer = load_summarizer(model) if model else None
    vocab = build_vocabulary(corpora, min_count=cfg.min_count)
    summaries = summarize_corpora(cfg, corpora, vocab, summarizer)
    for corpus in corpora:
        click.echo(json.dumps({"entity_id": corpus.entity_id,
                               "summaries": summaries[corpus.entity_id]},
                              sort_keys=True))


@main.command("train-matcher")
@config_options
@click.option("--embeddings", required=True, help="Embedding checkpoint.")
@click.option("--summarizer", default=None, help="Optional summarizer checkpoint.")
@click.option("--output", required=True, help="Matcher checkpoint to write.")
@guarded
def train_matcher(config_file, embeddings, summarizer, output, seed, **overrides):
    """Train the similarity-matrix matcher on every labeled pair."""
    require_seed(config_file, seed)
    cfg = build_config(config_file, seed=seed, **overrides)
    require(cfg, "corpus_path", "pairs_path")
    corpora = load_corpus(cfg.corpus_path)
    pairs = load_pairs(cfg.pairs_path)
    table = load_embedding_table(embeddings)
    model_s = load_summarizer(summarizer) if summarizer else None
    summaries = summarize_corpora(cfg, corpora, table.vocab, model_s)
    examples = build_examples(cfg, pairs, summaries, table.vocab)
    model = MatcherModel(cfg.matcher_config(), table, seed=cfg.child_seed("matcher"))
    log = train_matcher_model(model, examples, epochs=cfg.matcher_epochs,
                              lr=cfg.matcher_lr, batch_size=cfg.matcher_batch,
                              seed=cfg.child_seed("matcher"),
                              positive_weight=cfg.positive_weight)
    save_matcher(output, model)
    click.echo(json.dumps({"checkpoint": str(output), "examples": len(examples),
                           "final_loss": log[-1]}, sort_keys=True))


@main.command("score")
@click.option("--embeddings", required=True)
@click.option("--matcher", required=True)
@click.option("--corpus-path", required=True)
@click.option("--summarizer", default=None)
@click.option("--celebrity", required=True)
@click.option("--brand", required=True)
@click.option("--docs-per-entity", type=int, default=4, show_default=True)
@guarded
def score(embeddings, matcher, corpus_path, summarizer, celebrity, brand,
          docs_per_entity):
    """Score one celebrity-brand pair; prints a single JSON line."""
    from .service import ScoringRuntime
    runtime = ScoringRuntime(embeddings, matcher, corpus_path, summarizer,
                             docs_per_entity)
    click.echo(json.dumps(runtime.score(celebrity, brand), sort_keys=True))


@main.command("evaluate")
@config_options
@guarded
def evaluate(config_file, seed, **overrides):
    """Run the full pipeline and print the held-out report."""
    require_seed(config_file, seed)
    cfg = build_config(config_file, seed=seed, **overrides)
    require(cfg, "corpus_path", "pairs_path", "output_dir")
    run_pipeline(cfg)
    click.echo((Path(cfg.output_dir) / "report.json").read_text(), nl=False)


@main.command("ablate")
@config_options
@click.option("--k", "k_values", default="1,2,3,4,5", show_default=True,
              help="Comma-separated document counts to sweep.")
@guarded
def ablate(config_file, k_values, seed, **overrides):
    """Sweep documents-per-entity and write a plot-data table."""
    require_seed(config_file, seed)
    cfg = build_config(config_file, seed=seed, **overrides)
    require(cfg, "corpus_path", "pairs_path", "output_dir")
    ks = tuple(int(p) for p in k_values.split(","))
    if not ks:
        raise click.UsageError("--k needs at least one value")
    run_ablation_docs(cfg, k_values=ks)
    click.echo((Path(cfg.output_dir) / "ablation.tsv").read_text(), nl=False)


@main.command("serve")
@click.option("--embeddings", required=True)
@click.option("--matcher", required=True)
@click.option("--corpus-path", required=True)
@click.option("--summarizer", default=None)
@click.option("--docs-per-entity", type=int, default=4, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@guarded
def serve(embeddings, matcher, corpus_path, summarizer, docs_per_entity, host, port):
    """Serve scoring and summarization over HTTP."""
    import uvicorn

    from .service import build_app
    app = build_app(embeddings, matcher, corpus_path, summarizer, docs_per_entity)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
