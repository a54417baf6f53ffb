"""HTTP scoring service over trained checkpoints.

A ScoringRuntime bundles the embedding table, matcher, corpus, and an
optional summarizer so pair scoring and per-entity summarization can be
served without retraining. The FastAPI app is a thin wrapper; the CLI
`score` and `summarize` subcommands use the same runtime directly.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .matcher import prepare_pair
from .pipeline import (
    PipelineConfig,
    load_embedding_table,
    load_matcher,
    load_summarizer,
    summarize_corpora,
)
from .text import load_corpus


class ScoringRuntime:
    def __init__(self, embeddings_path, matcher_path, corpus_path,
                 summarizer_path=None, docs_per_entity: int = 4):
        self.table = load_embedding_table(embeddings_path)
        self.matcher = load_matcher(matcher_path, self.table)
        self.corpora = {c.entity_id: c for c in load_corpus(corpus_path)}
        self.summarizer = (load_summarizer(summarizer_path)
                           if summarizer_path else None)
        self.docs_per_entity = docs_per_entity
        self._summary_cache: dict[str, list] = {}

    def _corpus(self, entity_id: str):
        corpus = self.corpora.get(entity_id)
        if corpus is None:
            raise KeyError(f"unknown entity {entity_id!r}")
        return corpus

    def summaries(self, entity_id: str) -> list:
        if entity_id not in self._summary_cache:
            corpus = self._corpus(entity_id)
            # reuse the pipeline's per-corpus summarization (extractive
            # when no summarizer checkpoint was given)
            cfg = PipelineConfig(corpus_path="", pairs_path="", output_dir="",
                                 docs_per_entity=self.docs_per_entity)
            out = summarize_corpora(cfg, [corpus], self.table.vocab,
                                    self.summarizer)
            self._summary_cache[entity_id] = out[entity_id]
        return self._summary_cache[entity_id]

    def score(self, celebrity_id: str, brand_id: str) -> dict:
        cel = self._corpus(celebrity_id)
        brand = self._corpus(brand_id)
        if cel.entity_type != "celebrity":
            raise ValueError(f"{celebrity_id!r} is a {cel.entity_type}, not a celebrity")
        if brand.entity_type != "brand":
            raise ValueError(f"{brand_id!r} is a {brand.entity_type}, not a brand")
        example = prepare_pair(self.summaries(celebrity_id),
                               self.summaries(brand_id), self.table.vocab,
                               self.matcher.config.summary_max_tokens,
                               celebrity_id=celebrity_id, brand_id=brand_id)
        label, prob = self.matcher.predict(example)
        return {"celebrity_id": celebrity_id, "brand_id": brand_id,
                "probability": prob, "label": label}


class ScoreRequest(BaseModel):
    celebrity_id: str = Field(min_length=1)
    brand_id: str = Field(min_length=1)


class ScoreResponse(BaseModel):
    celebrity_id: str
    brand_id: str
    probability: float
    label: int


class SummarizeRequest(BaseModel):
    entity_id: str = Field(min_length=1)


class SummarizeResponse(BaseModel):
    entity_id: str
    summaries: list[list[str]]


class HealthResponse(BaseModel):
    status: str
    entities: int
    vocabulary_size: int
    summarizer_loaded: bool


def create_app(runtime: ScoringRuntime) -> FastAPI:
    app = FastAPI(title="bcm scoring service")

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", entities=len(runtime.corpora),
                              vocabulary_size=len(runtime.table.vocab),
                              summarizer_loaded=runtime.summarizer is not None)

    @app.post("/score", response_model=ScoreResponse)
    def score(req: ScoreRequest):
        try:
            return ScoreResponse(**runtime.score(req.celebrity_id, req.brand_id))
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/summarize", response_model=SummarizeResponse)
    def summarize(req: SummarizeRequest):
        try:
            return SummarizeResponse(entity_id=req.entity_id,
                                     summaries=runtime.summaries(req.entity_id))
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    return app


def build_app(embeddings_path, matcher_path, corpus_path,
              summarizer_path: Optional[str] = None,
              docs_per_entity: int = 4) -> FastAPI:
    return create_app(ScoringRuntime(embeddings_path, matcher_path, corpus_path,
                                     summarizer_path, docs_per_entity))
