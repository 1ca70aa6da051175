"""FastAPI application wrapping the classification pipeline.

The service loads an index once (at startup from the config, or later via
``POST /index/load``) and then answers per-question retrieval and
classification requests. ``POST /score`` additionally serves the scorer
wire protocol from the built-in lexical backend, so one instance can act
as the remote scorer of another.
"""

from __future__ import annotations

import logging
import uuid

from fastapi import FastAPI, HTTPException

import rcgauge
from rcgauge import pipeline
from rcgauge.constraints import RULES
from rcgauge.core import PipelineConfig, Question, RcgaugeError, ReferenceSet, tokenize
from rcgauge.datasets import BenchmarkRecord
from rcgauge.evaluator import LexicalScorer
from rcgauge.retrieval import (
    HttpEmbeddingClient,
    IndexFormatError,
    InvertedIndex,
    load_index,
    retrieve_bm25,
    retrieve_hybrid,
)
from rcgauge.service.schemas import (
    ClassifyRequest,
    ConfigResponse,
    HealthResponse,
    IndexLoadRequest,
    IndexLoadResponse,
    RetrievedDoc,
    RetrieveRequest,
    RetrieveResponse,
    ScoreRequest,
    ScoreResponse,
    TokenizeRequest,
    TokenizeResponse,
    VerdictResponse,
)

logger = logging.getLogger(__name__)


class Engine:
    """Mutable service state: config plus the currently loaded index."""

    def __init__(
        self,
        config: PipelineConfig,
        index: InvertedIndex | None = None,
        dense_url: str | None = None,
    ) -> None:
        self.config = config
        self.index = index
        self.scorer = pipeline.build_scorer(config)
        self.lexical = LexicalScorer(epsilon_rel=config.epsilon_rel)
        self.dense_client = HttpEmbeddingClient(dense_url) if dense_url else None

    def require_index(self) -> InvertedIndex:
        if self.index is None:
            raise HTTPException(status_code=503, detail="no index loaded")
        return self.index


def create_app(
    config: PipelineConfig | None = None,
    index: InvertedIndex | None = None,
    dense_url: str | None = None,
) -> FastAPI:
    config = config or PipelineConfig()
    if index is None and config.index_path:
        index = load_index(config.index_path)
    engine = Engine(config, index=index, dense_url=dense_url)

    app = FastAPI(title="rcgauge", version=rcgauge.__version__)
    app.state.engine = engine

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(
            status="ok",
            version=rcgauge.__version__,
            index_loaded=engine.index is not None,
            doc_count=engine.index.doc_count if engine.index is not None else None,
        )

    @app.get("/config", response_model=ConfigResponse)
    def config_echo() -> ConfigResponse:
        return ConfigResponse(config=engine.config.as_dict(), digest=engine.config.digest())

    @app.post("/tokenize", response_model=TokenizeResponse)
    def tokenize_text(request: TokenizeRequest) -> TokenizeResponse:
        return TokenizeResponse(tokens=tokenize(request.text))

    @app.post("/index/load", response_model=IndexLoadResponse)
    def index_load(request: IndexLoadRequest) -> IndexLoadResponse:
        try:
            engine.index = load_index(request.path)
        except FileNotFoundError:
            raise HTTPException(status_code=404, detail=f"no such file: {request.path}")
        except IndexFormatError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return IndexLoadResponse(
            doc_count=engine.index.doc_count, terms=len(engine.index.postings)
        )

    @app.post("/retrieve", response_model=RetrieveResponse)
    def retrieve(request: RetrieveRequest) -> RetrieveResponse:
        index = engine.require_index()
        question = _question(request.question)
        top_k = request.top_k or engine.config.top_k
        if engine.config.retriever == "hybrid" and engine.dense_client is not None:
            batch = retrieve_hybrid(
                index, engine.dense_client, question, top_k, engine.config.fusion_k
            )
        else:
            batch = retrieve_bm25(index, question, top_k)
        return RetrieveResponse(
            entries=[
                RetrievedDoc(doc_id=doc.doc_id, score=score, text=doc.text)
                for doc, score in batch.entries
            ],
            degraded=batch.degraded,
        )

    @app.post("/classify", response_model=VerdictResponse)
    def classify(request: ClassifyRequest) -> VerdictResponse:
        index = engine.require_index()
        if request.rule not in RULES:
            raise HTTPException(
                status_code=400, detail=f"unknown rule {request.rule!r} (expected {RULES})"
            )
        question_id = request.id or f"q-{uuid.uuid4().hex[:12]}"
        try:
            record = BenchmarkRecord(
                id=question_id,
                question=_question(request.question, question_id),
                references=ReferenceSet(tuple(request.references)),
                gold_label=None,
                dataset="custom",
            )
            verdict, _ = pipeline.classify_record(
                record,
                index,
                engine.config,
                engine.scorer,
                dense_client=engine.dense_client,
                rule=request.rule,
            )
        except HTTPException:
            raise
        except (RcgaugeError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return VerdictResponse(
            question_id=verdict.question_id,
            label=verdict.label,
            ans_bit=verdict.ans_bit,
            com_bit=verdict.com_bit,
            max_correctness=verdict.max_correctness,
            completeness_score=verdict.completeness_score,
            per_doc_entropy=list(verdict.per_doc_entropy),
            rule=verdict.rule,
        )

    @app.post("/score", response_model=ScoreResponse)
    def score(request: ScoreRequest) -> ScoreResponse:
        tokens = request.question_tokens or tokenize(request.question)
        if not tokens:
            raise HTTPException(status_code=400, detail="question has no tokens")
        if not request.document:
            raise HTTPException(status_code=400, detail="document is empty")
        correctness, relevance = engine.lexical.score_tokens(
            tokens, request.document, tuple(request.references)
        )
        return ScoreResponse(correctness=correctness, token_relevance=relevance)

    return app


def _question(text: str, question_id: str = "adhoc") -> Question:
    try:
        return Question.from_text(question_id, text)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
