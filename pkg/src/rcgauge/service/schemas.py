"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str
    index_loaded: bool
    doc_count: int | None = None


class ConfigResponse(BaseModel):
    config: dict
    digest: str


class TokenizeRequest(BaseModel):
    text: str


class TokenizeResponse(BaseModel):
    tokens: list[str]


class IndexLoadRequest(BaseModel):
    path: str


class IndexLoadResponse(BaseModel):
    doc_count: int
    terms: int


class RetrieveRequest(BaseModel):
    question: str
    top_k: int | None = Field(default=None, ge=1)


class RetrievedDoc(BaseModel):
    doc_id: str
    score: float
    text: str | None = None


class RetrieveResponse(BaseModel):
    entries: list[RetrievedDoc]
    degraded: bool


class ClassifyRequest(BaseModel):
    id: str | None = None
    question: str
    references: list[str]
    rule: str = "both"


class VerdictResponse(BaseModel):
    question_id: str
    label: str
    ans_bit: int
    com_bit: int
    max_correctness: float
    completeness_score: float
    per_doc_entropy: list[float]
    rule: str


class ScoreRequest(BaseModel):
    question: str
    question_tokens: list[str] | None = None
    document: str
    references: list[str] = Field(default_factory=list)


class ScoreResponse(BaseModel):
    correctness: float
    token_relevance: list[float]
