"""Two-signal scoring of retrieved documents against reference answers.

Every backend produces, per (question, document) pair, an answer-correctness
probability and one relevance value per question token. The lexical backend
is a deterministic bag-of-tokens baseline; the remote backend plugs in a
trained model over HTTP. The two are never silently substituted for each
other: they carry different calibrations against the decision thresholds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx

from rcgauge.core import (
    DEFAULT_EPSILON_REL,
    LABEL_COMPLEX,
    LABEL_NOT_COMPLEX,
    Question,
    RcgaugeError,
    ReferenceSet,
    tokenize,
)
from rcgauge.retrieval import RetrievalBatch


class ScorerBackendError(RcgaugeError):
    """Remote scorer unreachable or returned an invalid payload."""


class LlmBackendError(RcgaugeError):
    """LLM endpoint unreachable after retries."""


class LlmParseError(RcgaugeError):
    """LLM reply contained neither a 'yes' nor a 'no'."""


@dataclass(frozen=True)
class AnswerabilityScores:
    """Per-document answer-correctness probabilities, batch order."""

    scores: tuple[float, ...]

    def __post_init__(self) -> None:
        for s in self.scores:
            if not (0.0 <= s <= 1.0) or math.isnan(s):
                raise ValueError(f"correctness score {s} outside [0, 1]")

    def __len__(self) -> int:
        return len(self.scores)

    @property
    def max_correctness(self) -> float:
        return max(self.scores) if self.scores else 0.0


@dataclass(frozen=True)
class RelevanceMatrix:
    """Per-document, per-question-token relevance values.

    Rows are documents (batch order), columns are question tokens.
    """

    rows: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        widths = {len(row) for row in self.rows}
        if len(widths) > 1:
            raise ValueError(f"ragged relevance matrix: row widths {sorted(widths)}")
        for row in self.rows:
            for value in row:
                if value < 0.0 or math.isnan(value) or math.isinf(value):
                    raise ValueError(f"relevance value {value} is not a finite non-negative")

    @property
    def num_docs(self) -> int:
        return len(self.rows)

    @property
    def num_tokens(self) -> int:
        return len(self.rows[0]) if self.rows else 0


@dataclass(frozen=True)
class EvaluationScores:
    """Both evaluator signals for one retrieval batch."""

    correctness: AnswerabilityScores
    relevance: RelevanceMatrix


class ScorerBackend(Protocol):
    def score_pair(
        self, question: Question, document_text: str, references: Sequence[str]
    ) -> tuple[float, list[float]]:
        """Return (correctness, one relevance value per question token)."""
        ...


def token_f1(candidate_tokens: Sequence[str], reference_tokens: Sequence[str]) -> float:
    """Bag-of-tokens F1 overlap between a candidate text and a reference."""
    if not candidate_tokens or not reference_tokens:
        return 0.0
    counts: dict[str, int] = {}
    for token in reference_tokens:
        counts[token] = counts.get(token, 0) + 1
    overlap = 0
    for token in candidate_tokens:
        if counts.get(token, 0) > 0:
            counts[token] -= 1
            overlap += 1
    if overlap == 0:
        return 0.0
    precision = overlap / len(candidate_tokens)
    recall = overlap / len(reference_tokens)
    return min(1.0, max(0.0, 2.0 * precision * recall / (precision + recall)))


class LexicalScorer:
    """Deterministic reference backend.

    Correctness is the best token-F1 overlap between the document and any
    reference; relevance is the document's term frequency of each question
    token plus a smoothing epsilon (rows are never all-zero). Passing
    ``idf_weights`` (token -> weight, e.g. corpus inverse document
    frequencies) rescales term frequencies before smoothing; it is off by
    default so entropies stay interpretable on small fixtures.
    """

    def __init__(
        self,
        epsilon_rel: float = DEFAULT_EPSILON_REL,
        idf_weights: dict[str, float] | None = None,
    ) -> None:
        if not 0.0 < epsilon_rel < 1.0:
            raise ValueError(f"epsilon_rel must be in (0, 1), got {epsilon_rel}")
        self.epsilon_rel = epsilon_rel
        self.idf_weights = idf_weights

    def _weight(self, token: str) -> float:
        if self.idf_weights is None:
            return 1.0
        return max(0.0, self.idf_weights.get(token, 1.0))

    def score_tokens(
        self,
        question_tokens: Sequence[str],
        document_text: str,
        references: Sequence[str],
    ) -> tuple[float, list[float]]:
        doc_tokens = tokenize(document_text)
        correctness = max(
            (token_f1(doc_tokens, tokenize(ref)) for ref in references),
            default=0.0,
        )
        counts: dict[str, int] = {}
        for token in doc_tokens:
            counts[token] = counts.get(token, 0) + 1
        relevance = [
            counts.get(token, 0) * self._weight(token) + self.epsilon_rel
            for token in question_tokens
        ]
        return correctness, relevance

    def score_pair(
        self, question: Question, document_text: str, references: Sequence[str]
    ) -> tuple[float, list[float]]:
        return self.score_tokens(question.tokens, document_text, references)


class RemoteScorer:
    """Client for a model scoring service speaking ``POST /score``.

    Request: ``{"question": str, "question_tokens": [str], "document": str,
    "references": [str]}``; response: ``{"correctness": float,
    "token_relevance": [float]}`` with one value per question token.
    One call is made per (question, document) pair.
    """

    def __init__(self, url: str, timeout: float = 10.0, retries: int = 2) -> None:
        self.url = url.rstrip("/")
        self.retries = retries
        self._client = httpx.Client(timeout=timeout)

    def score_pair(
        self, question: Question, document_text: str, references: Sequence[str]
    ) -> tuple[float, list[float]]:
        payload = {
            "question": question.raw_text,
            "question_tokens": list(question.tokens),
            "document": document_text,
            "references": list(references),
        }
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                response = self._client.post(self.url + "/score", json=payload)
                response.raise_for_status()
                body = response.json()
                break
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last_error = exc
        else:
            raise ScorerBackendError(f"scorer backend unreachable: {last_error}")

        try:
            correctness = float(body["correctness"])
            relevance = [float(v) for v in body["token_relevance"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ScorerBackendError(f"scorer backend returned a bad payload: {exc}") from None
        if len(relevance) != len(question.tokens):
            raise ScorerBackendError(
                f"scorer relevance dimension mismatch: expected {len(question.tokens)} "
                f"values, got {len(relevance)}"
            )
        if not (0.0 <= correctness <= 1.0) or math.isnan(correctness):
            raise ScorerBackendError(f"scorer correctness {correctness} outside [0, 1]")
        if any(v < 0.0 or math.isnan(v) or math.isinf(v) for v in relevance):
            raise ScorerBackendError("scorer relevance values must be finite non-negatives")
        return correctness, relevance

    def close(self) -> None:
        self._client.close()


def score_correctness(
    question: Question,
    batch: RetrievalBatch,
    refs: ReferenceSet,
    backend: ScorerBackend,
) -> AnswerabilityScores:
    """Answer-correctness probability for each document in the batch."""
    if not batch.entries:
        raise ValueError("cannot score an empty retrieval batch")
    return AnswerabilityScores(
        tuple(
            backend.score_pair(question, doc.text, refs.references)[0]
            for doc in batch.documents
        )
    )


def score_token_relevance(
    question: Question, batch: RetrievalBatch, backend: ScorerBackend
) -> RelevanceMatrix:
    """Per-token relevance rows for each document in the batch.

    The relevance signal does not depend on references, so none are sent.
    """
    if not question.tokens:
        raise ValueError("question has no tokens")
    if not batch.entries:
        raise ValueError("cannot score an empty retrieval batch")
    return RelevanceMatrix(
        tuple(tuple(backend.score_pair(question, doc.text, ())[1]) for doc in batch.documents)
    )


def evaluate_batch(
    question: Question,
    batch: RetrievalBatch,
    refs: ReferenceSet,
    backend: ScorerBackend,
) -> EvaluationScores:
    """Both signals in one pass: a single backend call per document."""
    if not batch.entries:
        raise ValueError("cannot score an empty retrieval batch")
    correctness: list[float] = []
    rows: list[tuple[float, ...]] = []
    for doc in batch.documents:
        score, relevance = backend.score_pair(question, doc.text, refs.references)
        correctness.append(score)
        rows.append(tuple(relevance))
    return EvaluationScores(
        correctness=AnswerabilityScores(tuple(correctness)),
        relevance=RelevanceMatrix(tuple(rows)),
    )


LLM_PROMPT_TEMPLATE = (
    '<s>[INST]"Consider the following question Q: {s}. Is question Q complex '
    "according to the provided definition? A complex question cannot be answered "
    "by a single document; it necessitates reasoning over different snippets due "
    "to the low probability of finding the answer within existing sources. "
    "Examples of complex questions include inquiries like 'Is a cup of tea bigger "
    "than an elephant?' where the comparison is unlikely to be found in a single "
    "document. In contrast, questions such as 'Is an elephant bigger than a lion?' "
    "are not complex because 'elephant and lions' can be part of the same document "
    "with high probability. Please respond with 'yes' if the question is complex "
    "and 'no' if it is not. Ensure your reply is concise, strictly limited to "
    "'yes' or 'no'.\" [/INST]"
)


class LlmClient(Protocol):
    def generate(self, prompt: str) -> str: ...


class HttpLlmClient:
    """Client for a text-generation endpoint speaking ``POST /generate``.

    Request: ``{"prompt": str}``; response: ``{"text": str}``.
    """

    def __init__(self, url: str, timeout: float = 30.0, retries: int = 2) -> None:
        self.url = url.rstrip("/")
        self.retries = retries
        self._client = httpx.Client(timeout=timeout)

    def generate(self, prompt: str) -> str:
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                response = self._client.post(self.url + "/generate", json={"prompt": prompt})
                response.raise_for_status()
                body = response.json()
                return str(body["text"])
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last_error = exc
            except (KeyError, TypeError, ValueError) as exc:
                raise LlmBackendError(f"LLM endpoint returned a bad payload: {exc}") from None
        raise LlmBackendError(f"LLM endpoint unreachable: {last_error}")

    def close(self) -> None:
        self._client.close()


def parse_yes_no(reply: str) -> str:
    """Map a free-text reply to a label via its earliest 'yes' or 'no'."""
    lowered = reply.lower()
    yes_at = lowered.find("yes")
    no_at = lowered.find("no")
    if yes_at < 0 and no_at < 0:
        raise LlmParseError(f"reply contains neither 'yes' nor 'no': {reply!r}")
    if no_at < 0 or (0 <= yes_at < no_at):
        return LABEL_COMPLEX
    return LABEL_NOT_COMPLEX


def llm_baseline_classify(question: Question, llm_client: LlmClient) -> str:
    """Classify a question with a prompted LLM; 'yes' means complex."""
    prompt = LLM_PROMPT_TEMPLATE.replace("{s}", question.raw_text)
    return parse_yes_no(llm_client.generate(prompt))
