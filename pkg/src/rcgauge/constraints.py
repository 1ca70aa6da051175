"""The decision core: two thresholded constraints and the final label.

A question is retrieval-complex when no single retrieved document scores as
answering it (answerability bit 0) and the average normalized entropy of
per-document token relevance is high (completeness bit 1). All operations
are pure functions over immutable inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable

from rcgauge.core import LABEL_COMPLEX, LABEL_NOT_COMPLEX, Question, Thresholds
from rcgauge.evaluator import AnswerabilityScores, RelevanceMatrix

RULE_BOTH = "both"
RULE_ANSWERABILITY_ONLY = "answerability_only"
RULE_COMPLETENESS_ONLY = "completeness_only"
RULES = (RULE_BOTH, RULE_ANSWERABILITY_ONLY, RULE_COMPLETENESS_ONLY)


def answerability(scores: AnswerabilityScores, t_ans: float) -> int:
    """1 iff some document's correctness reaches t_ans (boundary inclusive)."""
    if not scores.scores:
        raise ValueError("answerability needs at least one score")
    return 1 if any(s >= t_ans for s in scores.scores) else 0


def per_document_entropy(row: Iterable[float]) -> float:
    """Normalized Shannon entropy of one relevance row, in [0, 1].

    The row is scaled by its maximum before normalizing to a distribution,
    which keeps constant rows at exactly 1.0 and one-hot rows at exactly
    0.0; a single-column row is fully concentrated by definition (0.0).
    Entropy is base-2, divided by log2 of the row width.
    """
    values = list(row)
    if not values:
        raise ValueError("relevance row is empty")
    peak = max(values)
    if peak <= 0.0 or any(v < 0.0 for v in values):
        raise ValueError(
            "relevance row must be non-negative with a positive sum "
            "(is epsilon smoothing missing upstream?)"
        )
    if len(values) == 1:
        return 0.0
    scaled = [v / peak for v in values]
    total = math.fsum(scaled)
    # H = log2(S) - sum(v*log2(v))/S, the 0*log(0) := 0 extension.
    weighted = math.fsum(v * math.log2(v) for v in scaled if v > 0.0)
    entropy = math.log2(total) - weighted / total
    return min(1.0, max(0.0, entropy / math.log2(len(values))))


def completeness_score(matrix: RelevanceMatrix) -> float:
    """Average normalized per-document entropy over the batch."""
    if matrix.num_docs == 0:
        raise ValueError("completeness needs at least one document row")
    return math.fsum(per_document_entropy(r) for r in matrix.rows) / matrix.num_docs


def completeness(s_d: float, t_com: float) -> int:
    """1 iff the completeness score reaches t_com (boundary inclusive)."""
    if not 0.0 <= s_d <= 1.0:
        raise ValueError(f"completeness score {s_d} outside [0, 1]")
    return 1 if s_d >= t_com else 0


def decide_label(ans_bit: int, com_bit: int, rule: str = RULE_BOTH) -> str:
    """Map constraint bits to a label under the given decision rule."""
    if rule == RULE_BOTH:
        is_complex = ans_bit == 0 and com_bit == 1
    elif rule == RULE_ANSWERABILITY_ONLY:
        is_complex = ans_bit == 0
    elif rule == RULE_COMPLETENESS_ONLY:
        is_complex = com_bit == 1
    else:
        raise ValueError(f"unknown rule {rule!r} (expected one of {RULES})")
    return LABEL_COMPLEX if is_complex else LABEL_NOT_COMPLEX


@dataclass(frozen=True)
class RcVerdict:
    """Classification outcome plus diagnostics for one question."""

    question_id: str
    label: str
    ans_bit: int
    com_bit: int
    max_correctness: float
    completeness_score: float
    per_doc_entropy: tuple[float, ...]
    rule: str = RULE_BOTH

    def __post_init__(self) -> None:
        if self.label != decide_label(self.ans_bit, self.com_bit, self.rule):
            raise ValueError(
                f"verdict label {self.label!r} inconsistent with bits "
                f"(ans={self.ans_bit}, com={self.com_bit}) under rule {self.rule!r}"
            )


def classify(
    question: Question,
    scores: AnswerabilityScores,
    matrix: RelevanceMatrix,
    thresholds: Thresholds,
    rule: str = RULE_BOTH,
) -> RcVerdict:
    """Apply both constraints and produce a verdict with diagnostics."""
    if len(scores) != matrix.num_docs:
        raise ValueError(
            f"misaligned inputs: {len(scores)} correctness scores vs "
            f"{matrix.num_docs} relevance rows"
        )
    if matrix.num_tokens != len(question.tokens):
        raise ValueError(
            f"misaligned inputs: {matrix.num_tokens} relevance columns vs "
            f"{len(question.tokens)} question tokens"
        )
    ans_bit = answerability(scores, thresholds.t_ans)
    entropies = tuple(per_document_entropy(r) for r in matrix.rows)
    s_d = math.fsum(entropies) / len(entropies)
    com_bit = completeness(s_d, thresholds.t_com)
    return RcVerdict(
        question_id=question.id,
        label=decide_label(ans_bit, com_bit, rule),
        ans_bit=ans_bit,
        com_bit=com_bit,
        max_correctness=scores.max_correctness,
        completeness_score=s_d,
        per_doc_entropy=entropies,
        rule=rule,
    )


def _nine_digits(value: float) -> float:
    return float(f"{value:.9g}")


def verdict_to_json(verdict: RcVerdict) -> str:
    """One JSON line per verdict: stable key order, floats at 9 significant digits."""
    payload = {
        "question_id": verdict.question_id,
        "label": verdict.label,
        "ans_bit": verdict.ans_bit,
        "com_bit": verdict.com_bit,
        "max_correctness": _nine_digits(verdict.max_correctness),
        "completeness_score": _nine_digits(verdict.completeness_score),
        "per_doc_entropy": [_nine_digits(v) for v in verdict.per_doc_entropy],
        "rule": verdict.rule,
    }
    return json.dumps(payload, separators=(",", ":"))


def verdict_from_json(line: str) -> RcVerdict:
    obj = json.loads(line)
    return RcVerdict(
        question_id=obj["question_id"],
        label=obj["label"],
        ans_bit=obj["ans_bit"],
        com_bit=obj["com_bit"],
        max_correctness=obj["max_correctness"],
        completeness_score=obj["completeness_score"],
        per_doc_entropy=tuple(obj["per_doc_entropy"]),
        rule=obj.get("rule", RULE_BOTH),
    )
