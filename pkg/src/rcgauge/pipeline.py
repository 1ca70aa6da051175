"""Batch classification: retrieve, score, and decide, one record at a time.

Records are independent work items. A bounded thread pool may process them
concurrently; results are reassembled in input order, so output files are
byte-identical for any worker count.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from rcgauge.constraints import RULE_BOTH, RcVerdict, classify, completeness, decide_label
from rcgauge.core import PipelineConfig, RcgaugeError
from rcgauge.datasets import BenchmarkRecord
from rcgauge.evaluator import LexicalScorer, RemoteScorer, ScorerBackend, evaluate_batch
from rcgauge.metrics import CalibrationSample
from rcgauge.retrieval import EmbeddingClient, InvertedIndex, retrieve_bm25, retrieve_hybrid

logger = logging.getLogger(__name__)


@dataclass
class BatchStats:
    """Counts surfaced in run manifests."""

    questions: int = 0
    degraded: int = 0
    unclassified: int = 0
    errors: list[str] = field(default_factory=list)


def build_scorer(config: PipelineConfig) -> ScorerBackend:
    """Instantiate the configured scoring backend."""
    if config.scorer_backend == "remote":
        if not config.scorer_url:
            raise RcgaugeError("scorer_backend is 'remote' but scorer_url is not set")
        return RemoteScorer(config.scorer_url)
    return LexicalScorer(epsilon_rel=config.epsilon_rel)


def _empty_batch_verdict(record: BenchmarkRecord, config: PipelineConfig, rule: str) -> RcVerdict:
    # Nothing retrieved: not answerable by any document, and the completeness
    # score is defined as 0 (no evidence to spread).
    com_bit = completeness(0.0, config.thresholds.t_com)
    return RcVerdict(
        question_id=record.id,
        label=decide_label(0, com_bit, rule),
        ans_bit=0,
        com_bit=com_bit,
        max_correctness=0.0,
        completeness_score=0.0,
        per_doc_entropy=(),
        rule=rule,
    )


def classify_record(
    record: BenchmarkRecord,
    index: InvertedIndex,
    config: PipelineConfig,
    scorer: ScorerBackend,
    dense_client: EmbeddingClient | None = None,
    rule: str = RULE_BOTH,
) -> tuple[RcVerdict, bool]:
    """Classify one record; returns the verdict and a degraded-retrieval flag."""
    if config.retriever == "hybrid" and dense_client is not None:
        batch = retrieve_hybrid(
            index, dense_client, record.question, config.top_k, config.fusion_k
        )
    else:
        if config.retriever == "hybrid":
            logger.warning(
                "question %s: no dense backend configured; using BM25 only", record.id
            )
        batch = retrieve_bm25(index, record.question, config.top_k)
        if config.retriever == "hybrid":
            batch = dataclasses.replace(batch, degraded=True)

    if not batch.entries:
        return _empty_batch_verdict(record, config, rule), batch.degraded

    scores = evaluate_batch(record.question, batch, record.references, scorer)
    verdict = classify(
        record.question, scores.correctness, scores.relevance, config.thresholds, rule
    )
    return verdict, batch.degraded


def classify_records(
    records: Sequence[BenchmarkRecord],
    index: InvertedIndex,
    config: PipelineConfig,
    scorer: ScorerBackend | None = None,
    dense_client: EmbeddingClient | None = None,
    rule: str = RULE_BOTH,
    threads: int = 1,
) -> tuple[list[RcVerdict], BatchStats]:
    """Classify records in input order, optionally with a worker pool."""
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    scorer = scorer if scorer is not None else build_scorer(config)
    stats = BatchStats()

    def work(record: BenchmarkRecord) -> tuple[RcVerdict, bool]:
        return classify_record(record, index, config, scorer, dense_client, rule)

    if threads == 1:
        results = [work(record) for record in records]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, records))

    verdicts = []
    for verdict, degraded in results:
        verdicts.append(verdict)
        stats.questions += 1
        stats.degraded += 1 if degraded else 0
    return verdicts, stats


def calibration_samples(
    records: Sequence[BenchmarkRecord], verdicts: Sequence[RcVerdict]
) -> list[CalibrationSample]:
    """Pair gold labels with verdict diagnostics for the threshold sweep."""
    by_id = {v.question_id: v for v in verdicts}
    samples = []
    for record in records:
        if record.gold_label is None:
            continue
        verdict = by_id.get(record.id)
        if verdict is None:
            continue
        samples.append(
            CalibrationSample(
                gold_label=record.gold_label,
                max_correctness=verdict.max_correctness,
                completeness_score=verdict.completeness_score,
            )
        )
    return samples


def read_predictions(path: str | Path) -> list[tuple[str, str | None]]:
    """Read (question_id, label) pairs from a verdict or baseline JSONL file.

    Accepts full verdict lines as well as the minimal lines the LLM
    baseline writes; a null label marks an unclassified question.
    """
    pairs: list[tuple[str, str | None]] = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                pairs.append((str(obj["question_id"]), obj.get("label")))
            except (ValueError, KeyError, TypeError) as exc:
                raise RcgaugeError(f"{path}:{lineno}: bad prediction line: {exc}") from None
    return pairs


def join_predictions(
    records: Sequence[BenchmarkRecord],
    predictions: Sequence[tuple[str, str | None]],
    unmatched_limit: float = 0.10,
) -> tuple[dict[str, list[tuple[str, str]]], dict[str, int]]:
    """Join gold records with predictions on id, grouped by dataset.

    Returns (dataset -> (gold, predicted) pairs, counts). More than
    ``unmatched_limit`` of ids appearing on only one side is a hard error;
    null-label predictions are counted separately as unclassified.
    """
    gold_by_id = {r.id: r for r in records if r.gold_label is not None}
    labeled = {qid: label for qid, label in predictions if label is not None}
    unclassified = sum(1 for _, label in predictions if label is None)

    prediction_ids = {qid for qid, _ in predictions}
    union = set(gold_by_id) | prediction_ids
    matched = set(gold_by_id) & set(labeled)
    unmatched = len(union) - len(matched) - unclassified
    if union and (unmatched / len(union)) > unmatched_limit:
        raise RcgaugeError(
            f"{unmatched} of {len(union)} ids unmatched between gold and "
            f"predictions (limit {unmatched_limit:.0%})"
        )

    grouped: dict[str, list[tuple[str, str]]] = {}
    for record in records:
        if record.id in matched and record.gold_label is not None:
            grouped.setdefault(record.dataset, []).append(
                (record.gold_label, labeled[record.id])
            )
    counts = {
        "matched": len(matched),
        "unmatched": unmatched,
        "unclassified": unclassified,
    }
    return grouped, counts
