"""Benchmark ingestion: per-dataset JSONL projections to a uniform record.

Each loader expects a minimal JSON-lines projection of the upstream release
(documented in the README) and applies that dataset's complexity-label
mapping. Malformed lines are skipped and reported with line numbers; more
than 10% malformed lines is a hard error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from rcgauge.core import (
    LABEL_COMPLEX,
    LABEL_NOT_COMPLEX,
    LABELS,
    Question,
    RcgaugeError,
    ReferenceSet,
)

DATASET_KINDS = ("cwq", "hotpotqa", "strategyqa", "musique", "nq", "quora", "custom")
# Datasets whose releases carry an intrinsic complexity signal; records from
# these loaders always have a gold label.
LABELED_KINDS = ("cwq", "hotpotqa", "strategyqa", "musique")

MALFORMED_FRACTION_LIMIT = 0.10


class DatasetError(RcgaugeError, ValueError):
    """Input file unusable: unknown kind, unreadable, or too many bad lines."""


@dataclass(frozen=True)
class BenchmarkRecord:
    """Dataset-agnostic record: question, references, optional gold label."""

    id: str
    question: Question
    references: ReferenceSet
    gold_label: str | None
    dataset: str

    def __post_init__(self) -> None:
        if self.dataset not in DATASET_KINDS:
            raise ValueError(f"unknown dataset kind {self.dataset!r}")
        if self.gold_label is not None and self.gold_label not in LABELS:
            raise ValueError(f"record {self.id!r}: bad gold_label {self.gold_label!r}")
        if self.dataset in LABELED_KINDS and self.gold_label is None:
            raise ValueError(
                f"record {self.id!r}: dataset {self.dataset!r} requires a gold label"
            )


@dataclass
class LoadResult:
    """Loader output: good records plus a malformed-line report."""

    records: list[BenchmarkRecord]
    skipped: list[tuple[int, str]] = field(default_factory=list)

    @property
    def total_lines(self) -> int:
        return len(self.records) + len(self.skipped)


def _as_references(obj: dict, line_info: str) -> ReferenceSet:
    raw = obj.get("references", obj.get("answers"))
    if raw is None and "answer" in obj:
        raw = [obj["answer"]]
    if not isinstance(raw, list) or not raw:
        raise ValueError(f"{line_info}: missing or empty answers")
    normalized = []
    for value in raw:
        if isinstance(value, bool):
            value = "yes" if value else "no"
        normalized.append(str(value))
    return ReferenceSet(tuple(normalized))


def _require(obj: dict, key: str, line_info: str) -> object:
    if key not in obj:
        raise ValueError(f"{line_info}: missing field {key!r}")
    return obj[key]


def _label_cwq(obj: dict, line_info: str, composed_field: str) -> str:
    composed = _require(obj, composed_field, line_info)
    return LABEL_COMPLEX if bool(composed) else LABEL_NOT_COMPLEX


def _label_hotpotqa(obj: dict, line_info: str, medium_is_complex: bool) -> str:
    level = str(_require(obj, "level", line_info)).lower()
    if level == "easy":
        return LABEL_NOT_COMPLEX
    if level == "hard":
        return LABEL_COMPLEX
    if level == "medium":
        return LABEL_COMPLEX if medium_is_complex else LABEL_NOT_COMPLEX
    raise ValueError(f"{line_info}: unknown difficulty level {level!r}")


def _label_hops(obj: dict, line_info: str) -> str:
    hops = _require(obj, "n_hops", line_info)
    if not isinstance(hops, int) or hops < 1:
        raise ValueError(f"{line_info}: n_hops must be a positive integer, got {hops!r}")
    return LABEL_NOT_COMPLEX if hops == 1 else LABEL_COMPLEX


def _optional_label(obj: dict, line_info: str) -> str | None:
    label = obj.get("gold_label")
    if label is None:
        return None
    if label not in LABELS:
        raise ValueError(f"{line_info}: bad gold_label {label!r}")
    return label


def load_dataset(
    path: str | Path,
    dataset_kind: str,
    *,
    cwq_composed_field: str = "composed",
    hotpot_medium_is_complex: bool = True,
) -> LoadResult:
    """Load one benchmark file into uniform records.

    ``cwq_composed_field`` names the boolean field separating composed from
    simple questions in the cwq projection. ``hotpot_medium_is_complex``
    controls where hotpotqa's middle difficulty level maps.
    """
    if dataset_kind not in DATASET_KINDS:
        raise DatasetError(
            f"unknown dataset kind {dataset_kind!r} (expected one of {DATASET_KINDS})"
        )
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from None

    records: list[BenchmarkRecord] = []
    skipped: list[tuple[int, str]] = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        line_info = f"{path}:{lineno}"
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError(f"{line_info}: expected a JSON object")
            record_id = str(_require(obj, "id", line_info))
            question = Question.from_text(record_id, str(_require(obj, "question", line_info)))
            references = _as_references(obj, line_info)

            if dataset_kind == "cwq":
                label: str | None = _label_cwq(obj, line_info, cwq_composed_field)
            elif dataset_kind == "hotpotqa":
                label = _label_hotpotqa(obj, line_info, hotpot_medium_is_complex)
            elif dataset_kind in ("musique", "strategyqa"):
                label = _label_hops(obj, line_info)
            else:  # nq, quora, custom: labels are optional, pre-supplied
                label = _optional_label(obj, line_info)

            declared = obj.get("dataset", dataset_kind)
            records.append(
                BenchmarkRecord(
                    id=record_id,
                    question=question,
                    references=references,
                    gold_label=label,
                    dataset=declared if dataset_kind == "custom" else dataset_kind,
                )
            )
        except ValueError as exc:
            skipped.append((lineno, str(exc)))

    total = len(records) + len(skipped)
    if total == 0:
        return LoadResult(records=[], skipped=[])
    if len(skipped) / total > MALFORMED_FRACTION_LIMIT:
        raise DatasetError(
            f"{path}: {len(skipped)} of {total} lines malformed "
            f"(limit {MALFORMED_FRACTION_LIMIT:.0%}); first: "
            f"line {skipped[0][0]}: {skipped[0][1]}"
        )
    return LoadResult(records=records, skipped=skipped)


def write_records(records: Iterable[BenchmarkRecord], path: str | Path) -> int:
    """Write records in the internal JSONL format; returns the count written.

    ``load_dataset(path, "custom")`` of the output reproduces the records
    field for field; absent gold labels stay absent.
    """
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            payload: dict[str, object] = {
                "id": record.id,
                "question": record.question.raw_text,
                "references": list(record.references.references),
            }
            if record.gold_label is not None:
                payload["gold_label"] = record.gold_label
            payload["dataset"] = record.dataset
            handle.write(json.dumps(payload, separators=(",", ":")) + "\n")
            count += 1
    return count
