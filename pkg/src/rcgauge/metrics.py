"""Binary classification metrics, correlation coefficients, calibration.

The positive class is always "complex". Zero-denominator cases return 0.0
with ``defined=False`` instead of NaN so batch reports stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from rcgauge.core import LABEL_COMPLEX, LABEL_NOT_COMPLEX, Thresholds


class MetricResult(NamedTuple):
    """Metric value plus whether its denominator was non-zero."""

    value: float
    defined: bool = True


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary counts with "complex" as the positive class."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "ConfusionMatrix":
        """Count (gold_label, predicted_label) pairs."""
        tp = fp = fn = tn = 0
        for gold, predicted in pairs:
            gold_pos = gold == LABEL_COMPLEX
            pred_pos = predicted == LABEL_COMPLEX
            if gold_pos and pred_pos:
                tp += 1
            elif not gold_pos and pred_pos:
                fp += 1
            elif gold_pos and not pred_pos:
                fn += 1
            else:
                tn += 1
        return cls(tp=tp, fp=fp, fn=fn, tn=tn)


def _require_nonempty(cm: ConfusionMatrix) -> None:
    if cm.total == 0:
        raise ValueError("metrics need at least one prediction")


def accuracy(cm: ConfusionMatrix) -> MetricResult:
    _require_nonempty(cm)
    return MetricResult((cm.tp + cm.tn) / cm.total)


def precision(cm: ConfusionMatrix) -> MetricResult:
    _require_nonempty(cm)
    if cm.tp + cm.fp == 0:
        return MetricResult(0.0, defined=False)
    return MetricResult(cm.tp / (cm.tp + cm.fp))


def recall(cm: ConfusionMatrix) -> MetricResult:
    _require_nonempty(cm)
    if cm.tp + cm.fn == 0:
        return MetricResult(0.0, defined=False)
    return MetricResult(cm.tp / (cm.tp + cm.fn))


def f1(cm: ConfusionMatrix) -> MetricResult:
    _require_nonempty(cm)
    p = precision(cm)
    r = recall(cm)
    if not (p.defined and r.defined) or p.value + r.value == 0.0:
        return MetricResult(0.0, defined=False)
    return MetricResult(2.0 * p.value * r.value / (p.value + r.value))


def mcc(cm: ConfusionMatrix) -> MetricResult:
    _require_nonempty(cm)
    factors = (
        (cm.tp + cm.fp) * (cm.tp + cm.fn) * (cm.tn + cm.fp) * (cm.tn + cm.fn)
    )
    if factors == 0:
        return MetricResult(0.0, defined=False)
    return MetricResult((cm.tp * cm.tn - cm.fp * cm.fn) / math.sqrt(factors))


def pcc(x: Sequence[float], y: Sequence[float]) -> MetricResult:
    """Sample Pearson correlation; constant input yields a flagged 0."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValueError("pcc needs at least two points")
    mean_x = math.fsum(x) / len(x)
    mean_y = math.fsum(y) / len(y)
    dx = [v - mean_x for v in x]
    dy = [v - mean_y for v in y]
    var_x = math.fsum(d * d for d in dx)
    var_y = math.fsum(d * d for d in dy)
    if var_x == 0.0 or var_y == 0.0:
        return MetricResult(0.0, defined=False)
    covariance = math.fsum(a * b for a, b in zip(dx, dy))
    # sqrt each factor separately: the product can underflow to 0 even
    # when both variances are representable
    return MetricResult(
        max(-1.0, min(1.0, covariance / (math.sqrt(var_x) * math.sqrt(var_y))))
    )


class CalibrationSample(NamedTuple):
    """Per-question inputs the threshold sweep re-thresholds cheaply."""

    gold_label: str
    max_correctness: float
    completeness_score: float


class SurfaceCell(NamedTuple):
    t_ans: float
    t_com: float
    f1: float
    defined: bool


@dataclass(frozen=True)
class CalibrationResult:
    thresholds: Thresholds
    best_f1: float
    surface: tuple[SurfaceCell, ...]


def grid_values(step: float) -> list[float]:
    """Multiples of ``step`` within [0, 1]."""
    if step <= 0.0:
        raise ValueError(f"grid step must be positive, got {step}")
    count = int(1.0 / step + 1e-9)
    return [round(i * step, 10) for i in range(count + 1) if round(i * step, 10) <= 1.0]


def predict_complex(sample: CalibrationSample, t_ans: float, t_com: float) -> bool:
    """The decision rule re-expressed over precomputed diagnostics."""
    return sample.max_correctness < t_ans and sample.completeness_score >= t_com


def calibrate(samples: Sequence[CalibrationSample], step: float = 0.05) -> CalibrationResult:
    """Exhaustive F1 grid sweep over (t_ans, t_com).

    Ties prefer higher t_ans, then higher t_com, so the result is
    deterministic. The full surface is returned for reporting.
    """
    if not samples:
        raise ValueError("calibration needs at least one labeled sample")
    values = grid_values(step)
    surface: list[SurfaceCell] = []
    best: tuple[float, float, float] | None = None  # (f1, t_ans, t_com)
    for t_ans in values:
        for t_com in values:
            pairs = (
                (
                    s.gold_label,
                    LABEL_COMPLEX if predict_complex(s, t_ans, t_com) else LABEL_NOT_COMPLEX,
                )
                for s in samples
            )
            cell_f1 = f1(ConfusionMatrix.from_pairs(pairs))
            surface.append(SurfaceCell(t_ans, t_com, cell_f1.value, cell_f1.defined))
            key = (cell_f1.value, t_ans, t_com)
            if best is None or key > best:
                best = key
    assert best is not None
    best_f1, t_ans, t_com = best
    return CalibrationResult(
        thresholds=Thresholds(t_ans=t_ans, t_com=t_com),
        best_f1=best_f1,
        surface=tuple(surface),
    )


def metrics_block(cm: ConfusionMatrix, pcc_result: MetricResult | None = None) -> dict:
    """One report entry: acc/p/r/f1/mcc (+pcc), n, and undefined flags."""
    results = {
        "acc": accuracy(cm),
        "p": precision(cm),
        "r": recall(cm),
        "f1": f1(cm),
        "mcc": mcc(cm),
    }
    if pcc_result is not None:
        results["pcc"] = pcc_result
    block: dict = {name: result.value for name, result in results.items()}
    block["n"] = cm.total
    undefined = sorted(name for name, result in results.items() if not result.defined)
    if undefined:
        block["undefined"] = undefined
    return block


def build_report(
    per_dataset_pairs: dict[str, list[tuple[str, str]]],
    thresholds: Thresholds | None = None,
    config_digest: str | None = None,
) -> dict:
    """Evaluation report over (gold, predicted) label pairs grouped by dataset.

    Emits per-dataset blocks, a pooled block, and both readings of the
    cross-dataset correlation: pcc over pooled questions and the mean of
    per-dataset pcc values.
    """
    report: dict = {"per_dataset": {}, "thresholds": None, "config_digest": config_digest}
    if thresholds is not None:
        report["thresholds"] = {"t_ans": thresholds.t_ans, "t_com": thresholds.t_com}

    pooled: list[tuple[str, str]] = []
    dataset_pccs: list[float] = []
    for dataset in sorted(per_dataset_pairs):
        pairs = per_dataset_pairs[dataset]
        if not pairs:
            continue
        pooled.extend(pairs)
        pcc_result = _label_pcc(pairs)
        report["per_dataset"][dataset] = metrics_block(
            ConfusionMatrix.from_pairs(pairs), pcc_result
        )
        if pcc_result is not None and pcc_result.defined:
            dataset_pccs.append(pcc_result.value)

    report["pooled"] = metrics_block(ConfusionMatrix.from_pairs(pooled), _label_pcc(pooled))
    report["pcc_dataset_mean"] = (
        math.fsum(dataset_pccs) / len(dataset_pccs) if dataset_pccs else None
    )
    return report


def _label_pcc(pairs: Sequence[tuple[str, str]]) -> MetricResult | None:
    if len(pairs) < 2:
        return None
    gold = [1.0 if g == LABEL_COMPLEX else 0.0 for g, _ in pairs]
    pred = [1.0 if p == LABEL_COMPLEX else 0.0 for _, p in pairs]
    return pcc(gold, pred)


def format_report_table(report: dict) -> str:
    """Plain-text aligned table of the per-dataset and pooled blocks."""
    header = f"{'dataset':<12} {'n':>6} {'acc':>7} {'p':>7} {'r':>7} {'f1':>7} {'mcc':>7} {'pcc':>7}"
    lines = [header, "-" * len(header)]
    blocks = dict(report["per_dataset"])
    blocks["pooled"] = report["pooled"]
    for name, block in blocks.items():
        pcc_text = f"{block['pcc']:>7.3f}" if "pcc" in block else f"{'-':>7}"
        lines.append(
            f"{name:<12} {block['n']:>6} {block['acc']:>7.3f} {block['p']:>7.3f} "
            f"{block['r']:>7.3f} {block['f1']:>7.3f} {block['mcc']:>7.3f} {pcc_text}"
        )
    return "\n".join(lines)
