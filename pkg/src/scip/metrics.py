"""Binary-classification validation metrics and the per-packet-count sweep.

Positive means classified periodic. Undefined ratios (zero denominator)
raise UndefinedMetricError from the scalar functions; the sweep table
records them as NaN cells so one empty cell cannot kill a whole run.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, UndefinedMetricError
from .features import cov_from_iats

__all__ = [
    "ConfusionCounts",
    "accuracy",
    "recall",
    "precision",
    "f1",
    "confusion_from_predictions",
    "metrics_vs_packets",
    "write_metrics_csv",
]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ParameterError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def accuracy(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise UndefinedMetricError("accuracy undefined for empty counts")
    return (c.tp + c.tn) / c.total


def recall(c: ConfusionCounts) -> float:
    denom = c.tp + c.fn
    if denom == 0:
        raise UndefinedMetricError("recall undefined without positive samples")
    return c.tp / denom


def precision(c: ConfusionCounts) -> float:
    denom = c.tp + c.fp
    if denom == 0:
        raise UndefinedMetricError("precision undefined without positive predictions")
    return c.tp / denom


def f1(c: ConfusionCounts) -> float:
    p = precision(c)
    r = recall(c)
    if p + r == 0:
        raise UndefinedMetricError("f1 undefined when precision and recall are both 0")
    return 2 * p * r / (p + r)


def confusion_from_predictions(y_true: np.ndarray, predicted: np.ndarray) -> ConfusionCounts:
    """Count TP/TN/FP/FN from boolean arrays (True = periodic)."""
    y = np.asarray(y_true, dtype=bool)
    p = np.asarray(predicted, dtype=bool)
    if y.shape != p.shape:
        raise ParameterError("shape mismatch between labels and predictions")
    return ConfusionCounts(
        tp=int(np.sum(y & p)),
        tn=int(np.sum(~y & ~p)),
        fp=int(np.sum(~y & p)),
        fn=int(np.sum(y & ~p)),
    )


@dataclass(frozen=True)
class SweepRow:
    x: int
    threshold: float
    accuracy: float
    precision: float
    recall: float
    f1: float


def _metric_or_nan(fn, counts) -> float:
    try:
        return fn(counts)
    except UndefinedMetricError:
        return math.nan


def metrics_vs_packets(model, streams, thresholds, x_min: int = 3,
                       x_max: int = 35) -> list[SweepRow]:
    """Classify every stream from its first x packets, for each x and threshold.

    Each stream is run once; the per-step confidences are then sliced per
    packet count, so a row at x uses only information causally available
    after x arrivals. Expect a transient below x = 9: streams with four
    packets per pattern have not completed two patterns yet and cannot be
    separated reliably there.
    """
    if not streams:
        raise ParameterError("empty evaluation set")
    if x_min < 3 or x_max < x_min:
        raise ParameterError("need 3 <= x_min <= x_max")
    for s in streams:
        if s.iats.size + 1 < x_max:
            raise ParameterError(
                f"stream with {s.iats.size + 1} packets is shorter than x_max={x_max}"
            )
    for t in thresholds:
        if not (0 < t < 1):
            raise ParameterError(f"threshold must be in (0, 1), got {t}")

    y_true = np.array([s.label.is_periodic for s in streams], dtype=bool)
    # group equal-length streams into batched forward passes
    conf = np.empty((len(streams), x_max - 2))
    by_len: dict[int, list[int]] = {}
    for i, s in enumerate(streams):
        by_len.setdefault(s.iats.size, []).append(i)
    for length, idx in by_len.items():
        batch = np.stack([cov_from_iats(streams[i].iats) for i in idx])
        conf[np.array(idx)] = model.batch_step_confidences(batch)[:, : x_max - 2]

    rows = []
    for x in range(x_min, x_max + 1):
        col = conf[:, x - 3]
        for t in thresholds:
            counts = confusion_from_predictions(y_true, col > t)
            rows.append(SweepRow(
                x=x,
                threshold=t,
                accuracy=_metric_or_nan(accuracy, counts),
                precision=_metric_or_nan(precision, counts),
                recall=_metric_or_nan(recall, counts),
                f1=_metric_or_nan(f1, counts),
            ))
    return rows


def write_metrics_csv(rows: list[SweepRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "threshold", "accuracy", "precision", "recall", "f1"])
        for r in rows:
            writer.writerow([r.x, r.threshold, r.accuracy, r.precision, r.recall, r.f1])
