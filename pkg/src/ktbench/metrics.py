"""Binary-classification metrics over next-response predictions.

A CORRECT response (label 1) is the positive class. The confusion core is
exact integer counting; AUC is the Mann-Whitney rank statistic with ties
counted one half, which equals the area under the ROC curve without any
threshold-grid ambiguity.

This module also owns the single shared binarization rule: a probability of
at least 0.5 maps to CORRECT (ties break to CORRECT).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import KtbenchError

if TYPE_CHECKING:  # pragma: no cover
    from .baselines import Prediction

CORRECT = 1
WRONG = 0
THRESHOLD = 0.5


class UndefinedMetricError(KtbenchError):
    """A metric has no defined value on this input (e.g. single-class AUC)."""


def binarize(p_correct: float) -> int:
    """Threshold a correctness probability into a label; 0.5 ties to CORRECT."""
    return CORRECT if p_correct >= THRESHOLD else WRONG


@dataclass(frozen=True, slots=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(labels: Sequence[int], predicted_labels: Sequence[int]) -> ConfusionCounts:
    """Count TP/TN/FP/FN with CORRECT as the positive class."""
    if len(labels) != len(predicted_labels):
        raise UndefinedMetricError(
            f"length mismatch: {len(labels)} labels vs {len(predicted_labels)} predictions"
        )
    if len(labels) == 0:
        raise UndefinedMetricError("no points to evaluate")
    y = np.asarray(labels, dtype=np.int64)
    yhat = np.asarray(predicted_labels, dtype=np.int64)
    tp = int(np.sum((y == 1) & (yhat == 1)))
    tn = int(np.sum((y == 0) & (yhat == 0)))
    fp = int(np.sum((y == 0) & (yhat == 1)))
    fn = int(np.sum((y == 1) & (yhat == 0)))
    return ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn)


@dataclass(frozen=True, slots=True)
class ClassificationMetrics:
    accuracy: float
    balanced_accuracy: float
    precision: float
    recall: float
    f1: float
    # names of components whose 0/0 ratio was defined to 0
    degenerate: tuple[str, ...] = ()


def _ratio(num: int, den: int, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def classification_metrics(c: ConfusionCounts) -> ClassificationMetrics:
    """Accuracy, balanced accuracy, precision, recall, and F1 from counts.

    Any 0/0 component is defined as 0 and flagged instead of raising, matching
    the convention that zero true positives yield zero precision/recall/F1.
    """
    if c.total == 0:
        raise UndefinedMetricError("empty confusion counts")
    flags: list[str] = []
    accuracy = (c.tp + c.tn) / c.total
    sensitivity = _ratio(c.tp, c.tp + c.fn, "sensitivity", flags)
    specificity = _ratio(c.tn, c.tn + c.fp, "specificity", flags)
    balanced = 0.5 * (sensitivity + specificity)
    precision = _ratio(c.tp, c.tp + c.fp, "precision", flags)
    recall = _ratio(c.tp, c.tp + c.fn, "recall", flags)
    f1 = _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, "f1", flags)
    return ClassificationMetrics(
        accuracy=accuracy,
        balanced_accuracy=balanced,
        precision=precision,
        recall=recall,
        f1=f1,
        degenerate=tuple(dict.fromkeys(flags)),
    )


def _tied_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks; tied scores share the mean of their rank range."""
    n = scores.shape[0]
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    is_start = np.empty(n, dtype=bool)
    is_start[0] = True
    is_start[1:] = sorted_scores[1:] != sorted_scores[:-1]
    group = np.cumsum(is_start) - 1
    starts = np.flatnonzero(is_start)
    counts = np.diff(np.append(starts, n))
    mean_rank = starts + (counts + 1) / 2.0  # starts are 0-based
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = mean_rank[group]
    return ranks


def auc(labels: Sequence[int], p_correct: Sequence[float]) -> float:
    """Probability a random positive outranks a random negative; ties count 1/2."""
    y = np.asarray(labels, dtype=np.int64)
    p = np.asarray(p_correct, dtype=np.float64)
    if y.shape != p.shape:
        raise UndefinedMetricError("labels and probabilities differ in length")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    ranks = _tied_ranks(p)
    rank_sum_pos = float(np.sum(ranks[y == 1]))
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def rmse(labels: Sequence[int], p_correct: Sequence[float]) -> float:
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(p_correct, dtype=np.float64)
    if y.shape != p.shape:
        raise UndefinedMetricError("labels and probabilities differ in length")
    if y.size == 0:
        raise UndefinedMetricError("no points to evaluate")
    return float(math.sqrt(np.mean((y - p) ** 2)))


@dataclass(frozen=True, slots=True)
class MetricReport:
    accuracy: float
    balanced_accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    rmse: float
    n_points: int
    failure_count: int
    degenerate: tuple[str, ...] = ()

    def to_json(self) -> str:
        d = {
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": self.auc,
            "rmse": self.rmse,
            "n_points": self.n_points,
            "failure_count": self.failure_count,
            "degenerate": list(self.degenerate),
        }
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        d = json.loads(text)
        d["degenerate"] = tuple(d.get("degenerate", ()))
        return cls(**d)


def metric_report(
    labels: Sequence[int],
    predictions: "Sequence[Prediction]",
    failures: int = 0,
) -> MetricReport:
    """Assemble the full seven-metric report for one model on one test set.

    `labels` and `predictions` must already exclude failed points; `failures`
    only records how many were dropped upstream.
    """
    if len(labels) != len(predictions):
        raise UndefinedMetricError("labels and predictions not aligned")
    if len(labels) == 0:
        raise UndefinedMetricError("all points failed; nothing to evaluate")
    probs = [pred.p_correct for pred in predictions]
    hard = [pred.label for pred in predictions]
    cm = classification_metrics(confusion(labels, hard))
    return MetricReport(
        accuracy=cm.accuracy,
        balanced_accuracy=cm.balanced_accuracy,
        precision=cm.precision,
        recall=cm.recall,
        f1=cm.f1,
        auc=auc(labels, probs),
        rmse=rmse(labels, probs),
        n_points=len(labels),
        failure_count=failures,
        degenerate=cm.degenerate,
    )
