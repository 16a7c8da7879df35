"""Naive predictors: training mean, Next-as-Previous, and its per-skill variant.

Cold starts fall down the chain NaP-Skills -> NaP -> Mean: an unseen skill
backs off to the all-history mean, and an empty history backs off to the
training mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .dataset import Dataset
from .errors import DataError
from .features import HistoryFeatures
from .metrics import CORRECT, WRONG, binarize

__all__ = [
    "CORRECT",
    "WRONG",
    "Prediction",
    "MeanModel",
    "fit_mean",
    "predict_mean",
    "predict_nap",
    "predict_nap_skills",
]


@dataclass(frozen=True, slots=True)
class Prediction:
    """A correctness probability and its thresholded label.

    The label always agrees with the shared binarization rule, so the
    probability of the *predicted* label is max(p_correct, 1 - p_correct).
    """

    p_correct: float
    label: int

    @classmethod
    def from_probability(cls, p_correct: float) -> "Prediction":
        if not math.isfinite(p_correct) or not 0.0 <= p_correct <= 1.0:
            raise DataError(f"probability out of range: {p_correct!r}")
        return cls(p_correct=float(p_correct), label=binarize(p_correct))


@dataclass(frozen=True, slots=True)
class MeanModel:
    train_mean: float


def fit_mean(train: Dataset) -> MeanModel:
    """Fraction of correct responses over all training records."""
    total = train.n_records
    if total == 0:
        raise DataError("cannot fit the mean of an empty training set")
    n_correct = sum(r.correct for r in train.iter_records())
    return MeanModel(train_mean=n_correct / total)


def predict_mean(m: MeanModel) -> Prediction:
    """The constant predictor: same output at every test point."""
    return Prediction.from_probability(m.train_mean)


def predict_nap(f: HistoryFeatures, fallback: MeanModel) -> Prediction:
    """Mean of the student's prior responses; training mean when there are none."""
    seen = f.total_correct + f.total_wrong
    if seen == 0:
        return predict_mean(fallback)
    return Prediction.from_probability(f.total_correct / seen)


def predict_nap_skills(f: HistoryFeatures, fallback: MeanModel) -> Prediction:
    """Mean of prior responses on the upcoming skill; falls back to NaP."""
    seen = f.skill_correct + f.skill_wrong
    if seen == 0:
        return predict_nap(f, fallback)
    return Prediction.from_probability(f.skill_correct / seen)
