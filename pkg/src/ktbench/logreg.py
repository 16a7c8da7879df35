"""Best-LR: logistic regression over history counters.

Training minimizes L2-regularized mean cross-entropy over every (step,
label) pair of the training sequences. Small datasets get full-batch gradient
descent with Armijo backtracking (monotone loss); past a row threshold the
fit switches to seeded mini-batch SGD.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import Prediction
from .dataset import Dataset, StudentSequence
from .errors import DataError, ModelError
from .features import FeatureConfig, FeatureSpace, FeatureVector, iter_history_features


@dataclass(frozen=True)
class LrConfig:
    l2: float = 1e-4
    seed: int = 0
    full_batch_max_rows: int = 1_000_000
    max_iters: int = 500  # full-batch line-search steps
    grad_tol: float = 1e-6  # stop when the gradient sup-norm falls below this
    minibatch_size: int = 512
    minibatch_epochs: int = 20
    minibatch_step: float = 0.1
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)
    time_budget_s: float | None = None


@dataclass(frozen=True)
class LrModel:
    weights: np.ndarray
    space: FeatureSpace


def _sigmoid(z: np.ndarray | float):
    # clip keeps exp() in range; sigmoid is already saturated far inside +-500
    z = np.clip(np.asarray(z, dtype=np.float64), -500.0, 500.0)
    return 1.0 / (1.0 + np.exp(-z))


def lr_predict(model: LrModel, x: FeatureVector) -> Prediction:
    if x.dimension != model.weights.shape[0]:
        raise ModelError(
            f"feature dimension {x.dimension} != model dimension {model.weights.shape[0]}"
        )
    return Prediction.from_probability(float(_sigmoid(x.dot(model.weights))))


def lr_gradient(
    model: LrModel,
    batch: Sequence[tuple[FeatureVector, int]],
    l2: float = 0.0,
) -> np.ndarray:
    """Gradient of mean cross-entropy plus the l2/2 ||w||^2 term."""
    if not batch:
        raise ModelError("empty batch")
    w = model.weights
    grad = np.zeros_like(w)
    for x, label in batch:
        r = _sigmoid(x.dot(w)) - label
        for idx, val in x.entries.items():
            grad[idx] += r * val
    grad /= len(batch)
    grad += l2 * w
    return grad


@dataclass
class _Design:
    """Row-compressed design matrix: per row, fixed-width index/value slots."""

    idx: np.ndarray  # (n, m) int32, padded with 0
    val: np.ndarray  # (n, m) float64, padded with 0.0
    y: np.ndarray  # (n,) float64
    dimension: int

    @property
    def n_rows(self) -> int:
        return self.y.shape[0]

    def scores(self, w: np.ndarray) -> np.ndarray:
        return np.einsum("nm,nm->n", self.val, w[self.idx])

    def loss(self, w: np.ndarray, l2: float) -> float:
        z = self.scores(w)
        # stable softplus(z) - y*z
        ce = np.logaddexp(0.0, z) - self.y * z
        return float(ce.mean() + 0.5 * l2 * np.dot(w, w))

    def gradient(self, w: np.ndarray, l2: float, rows: np.ndarray | None = None) -> np.ndarray:
        idx = self.idx if rows is None else self.idx[rows]
        val = self.val if rows is None else self.val[rows]
        y = self.y if rows is None else self.y[rows]
        r = (_sigmoid(np.einsum("nm,nm->n", val, w[idx])) - y) / y.shape[0]
        grad = np.zeros_like(w)
        np.add.at(grad, idx.ravel(), (val * r[:, None]).ravel())
        grad += l2 * w
        return grad


def _build_design(train: Dataset, space: FeatureSpace) -> _Design:
    width = space.count_slots + (1 if space.config.skill_onehot else 0)
    rows_idx: list[list[int]] = []
    rows_val: list[list[float]] = []
    ys: list[float] = []
    for seq in train.sequences:
        for f, r in zip(iter_history_features(seq), seq.records):
            vec = space.vector(f)
            idx = [0] * width
            val = [0.0] * width
            for slot, (i, v) in enumerate(sorted(vec.entries.items())):
                idx[slot] = i
                val[slot] = v
            rows_idx.append(idx)
            rows_val.append(val)
            ys.append(float(r.correct))
    if not ys:
        raise DataError("no training rows")
    return _Design(
        idx=np.asarray(rows_idx, dtype=np.int32),
        val=np.asarray(rows_val, dtype=np.float64),
        y=np.asarray(ys, dtype=np.float64),
        dimension=space.dimension,
    )


def _fit_full_batch(design: _Design, config: LrConfig, deadline: float | None) -> np.ndarray:
    w = np.zeros(design.dimension)
    loss = design.loss(w, config.l2)
    step = 1.0
    for _ in range(config.max_iters):
        grad = design.gradient(w, config.l2)
        gnorm2 = float(np.dot(grad, grad))
        if np.sqrt(gnorm2) < config.grad_tol:
            break
        step = min(step * 2.0, 1e4)
        while True:
            w_new = w - step * grad
            loss_new = design.loss(w_new, config.l2)
            if loss_new <= loss - 1e-4 * step * gnorm2:
                break
            step *= 0.5
            if step < 1e-12:
                # flat to machine precision
                return w
        w, loss = w_new, loss_new
        if not np.isfinite(loss):
            raise ModelError(f"diverged: non-finite loss with config {config}")
        if deadline is not None and time.monotonic() > deadline:
            break
    return w


def _fit_minibatch(design: _Design, config: LrConfig, deadline: float | None) -> np.ndarray:
    rng = np.random.default_rng(config.seed)
    w = np.zeros(design.dimension)
    n = design.n_rows
    for _ in range(config.minibatch_epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            rows = order[start : start + config.minibatch_size]
            grad = design.gradient(w, config.l2, rows=rows)
            w -= config.minibatch_step * grad
        if not np.all(np.isfinite(w)):
            raise ModelError(f"diverged: non-finite weights with config {config}")
        if deadline is not None and time.monotonic() > deadline:
            break
    return w


def fit_best_lr(train: Dataset, config: LrConfig = LrConfig()) -> LrModel:
    """Fit weights over every prediction point of the training sequences."""
    if not train.sequences:
        raise DataError("empty training set")
    space = FeatureSpace.for_vocab(train.skill_vocab, config.feature_config)
    design = _build_design(train, space)
    deadline = None
    if config.time_budget_s is not None:
        deadline = time.monotonic() + config.time_budget_s
    if design.n_rows <= config.full_batch_max_rows:
        w = _fit_full_batch(design, config, deadline)
    else:
        w = _fit_minibatch(design, config, deadline)
    return LrModel(weights=w, space=space)


def lr_predict_sequence(model: LrModel, seq: StudentSequence) -> list[Prediction]:
    return [lr_predict(model, model.space.vector(f)) for f in iter_history_features(seq)]


def lr_training_loss(model: LrModel, train: Dataset, l2: float) -> float:
    """Regularized mean cross-entropy of a fitted model on its training set."""
    design = _build_design(train, model.space)
    return design.loss(model.weights, l2)


def save_lr(model: LrModel, path: str | Path) -> None:
    """Feature-space descriptor header, then one weight per line."""
    header = json.dumps(model.space.describe(), sort_keys=True)
    lines = [header] + [repr(float(v)) for v in model.weights]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_lr(path: str | Path) -> LrModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataError("empty model file")
    space = FeatureSpace.from_description(json.loads(lines[0]))
    weights = np.array([float(v) for v in lines[1:] if v.strip()], dtype=np.float64)
    if weights.shape[0] != space.dimension:
        raise DataError(
            f"weight count {weights.shape[0]} != declared dimension {space.dimension}"
        )
    return LrModel(weights=weights, space=space)
