"""Recurrent next-response model: an LSTM over (skill, correctness) one-hots.

At every step the output layer emits one sigmoid per skill; the prediction for
step i reads the output for step i's skill from the hidden state built on
records strictly before i (step 0 reads the initial state, so a model with a
zero output layer predicts exactly 0.5 everywhere). Loss is mean binary
cross-entropy over the predicted steps.

All math is float64 with hand-written backpropagation so the analytic
gradients can be checked against central finite differences.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..baselines import Prediction
from ..dataset import Dataset, StudentSequence
from ..errors import DataError, ModelError
from .encoding import SeqBatch, SkillIndexer, chunk_sequence, chunks_from_dataset, pad_batch
from .optim import Adam, clip_global_norm


@dataclass(frozen=True)
class DktConfig:
    hidden_size: int = 100
    max_seq_len: int = 200
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    clip_norm: float = 5.0
    time_budget_s: float | None = None

    def __post_init__(self) -> None:
        if self.hidden_size < 1 or self.max_seq_len < 2:
            raise ModelError("hidden_size must be >= 1 and max_seq_len >= 2")


@dataclass
class DktModel:
    params: dict[str, np.ndarray]
    skills: tuple[int, ...]
    config: DktConfig

    @property
    def indexer(self) -> SkillIndexer:
        return SkillIndexer(skills=self.skills)

    def n_parameters(self) -> int:
        return sum(int(v.size) for v in self.params.values())


def init_dkt_params(n_skills: int, hidden: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    def glorot(shape):
        a = np.sqrt(6.0 / (shape[0] + shape[1]))
        return rng.uniform(-a, a, size=shape)

    b = np.zeros(4 * hidden)
    b[hidden : 2 * hidden] = 1.0  # forget-gate bias
    return {
        "Wx": glorot((2 * n_skills, 4 * hidden)),
        "Wh": glorot((hidden, 4 * hidden)),
        "b": b,
        "Wy": np.zeros((hidden, n_skills)),
        "by": np.zeros(n_skills),
    }


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def dkt_forward(params: dict[str, np.ndarray], batch: SeqBatch):
    """Masked mean BCE over the batch plus everything backward needs."""
    Wx, Wh, b, Wy, by = params["Wx"], params["Wh"], params["b"], params["Wy"], params["by"]
    B, T = batch.xidx.shape
    H = Wh.shape[0]
    n_points = batch.n_points
    if n_points == 0:
        raise ModelError("batch has no unmasked steps")

    h = np.zeros((B, H))
    c = np.zeros((B, H))
    cache = {"i": [], "f": [], "g": [], "o": [], "c": [], "tanh_c": [], "h_prev": [], "c_prev": []}
    logits = np.zeros((B, T))
    rows = np.arange(B)
    for t in range(T):
        logits[:, t] = (h @ Wy + by)[rows, batch.skill[:, t]]
        a = Wx[batch.xidx[:, t]] + h @ Wh + b
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H : 2 * H])
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = _sigmoid(a[:, 3 * H :])
        cache["h_prev"].append(h)
        cache["c_prev"].append(c)
        c = f * c + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        for key, val in zip(("i", "f", "g", "o", "c", "tanh_c"), (i, f, g, o, c, tanh_c)):
            cache[key].append(val)

    z = logits
    loss = float(np.sum((np.logaddexp(0.0, z) - batch.y * z) * batch.mask) / n_points)
    p = _sigmoid(z)
    cache["p"] = p
    return loss, p, cache


def dkt_backward(params: dict[str, np.ndarray], batch: SeqBatch, cache) -> dict[str, np.ndarray]:
    Wx, Wh, Wy = params["Wx"], params["Wh"], params["Wy"]
    B, T = batch.xidx.shape
    H = Wh.shape[0]
    n_points = batch.n_points
    rows = np.arange(B)

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    dz = (cache["p"] - batch.y) * batch.mask / n_points  # (B, T)

    # output-layer grads and the gradient each prediction sends into h_{t-1}
    dh_from_out = np.zeros((B, T, H))
    for t in range(T):
        dlogits = np.zeros((B, Wy.shape[1]))
        dlogits[rows, batch.skill[:, t]] = dz[:, t]
        grads["Wy"] += cache["h_prev"][t].T @ dlogits
        grads["by"] += dlogits.sum(axis=0)
        dh_from_out[:, t, :] = dlogits @ Wy.T  # w.r.t. h_{t-1}

    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        if t + 1 < T:
            dh = dh + dh_from_out[:, t + 1, :]
        i, f, g, o = cache["i"][t], cache["f"][t], cache["g"][t], cache["o"][t]
        tanh_c = cache["tanh_c"][t]
        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c**2)
        di = dc * g
        dg = dc * i
        df = dc * cache["c_prev"][t]
        dc = dc * f
        da = np.concatenate(
            [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g**2), do * o * (1.0 - o)],
            axis=1,
        )
        np.add.at(grads["Wx"], batch.xidx[:, t], da)
        grads["Wh"] += cache["h_prev"][t].T @ da
        grads["b"] += da.sum(axis=0)
        dh = da @ Wh.T
    return grads


def dkt_loss_and_grads(params: dict[str, np.ndarray], batch: SeqBatch):
    loss, _, cache = dkt_forward(params, batch)
    return loss, dkt_backward(params, batch, cache)


def dkt_grad_check(model: DktModel, batch: SeqBatch, h: float = 1e-4) -> float:
    """Analytic vs central-difference gradients on a tiny model; max rel error."""
    from .gradcheck import grad_check

    return grad_check(lambda p: dkt_loss_and_grads(p, batch), model.params, h=h)


def fit_dkt(train: Dataset, config: DktConfig = DktConfig()) -> DktModel:
    if not train.skill_vocab:
        raise DataError("empty skill vocabulary")
    indexer = SkillIndexer.from_vocab(train.skill_vocab)
    chunks = chunks_from_dataset(train, indexer, config.max_seq_len)
    if not chunks:
        raise DataError("no training sequences")
    rng = np.random.default_rng(config.seed)
    params = init_dkt_params(indexer.n_skills, config.hidden_size, rng)
    opt = Adam(params, lr=config.learning_rate)
    deadline = None
    if config.time_budget_s is not None:
        deadline = time.monotonic() + config.time_budget_s

    for _ in range(config.epochs):
        order = rng.permutation(len(chunks))
        for start in range(0, len(order), config.batch_size):
            batch = pad_batch([chunks[j] for j in order[start : start + config.batch_size]])
            loss, grads = dkt_loss_and_grads(params, batch)
            norm = clip_global_norm(grads, config.clip_norm)
            if not np.isfinite(loss):
                raise ModelError(f"non-finite loss (last gradient norm {norm:.3g})")
            opt.step(grads)
        if deadline is not None and time.monotonic() > deadline:
            break
    return DktModel(params=params, skills=indexer.skills, config=config)


def dkt_predict_sequence(model: DktModel, seq: StudentSequence) -> list[Prediction]:
    """Per-step probabilities; state resets at each max_seq_len chunk."""
    preds: list[Prediction] = []
    for chunk in chunk_sequence(seq, model.indexer, model.config.max_seq_len):
        batch = pad_batch([chunk])
        _, p, _ = dkt_forward(model.params, batch)
        preds.extend(Prediction.from_probability(float(v)) for v in p[0, : len(chunk[0])])
    return preds


def save_dkt(model: DktModel, path: str | Path) -> None:
    meta = json.dumps(
        {
            "skills": list(model.skills),
            "config": {
                "hidden_size": model.config.hidden_size,
                "max_seq_len": model.config.max_seq_len,
                "epochs": model.config.epochs,
                "batch_size": model.config.batch_size,
                "learning_rate": model.config.learning_rate,
                "seed": model.config.seed,
                "clip_norm": model.config.clip_norm,
            },
        }
    )
    # write through a handle so numpy cannot append its own extension
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(meta.encode("utf-8"), dtype=np.uint8), **model.params)


def load_dkt(path: str | Path) -> DktModel:
    with np.load(path) as npz:
        meta = json.loads(bytes(npz["__meta__"]).decode("utf-8"))
        params = {k: npz[k].copy() for k in npz.files if k != "__meta__"}
    return DktModel(
        params=params,
        skills=tuple(meta["skills"]),
        config=DktConfig(**meta["config"]),
    )
