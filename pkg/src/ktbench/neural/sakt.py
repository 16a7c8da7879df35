"""Attention-based next-response model.

Past interactions (skill x correctness embeddings plus positions) form the
key/value stream; the upcoming step's skill embedding is the query. A learned
start token occupies slot 0 so every query, including the first, has at least
one slot to attend to. The causal mask lets the query at step i see only the
start token and interactions before i. One attention block, a position-wise
feed-forward with residuals, and a one-neuron sigmoid head.

float64 with hand-written backprop, same contracts as the recurrent model.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from ..baselines import Prediction
from ..dataset import Dataset, StudentSequence
from ..errors import DataError, ModelError
from .encoding import SeqBatch, SkillIndexer, chunk_sequence, chunks_from_dataset, pad_batch
from .optim import Adam, clip_global_norm

from pathlib import Path

_MASK_OFF = -1e30


@dataclass(frozen=True)
class SaktConfig:
    embed_dim: int = 64
    num_heads: int = 4
    window: int = 200
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    clip_norm: float = 5.0
    time_budget_s: float | None = None

    def __post_init__(self) -> None:
        if self.embed_dim % self.num_heads != 0:
            raise ModelError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}"
            )
        if self.window < 2:
            raise ModelError("window must be >= 2")


@dataclass
class SaktModel:
    params: dict[str, np.ndarray]
    skills: tuple[int, ...]
    config: SaktConfig

    @property
    def indexer(self) -> SkillIndexer:
        return SkillIndexer(skills=self.skills)

    def n_parameters(self) -> int:
        return sum(int(v.size) for v in self.params.values())


def init_sakt_params(n_skills: int, config: SaktConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    d = config.embed_dim

    def glorot(shape):
        a = np.sqrt(6.0 / (shape[0] + shape[1]))
        return rng.uniform(-a, a, size=shape)

    return {
        "E_int": 0.05 * rng.standard_normal((2 * n_skills + 1, d)),  # last row: start token
        "E_ex": 0.05 * rng.standard_normal((n_skills, d)),
        "P": 0.05 * rng.standard_normal((config.window, d)),
        "Wq": glorot((d, d)),
        "Wk": glorot((d, d)),
        "Wv": glorot((d, d)),
        "Wo": glorot((d, d)),
        "W1": glorot((d, d)),
        "b1": np.zeros(d),
        "W2": glorot((d, d)),
        "b2": np.zeros(d),
        "w_head": np.zeros(d),
        "b_head": np.zeros(1),
    }


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def _split_heads(x: np.ndarray, nh: int) -> np.ndarray:
    B, T, d = x.shape
    return x.reshape(B, T, nh, d // nh).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    B, nh, T, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, nh * dh)


def sakt_forward(params: dict[str, np.ndarray], batch: SeqBatch, num_heads: int):
    B, T = batch.xidx.shape
    d = params["E_ex"].shape[1]
    dh = d // num_heads
    n_points = batch.n_points
    if n_points == 0:
        raise ModelError("batch has no unmasked steps")
    if T > params["P"].shape[0]:
        raise ModelError(f"batch length {T} exceeds window {params['P'].shape[0]}")
    start_idx = params["E_int"].shape[0] - 1

    kvidx = np.empty((B, T), dtype=np.int64)
    kvidx[:, 0] = start_idx
    kvidx[:, 1:] = batch.xidx[:, : T - 1]
    q_in = params["E_ex"][batch.skill]  # (B,T,d)
    kv_in = params["E_int"][kvidx] + params["P"][:T][None, :, :]

    Q = _split_heads(q_in @ params["Wq"], num_heads)
    K = _split_heads(kv_in @ params["Wk"], num_heads)
    V = _split_heads(kv_in @ params["Wv"], num_heads)

    scores = Q @ K.transpose(0, 1, 3, 2) / np.sqrt(dh)  # (B,nh,T,T)
    causal = np.triu(np.full((T, T), _MASK_OFF), k=1)  # query t sees slots j <= t
    scores = scores + causal[None, None, :, :]
    scores -= scores.max(axis=-1, keepdims=True)
    exps = np.exp(scores)
    attn = exps / exps.sum(axis=-1, keepdims=True)

    ctx = _merge_heads(attn @ V)  # (B,T,d)
    attn_out = ctx @ params["Wo"]
    u = attn_out + q_in
    ffn_h = np.maximum(u @ params["W1"] + params["b1"], 0.0)
    f_out = ffn_h @ params["W2"] + params["b2"] + u
    logits = f_out @ params["w_head"] + params["b_head"][0]

    loss = float(np.sum((np.logaddexp(0.0, logits) - batch.y * logits) * batch.mask) / n_points)
    p = _sigmoid(logits)
    cache = {
        "kvidx": kvidx, "q_in": q_in, "kv_in": kv_in,
        "Q": Q, "K": K, "V": V, "attn": attn, "ctx": ctx,
        "u": u, "ffn_h": ffn_h, "f_out": f_out, "p": p,
    }
    return loss, p, cache


def sakt_backward(params: dict[str, np.ndarray], batch: SeqBatch, cache, num_heads: int):
    B, T = batch.xidx.shape
    d = params["E_ex"].shape[1]
    dh = d // num_heads
    n_points = batch.n_points

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    dz = (cache["p"] - batch.y) * batch.mask / n_points  # (B,T)

    grads["w_head"] += np.einsum("bt,btd->d", dz, cache["f_out"])
    grads["b_head"][0] += dz.sum()
    df_out = dz[:, :, None] * params["w_head"][None, None, :]

    grads["W2"] += np.einsum("bth,btd->hd", cache["ffn_h"], df_out)
    grads["b2"] += df_out.sum(axis=(0, 1))
    dffn_h = df_out @ params["W2"].T
    dpre1 = dffn_h * (cache["ffn_h"] > 0.0)
    grads["W1"] += np.einsum("btd,bth->dh", cache["u"], dpre1)
    grads["b1"] += dpre1.sum(axis=(0, 1))
    du = df_out + dpre1 @ params["W1"].T

    dattn_out = du
    dq_in = du.copy()

    grads["Wo"] += np.einsum("btd,bte->de", cache["ctx"], dattn_out)
    dctx = _split_heads(dattn_out @ params["Wo"].T, num_heads)

    dattn = dctx @ cache["V"].transpose(0, 1, 3, 2)  # (B,nh,T,T)
    dV = cache["attn"].transpose(0, 1, 3, 2) @ dctx
    attn = cache["attn"]
    dscores = attn * (dattn - np.sum(dattn * attn, axis=-1, keepdims=True))
    dQ = dscores @ cache["K"] / np.sqrt(dh)
    dK = dscores.transpose(0, 1, 3, 2) @ cache["Q"] / np.sqrt(dh)

    dQm = _merge_heads(dQ)
    dKm = _merge_heads(dK)
    dVm = _merge_heads(dV)

    grads["Wq"] += np.einsum("btd,bte->de", cache["q_in"], dQm)
    grads["Wk"] += np.einsum("btd,bte->de", cache["kv_in"], dKm)
    grads["Wv"] += np.einsum("btd,bte->de", cache["kv_in"], dVm)
    dq_in += dQm @ params["Wq"].T
    dkv_in = dKm @ params["Wk"].T + dVm @ params["Wv"].T

    grads["P"][:T] += dkv_in.sum(axis=0)
    np.add.at(grads["E_int"], cache["kvidx"], dkv_in)
    np.add.at(grads["E_ex"], batch.skill.astype(np.int64), dq_in)
    return grads


def sakt_loss_and_grads(params: dict[str, np.ndarray], batch: SeqBatch, num_heads: int):
    loss, _, cache = sakt_forward(params, batch, num_heads)
    return loss, sakt_backward(params, batch, cache, num_heads)


def sakt_grad_check(model: SaktModel, batch: SeqBatch, h: float = 1e-4) -> float:
    """Analytic vs central-difference gradients on a tiny model; max rel error."""
    from .gradcheck import grad_check

    return grad_check(
        lambda p: sakt_loss_and_grads(p, batch, model.config.num_heads), model.params, h=h
    )


def fit_sakt(train: Dataset, config: SaktConfig = SaktConfig()) -> SaktModel:
    if not train.skill_vocab:
        raise DataError("empty skill vocabulary")
    indexer = SkillIndexer.from_vocab(train.skill_vocab)
    chunks = chunks_from_dataset(train, indexer, config.window)
    if not chunks:
        raise DataError("no training sequences")
    rng = np.random.default_rng(config.seed)
    params = init_sakt_params(indexer.n_skills, config, rng)
    opt = Adam(params, lr=config.learning_rate)
    deadline = None
    if config.time_budget_s is not None:
        deadline = time.monotonic() + config.time_budget_s

    for _ in range(config.epochs):
        order = rng.permutation(len(chunks))
        for start in range(0, len(order), config.batch_size):
            batch = pad_batch([chunks[j] for j in order[start : start + config.batch_size]])
            loss, grads = sakt_loss_and_grads(params, batch, config.num_heads)
            norm = clip_global_norm(grads, config.clip_norm)
            if not np.isfinite(loss):
                raise ModelError(f"non-finite loss (last gradient norm {norm:.3g})")
            opt.step(grads)
        if deadline is not None and time.monotonic() > deadline:
            break
    return SaktModel(params=params, skills=indexer.skills, config=config)


def sakt_predict_sequence(model: SaktModel, seq: StudentSequence) -> list[Prediction]:
    """Per-step probabilities; the attention window restarts at each chunk."""
    preds: list[Prediction] = []
    for chunk in chunk_sequence(seq, model.indexer, model.config.window):
        batch = pad_batch([chunk])
        _, p, _ = sakt_forward(model.params, batch, model.config.num_heads)
        preds.extend(Prediction.from_probability(float(v)) for v in p[0, : len(chunk[0])])
    return preds


def save_sakt(model: SaktModel, path: str | Path) -> None:
    meta = json.dumps(
        {
            "skills": list(model.skills),
            "config": {
                "embed_dim": model.config.embed_dim,
                "num_heads": model.config.num_heads,
                "window": model.config.window,
                "epochs": model.config.epochs,
                "batch_size": model.config.batch_size,
                "learning_rate": model.config.learning_rate,
                "seed": model.config.seed,
                "clip_norm": model.config.clip_norm,
            },
        }
    )
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(meta.encode("utf-8"), dtype=np.uint8), **model.params)


def load_sakt(path: str | Path) -> SaktModel:
    with np.load(path) as npz:
        meta = json.loads(bytes(npz["__meta__"]).decode("utf-8"))
        params = {k: npz[k].copy() for k in npz.files if k != "__meta__"}
    return SaktModel(
        params=params,
        skills=tuple(meta["skills"]),
        config=SaktConfig(**meta["config"]),
    )
