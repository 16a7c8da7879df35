"""Per-skill two-state knowledge tracing HMM with EM fitting.

States are not-known / known with a left-to-right transition (no forgetting:
once known, a skill stays known). Emissions are guess/slip Bernoullis. Fitting
is Baum-Welch restricted to this structure, run per skill over each student's
observation chain for that skill, with seeded random restarts.

The M-step objective is separable and concave in each parameter, so clipping
the unconstrained update into the parameter box is the exact constrained
M-step; the training log-likelihood therefore never decreases.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .baselines import Prediction
from .dataset import Dataset, StudentSequence
from .errors import DataError, ModelError

EPS = 1e-6
MAX_GUESS = 0.5
MAX_SLIP = 0.5


@dataclass(frozen=True, slots=True)
class BktParams:
    """Prior, learn, guess, and slip probabilities for one skill."""

    p_init: float
    p_learn: float
    p_guess: float
    p_slip: float

    def __post_init__(self) -> None:
        for name in ("p_init", "p_learn", "p_guess", "p_slip"):
            v = getattr(self, name)
            if not np.isfinite(v) or not 0.0 <= v <= 1.0:
                raise ModelError(f"{name}={v!r} outside [0, 1]")
        if self.p_guess > MAX_GUESS or self.p_slip > MAX_SLIP:
            raise ModelError(
                f"guess/slip above {MAX_GUESS} are unidentifiable: "
                f"guess={self.p_guess}, slip={self.p_slip}"
            )

    @classmethod
    def clamped(cls, p_init: float, p_learn: float, p_guess: float, p_slip: float) -> "BktParams":
        """Clip into [EPS, 1-EPS] (and the guess/slip cap); used by fitting."""
        clip = lambda v, hi: float(min(max(v, EPS), hi))
        return cls(
            p_init=clip(p_init, 1.0 - EPS),
            p_learn=clip(p_learn, 1.0 - EPS),
            p_guess=clip(p_guess, MAX_GUESS),
            p_slip=clip(p_slip, MAX_SLIP),
        )


@dataclass(frozen=True, slots=True)
class BktState:
    """Current belief that the student knows the skill."""

    p_know: float


@dataclass(frozen=True)
class BktModel:
    per_skill: Mapping[int, BktParams]
    default_params: BktParams  # for skills unseen or too thin at fit time

    def params_for(self, skill_id: int) -> BktParams:
        return self.per_skill.get(skill_id, self.default_params)


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 100
    tol: float = 1e-6  # stop on log-likelihood delta below this
    restarts: int = 3
    seed: int = 0
    min_obs: int = 10  # skills thinner than this use the pooled default fit
    time_budget_s: float | None = None


def bkt_predict(state: BktState, params: BktParams) -> Prediction:
    """P(correct) = p_know*(1-slip) + (1-p_know)*guess."""
    p = state.p_know * (1.0 - params.p_slip) + (1.0 - state.p_know) * params.p_guess
    return Prediction.from_probability(p)


def bkt_update(state: BktState, params: BktParams, observed: int) -> BktState:
    """Condition the knowledge belief on one response, then apply learning."""
    know = state.p_know
    if observed == 1:
        num = know * (1.0 - params.p_slip)
        den = num + (1.0 - know) * params.p_guess
    elif observed == 0:
        num = know * params.p_slip
        den = num + (1.0 - know) * (1.0 - params.p_guess)
    else:
        raise ModelError(f"observation must be 0 or 1, got {observed!r}")
    if den <= 0.0:
        raise ModelError("zero-probability observation; parameters are degenerate")
    posterior = num / den
    return BktState(p_know=posterior + (1.0 - posterior) * params.p_learn)


def _pad_chains(chains: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(c) for c in chains], dtype=np.int64)
    obs = np.zeros((len(chains), int(lengths.max())), dtype=np.int8)
    for i, c in enumerate(chains):
        obs[i, : len(c)] = c
    return obs, lengths


def _e_step(obs: np.ndarray, lengths: np.ndarray, p: BktParams):
    """One scaled forward-backward sweep over all padded chains.

    Returns (loglik, sufficient statistics) or (-inf, None) when scaling
    degenerates.
    """
    n, T = obs.shape
    A = np.array([[1.0 - p.p_learn, p.p_learn], [0.0, 1.0]])
    y = obs.astype(np.float64)
    valid = np.arange(T)[None, :] < lengths[:, None]  # (n, T)

    # emission probabilities per state for each observation
    e = np.empty((n, T, 2))
    e[:, :, 0] = np.where(obs == 1, p.p_guess, 1.0 - p.p_guess)
    e[:, :, 1] = np.where(obs == 1, 1.0 - p.p_slip, p.p_slip)

    alpha = np.empty((n, T, 2))
    c = np.ones((n, T))
    a = np.array([1.0 - p.p_init, p.p_init])[None, :] * e[:, 0, :]
    c0 = a.sum(axis=1)
    if np.any(c0 <= 0.0):
        return -np.inf, None
    alpha[:, 0, :] = a / c0[:, None]
    c[:, 0] = c0
    for t in range(1, T):
        live = valid[:, t]
        a = (alpha[:, t - 1, :] @ A) * e[:, t, :]
        ct = a.sum(axis=1)
        if np.any(ct[live] <= 0.0):
            return -np.inf, None
        ct = np.where(live, ct, 1.0)
        alpha[:, t, :] = np.where(live[:, None], a / ct[:, None], alpha[:, t - 1, :])
        c[:, t] = ct

    loglik = float(np.sum(np.log(c[valid])))
    if not np.isfinite(loglik):
        return -np.inf, None

    beta = np.ones((n, T, 2))
    for t in range(T - 2, -1, -1):
        live = valid[:, t + 1]
        nxt = e[:, t + 1, :] * beta[:, t + 1, :]
        b = (nxt @ A.T) / c[:, t + 1, None]
        beta[:, t, :] = np.where(live[:, None], b, beta[:, t, :])

    gamma = alpha * beta  # (n, T, 2); rows sum to 1 on valid steps
    gamma = gamma * valid[:, :, None]

    # transitions from not-known, counted where a next step exists
    has_next = np.arange(T)[None, :] < (lengths[:, None] - 1)
    xi01 = np.zeros((n, T))
    if T > 1:
        xi01[:, : T - 1] = (
            alpha[:, : T - 1, 0]
            * p.p_learn
            * e[:, 1:, 1]
            * beta[:, 1:, 1]
            / c[:, 1:]
        )
    xi01 = xi01 * has_next

    stats = {
        "init_num": float(gamma[:, 0, 1].sum()),
        "n_chains": float(n),
        "learn_num": float(xi01.sum()),
        "learn_den": float((gamma[:, :, 0] * has_next).sum()),
        "guess_num": float((gamma[:, :, 0] * y).sum()),
        "guess_den": float(gamma[:, :, 0].sum()),
        "slip_num": float((gamma[:, :, 1] * (1.0 - y) * valid).sum()),
        "slip_den": float(gamma[:, :, 1].sum()),
    }
    return loglik, stats


def _m_step(stats: dict, prev: BktParams) -> BktParams:
    def ratio(num: float, den: float, fallback: float) -> float:
        return num / den if den > 0.0 else fallback

    return BktParams.clamped(
        p_init=ratio(stats["init_num"], stats["n_chains"], prev.p_init),
        p_learn=ratio(stats["learn_num"], stats["learn_den"], prev.p_learn),
        p_guess=ratio(stats["guess_num"], stats["guess_den"], prev.p_guess),
        p_slip=ratio(stats["slip_num"], stats["slip_den"], prev.p_slip),
    )


def baum_welch(
    chains: Sequence[np.ndarray],
    init: BktParams,
    max_iters: int = 100,
    tol: float = 1e-6,
    deadline: float | None = None,
) -> tuple[BktParams, list[float]]:
    """EM on the two-state left-to-right HMM; returns params and the LL trace.

    The trace is the training log-likelihood evaluated at the start of each
    iteration; EM theory (and the tests) demand it never decreases.
    """
    obs, lengths = _pad_chains(chains)
    params = init
    history: list[float] = []
    for _ in range(max_iters):
        ll, stats = _e_step(obs, lengths, params)
        if stats is None:
            raise ModelError("non-finite likelihood during EM")
        history.append(ll)
        params = _m_step(stats, params)
        if len(history) >= 2 and history[-1] - history[-2] < tol:
            break
        if deadline is not None and time.monotonic() > deadline:
            break
    return params, history


def _fit_chains(
    chains: Sequence[np.ndarray],
    rng: np.random.Generator,
    config: EmConfig,
    deadline: float | None,
) -> BktParams:
    best_ll = -np.inf
    best: BktParams | None = None
    for _ in range(config.restarts):
        start = BktParams.clamped(
            p_init=rng.uniform(0.2, 0.6),
            p_learn=rng.uniform(0.2, 0.6),
            p_guess=rng.uniform(0.05, 0.3),
            p_slip=rng.uniform(0.05, 0.3),
        )
        try:
            params, history = baum_welch(
                chains, start, max_iters=config.max_iters, tol=config.tol, deadline=deadline
            )
        except ModelError:
            continue  # one degenerate restart must not sink the others
        if history and history[-1] > best_ll:
            best_ll = history[-1]
            best = params
        if deadline is not None and time.monotonic() > deadline:
            break
    if best is None:
        raise ModelError("no EM restart produced a finite likelihood")
    return best


def _collect_chains(train: Dataset) -> dict[int, list[np.ndarray]]:
    out: dict[int, list[np.ndarray]] = {}
    for seq in train.sequences:
        per_skill: dict[int, list[int]] = {}
        for r in seq.records:
            per_skill.setdefault(r.skill_id, []).append(r.correct)
        for skill, labels in per_skill.items():
            out.setdefault(skill, []).append(np.asarray(labels, dtype=np.int8))
    return out


def fit_bkt(train: Dataset, config: EmConfig = EmConfig()) -> BktModel:
    """Fit per-skill parameters; thin skills inherit the pooled global fit."""
    chains_by_skill = _collect_chains(train)
    if not chains_by_skill:
        raise DataError("no training observations")
    deadline = None
    if config.time_budget_s is not None:
        deadline = time.monotonic() + config.time_budget_s

    pooled = [c for chains in chains_by_skill.values() for c in chains]
    default_params = _fit_chains(pooled, np.random.default_rng([config.seed, 0]), config, deadline)

    per_skill: dict[int, BktParams] = {}
    for skill in sorted(chains_by_skill):
        chains = chains_by_skill[skill]
        if sum(len(c) for c in chains) < config.min_obs:
            per_skill[skill] = default_params
            continue
        rng = np.random.default_rng([config.seed, skill + 1])
        try:
            per_skill[skill] = _fit_chains(chains, rng, config, deadline)
        except ModelError as exc:
            warnings.warn(f"skill {skill}: {exc}; using pooled parameters", stacklevel=2)
            per_skill[skill] = default_params
    return BktModel(per_skill=per_skill, default_params=default_params)


def bkt_predict_sequence(model: BktModel, seq: StudentSequence) -> list[Prediction]:
    """Predict each response before consuming it; one belief per skill."""
    states: dict[int, BktState] = {}
    preds: list[Prediction] = []
    for r in seq.records:
        params = model.params_for(r.skill_id)
        state = states.get(r.skill_id) or BktState(p_know=params.p_init)
        preds.append(bkt_predict(state, params))
        states[r.skill_id] = bkt_update(state, params, r.correct)
    return preds


def save_bkt(model: BktModel, path: str | Path) -> None:
    """Flat text map skill -> four parameters; round-trips exactly."""
    lines = ["# ktbench bkt model v1"]
    d = model.default_params
    lines.append(f"default {d.p_init!r} {d.p_learn!r} {d.p_guess!r} {d.p_slip!r}")
    for skill in sorted(model.per_skill):
        p = model.per_skill[skill]
        lines.append(f"{skill} {p.p_init!r} {p.p_learn!r} {p.p_guess!r} {p.p_slip!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_bkt(path: str | Path) -> BktModel:
    text = Path(path).read_text(encoding="utf-8")
    default: BktParams | None = None
    per_skill: dict[int, BktParams] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, *vals = line.split()
        if len(vals) != 4:
            raise DataError(f"malformed bkt model line: {line!r}")
        params = BktParams(*(float(v) for v in vals))
        if key == "default":
            default = params
        else:
            per_skill[int(key)] = params
    if default is None:
        raise DataError("bkt model file lacks a default parameter line")
    return BktModel(per_skill=per_skill, default_params=default)
