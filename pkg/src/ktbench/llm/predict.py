"""Issue prompts to a backend and turn the responses into predictions.

When the backend returns token logprobs the probability comes from the
word-prefix normalization; otherwise the completion text is parsed and mapped
to a surrogate confidence (0.75 for CORRECT, 0.25 for WRONG) so rank metrics
stay defined. Per-point failures (garbage text, no usable tokens) raise
PredictionFailure; the batch runner counts them and keeps going.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

from ..baselines import Prediction
from ..errors import ConfigError, KtbenchError
from ..features import HistoryFeatures
from .backends import CAP_CHAT, CAP_COMPLETION, LlmBackend, TransportError
from .decoding import NoSignal, ParseFailure, normalize_logprobs, parse_completion
from .prompts import build_zero_shot_request, render_prompt

MODE_FINETUNED = "finetuned-completion"
MODE_ZERO_SHOT = "zero-shot-chat"

SURROGATE_P_CORRECT = 0.75
SURROGATE_P_WRONG = 0.25


class PredictionFailure(KtbenchError):
    """One prediction point failed; carries the offending raw payload."""


def _with_retries(call, max_retries: int, backoff_s: float):
    delay = backoff_s
    last: Exception | None = None
    for attempt in range(max_retries):
        try:
            return call()
        except TransportError as exc:
            last = exc
            if attempt + 1 < max_retries and delay > 0:
                time.sleep(delay)
                delay *= 2.0
    raise PredictionFailure(f"transport failed after {max_retries} attempts: {last}")


def predict_llm(
    backend: LlmBackend,
    mode: str,
    f: HistoryFeatures,
    template: str = "minimal",
    split_ids: bool = True,
    max_retries: int = 3,
    backoff_s: float = 1.0,
) -> Prediction:
    if mode == MODE_FINETUNED:
        if CAP_COMPLETION not in backend.capabilities:
            raise ConfigError("backend does not support completion with logprobs")
        prompt = render_prompt(f, template, split_ids)
        result = _with_retries(
            lambda: backend.complete(prompt, max_tokens=1, logprobs=5), max_retries, backoff_s
        )
        if result.token_logprobs is not None:
            try:
                return Prediction.from_probability(normalize_logprobs(result.token_logprobs))
            except NoSignal as exc:
                raise PredictionFailure(str(exc)) from exc
        label = parse_completion(result.text)
    elif mode == MODE_ZERO_SHOT:
        if CAP_CHAT not in backend.capabilities:
            raise ConfigError("backend does not support chat")
        request = build_zero_shot_request(f, split_ids)
        result = _with_retries(lambda: backend.chat(request), max_retries, backoff_s)
        label = parse_completion(result.text)
    else:
        raise ConfigError(f"unknown llm mode {mode!r}")

    if isinstance(label, ParseFailure):
        raise PredictionFailure(f"unparseable completion: {label.raw!r}")
    return Prediction.from_probability(
        SURROGATE_P_CORRECT if label == 1 else SURROGATE_P_WRONG
    )


def predict_llm_batch(
    backend: LlmBackend,
    mode: str,
    features: Sequence[HistoryFeatures],
    template: str = "minimal",
    split_ids: bool = True,
    max_retries: int = 3,
    backoff_s: float = 1.0,
    max_in_flight: int = 4,
) -> tuple[list[Prediction | None], int]:
    """Predict each point, None-ing out failures; output order matches input."""

    def one(f: HistoryFeatures) -> Prediction | None:
        try:
            return predict_llm(
                backend, mode, f,
                template=template, split_ids=split_ids,
                max_retries=max_retries, backoff_s=backoff_s,
            )
        except PredictionFailure:
            return None

    if max_in_flight <= 1 or len(features) <= 1:
        results = [one(f) for f in features]
    else:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            results = list(pool.map(one, features))
    failures = sum(1 for r in results if r is None)
    return results, failures
