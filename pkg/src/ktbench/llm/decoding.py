"""Turning completion text or token logprobs into correctness predictions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from ..errors import KtbenchError
from ..metrics import CORRECT, WRONG


@dataclass(frozen=True)
class ParseFailure:
    """A completion that is neither CORRECT nor WRONG; counted, not fatal."""

    raw: str


class NoSignal(KtbenchError):
    """No returned token starts either target word."""


def parse_completion(raw: str) -> int | ParseFailure:
    """Trim, uppercase, and exact-match against the two target words."""
    word = raw.strip().upper()
    if word == "CORRECT":
        return CORRECT
    if word == "WRONG":
        return WRONG
    return ParseFailure(raw=raw)


@dataclass(frozen=True)
class TokenLogprobs:
    by_token: Mapping[str, float]

    def __post_init__(self) -> None:
        if not self.by_token:
            raise KtbenchError("empty token logprobs")
        for token, lp in self.by_token.items():
            if not math.isfinite(lp) or lp > 0.0:
                raise KtbenchError(f"logprob for {token!r} must be finite and <= 0, got {lp}")


def _is_prefix_of(token: str, word: str) -> bool:
    key = token.strip().upper()
    return bool(key) and word.startswith(key)


def normalize_logprobs(t: TokenLogprobs) -> float:
    """P(CORRECT) from word-prefix token masses, renormalized over both words.

    Raising any CORRECT-prefix token's logprob can only increase the result.
    """
    p_correct = 0.0
    p_wrong = 0.0
    for token, lp in t.by_token.items():
        if _is_prefix_of(token, "CORRECT"):
            p_correct += math.exp(lp)
        elif _is_prefix_of(token, "WRONG"):
            p_wrong += math.exp(lp)
    total = p_correct + p_wrong
    if total == 0.0:
        raise NoSignal("no token is a prefix of CORRECT or WRONG")
    return p_correct / total
