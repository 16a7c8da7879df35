"""Prompt rendering for the language-model pathway.

Two fixed templates serialize the history counters into text, with every
number digit-split (spaces between consecutive digits) because that improves
language-model handling of numeric fields. The templates and the zero-shot
system instruction are pinned byte-for-byte by golden-file tests; treat any
edit here as a breaking change.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import DataError
from ..features import HistoryFeatures

RESPONSE_STUB = "Student response: "

SYSTEM_MESSAGE = (
    "You are an instructor and want to predict whether a student will get a question "
    "CORRECT or WRONG. The only information you have is the student's previous answers "
    "to a series of related questions. You know how many questions they got CORRECT and "
    "how many they got WRONG. Based on this information, you should make a prediction "
    "by outputting a single word: CORRECT if you think the student will answer the next "
    "question correctly, and WRONG if you think the student will answer the next question "
    "wrong. Output no other word at all, this is very important. Try to estimate the "
    "knowledge of the student before making your prediction."
)


def space_digits(n: int) -> str:
    """Insert a space between consecutive decimal digits: 342 -> "3 4 2"."""
    if n < 0:
        raise DataError(f"cannot digit-split a negative number: {n}")
    return " ".join(str(int(n)))


def _fmt(n: int, split: bool) -> str:
    return space_digits(n) if split else str(int(n))


def _check_ids(f: HistoryFeatures) -> None:
    if not isinstance(f.question_id, int) or f.question_id < 0:
        raise DataError(
            f"question id {f.question_id!r} is not a dense non-negative integer; "
            "remap ids at ingestion"
        )
    if not isinstance(f.skill_id, int) or f.skill_id < 0:
        raise DataError(
            f"skill id {f.skill_id!r} is not a dense non-negative integer; "
            "remap ids at ingestion"
        )


def render_minimal_prompt(f: HistoryFeatures, split_ids: bool = True) -> str:
    """Three data lines (totals and question id), then the response stub."""
    _check_ids(f)
    return (
        f"Total correct until now: {space_digits(f.total_correct)}\n"
        f"Total wrong until now: {space_digits(f.total_wrong)}\n"
        f"Current question ID: {_fmt(f.question_id, split_ids)}\n"
        f"{RESPONSE_STUB}"
    )


def render_extended_prompt(f: HistoryFeatures, split_ids: bool = True) -> str:
    """Six data lines (skill block first, then the minimal lines), then the stub."""
    _check_ids(f)
    skill = _fmt(f.skill_id, split_ids)
    return (
        f"Current skill ID: {skill}\n"
        f"Total correct for prior questions with skill ID {skill}: {space_digits(f.skill_correct)}\n"
        f"Total wrong for prior questions with skill ID {skill}: {space_digits(f.skill_wrong)}\n"
        f"Total correct until now: {space_digits(f.total_correct)}\n"
        f"Total wrong until now: {space_digits(f.total_wrong)}\n"
        f"Current question ID: {_fmt(f.question_id, split_ids)}\n"
        f"{RESPONSE_STUB}"
    )


def render_prompt(f: HistoryFeatures, template: str, split_ids: bool = True) -> str:
    if template == "minimal":
        return render_minimal_prompt(f, split_ids)
    if template == "extended":
        return render_extended_prompt(f, split_ids)
    raise DataError(f"unknown template {template!r}; expected 'minimal' or 'extended'")


@dataclass(frozen=True)
class ChatRequest:
    system_message: str
    user_message: str

    def __post_init__(self) -> None:
        if self.system_message != SYSTEM_MESSAGE:
            raise DataError("system message deviates from the canonical zero-shot instruction")


def build_zero_shot_request(f: HistoryFeatures, split_ids: bool = True) -> ChatRequest:
    """Canonical instruction plus the minimal prompt as the user message."""
    return ChatRequest(
        system_message=SYSTEM_MESSAGE,
        user_message=render_minimal_prompt(f, split_ids),
    )
