"""Fine-tune corpus export: one prompt/completion record per prediction point."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterator

from ..dataset import Dataset
from ..errors import DataError
from ..features import iter_history_features
from .prompts import RESPONSE_STUB, render_prompt

COMPLETIONS = ("CORRECT", "WRONG")


@dataclass(frozen=True)
class PromptExample:
    prompt: str
    completion: str

    def __post_init__(self) -> None:
        if not self.prompt.endswith(RESPONSE_STUB):
            raise DataError("prompt does not end with the response stub")
        if self.completion not in COMPLETIONS:
            raise DataError(f"completion must be CORRECT or WRONG, got {self.completion!r}")


def iter_corpus(ds: Dataset, template: str, split_ids: bool = True) -> Iterator[PromptExample]:
    """Examples in sequence order, positions ascending within each student."""
    for seq in ds.sequences:
        for f, r in zip(iter_history_features(seq), seq.records):
            yield PromptExample(
                prompt=render_prompt(f, template, split_ids),
                completion="CORRECT" if r.correct == 1 else "WRONG",
            )


def export_finetune_corpus(
    train: Dataset,
    template: str,
    sink: str | Path | IO[str],
    split_ids: bool = True,
) -> int:
    """Write line-delimited {"prompt", "completion"} records; returns the count.

    When the sink is a path, the id-remapping tables are persisted next to it
    as <path>.ids.json so exported prompts stay interpretable.
    """
    count = 0

    def write_all(fh: IO[str]) -> None:
        nonlocal count
        for example in iter_corpus(train, template, split_ids):
            fh.write(
                json.dumps(
                    {"prompt": example.prompt, "completion": example.completion},
                    ensure_ascii=False,
                )
                + "\n"
            )
            count += 1

    if isinstance(sink, (str, Path)):
        path = Path(sink)
        with open(path, "w", encoding="utf-8") as fh:
            write_all(fh)
        mapping = {
            "items": {str(k): v for k, v in sorted(train.item_labels.items())},
            "skills": {str(k): v for k, v in sorted(train.skill_labels.items())},
        }
        Path(str(path) + ".ids.json").write_text(
            json.dumps(mapping, indent=2, sort_keys=True), encoding="utf-8"
        )
    else:
        write_all(sink)
    return count


def read_corpus(path: str | Path) -> list[PromptExample]:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                examples.append(PromptExample(prompt=d["prompt"], completion=d["completion"]))
            except (json.JSONDecodeError, KeyError) as exc:
                raise DataError(f"bad corpus record: {exc}", row=line_no) from exc
    return examples
