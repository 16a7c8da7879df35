"""Interaction-log ingestion, filtering, train/test splits, synthetic data.

Ingestion remaps item and skill labels to dense non-negative integers (stored
alongside the data) so that every downstream consumer, including prompt
rendering with digit splitting, sees plain small ints. Datasets are immutable
after construction and safe to share across concurrent model trainers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import DataError


@dataclass(frozen=True, slots=True)
class InteractionRecord:
    """One graded response: who answered what, on which skill, and how it went."""

    user_id: str
    item_id: int
    skill_id: int
    correct: int  # 1 = CORRECT, 0 = WRONG
    position: int  # 0-based ordinal within the user's sequence


@dataclass(frozen=True, slots=True)
class StudentSequence:
    user_id: str
    records: tuple[InteractionRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def labels(self) -> list[int]:
        return [r.correct for r in self.records]


@dataclass(frozen=True)
class Dataset:
    name: str
    sequences: tuple[StudentSequence, ...]
    item_vocab: frozenset[int]
    skill_vocab: frozenset[int]
    # dense id -> original source label (identity-ish for synthetic data)
    item_labels: Mapping[int, str]
    skill_labels: Mapping[int, str]

    @property
    def n_records(self) -> int:
        return sum(len(s) for s in self.sequences)

    def user_ids(self) -> list[str]:
        return [s.user_id for s in self.sequences]

    def iter_records(self) -> Iterator[InteractionRecord]:
        for seq in self.sequences:
            yield from seq.records


@dataclass(frozen=True, slots=True)
class FilterReport:
    students_before: int
    students_removed: int

    @property
    def removed_fraction(self) -> float:
        if self.students_before == 0:
            raise DataError("filter report over an empty dataset")
        return self.students_removed / self.students_before

    def log_lines(self) -> list[str]:
        return [
            f"students_before={self.students_before}",
            f"students_removed={self.students_removed}",
            f"removed_fraction={self.removed_fraction:.6f}",
        ]


@dataclass(frozen=True)
class ColumnMap:
    """How to read a delimiter-separated interaction log.

    `timestamp` is optional and only used to order records within a user when
    present; otherwise file order is kept. Multi-skill cells (several skills
    assigned to one item, joined by `skill_separator`) collapse to the
    lowest-numbered skill.
    """

    user: str = "user_id"
    item: str = "item_id"
    skill: str = "skill_id"
    correct: str = "correct"
    timestamp: str | None = None
    delimiter: str = ","
    skill_separator: str = "_"


def _parse_correct(raw: str, row: int) -> int:
    try:
        value = float(raw.strip())
    except ValueError:
        raise DataError(f"correctness value {raw!r} is not numeric", row=row) from None
    if value == 0.0:
        return 0
    if value == 1.0:
        return 1
    raise DataError(f"correctness value {raw!r} is not 0 or 1", row=row)


def _pick_skill(cell: str, separator: str, row: int) -> str:
    parts = [p.strip() for p in cell.split(separator) if p.strip()]
    if not parts:
        raise DataError("empty skill id", row=row)
    if len(parts) == 1:
        return parts[0]
    try:
        return min(parts, key=float)
    except ValueError:
        return min(parts)


class _DenseIds:
    """First-appearance-order remapping of source labels to dense ints."""

    def __init__(self) -> None:
        self._by_label: dict[str, int] = {}

    def get(self, label: str) -> int:
        if label not in self._by_label:
            self._by_label[label] = len(self._by_label)
        return self._by_label[label]

    def labels(self) -> dict[int, str]:
        return {v: k for k, v in self._by_label.items()}


def load_interactions(
    path: str | Path,
    columns: ColumnMap = ColumnMap(),
    name: str | None = None,
) -> Dataset:
    """Read a delimiter-separated log into per-user sequences.

    Records are grouped per user preserving file order (or timestamp order
    within a user when a timestamp column is mapped); positions are assigned
    consecutively from 0. Malformed rows raise DataError with the 1-based
    source row number.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    items = _DenseIds()
    skills = _DenseIds()
    # user -> list of (sort_key, item, skill, correct)
    per_user: dict[str, list[tuple[float, int, int, int]]] = {}

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=columns.delimiter)
        header = reader.fieldnames or []
        required = [columns.user, columns.item, columns.skill, columns.correct]
        if columns.timestamp is not None:
            required.append(columns.timestamp)
        for col in required:
            if col not in header:
                raise DataError(f"missing column {col!r} (header: {header})", row=1)
        n_rows = 0
        for row_no, row in enumerate(reader, start=2):
            n_rows += 1
            user = (row[columns.user] or "").strip()
            if not user:
                raise DataError("empty user id", row=row_no)
            item_label = (row[columns.item] or "").strip()
            if not item_label:
                raise DataError("empty item id", row=row_no)
            item = items.get(item_label)
            skill = skills.get(_pick_skill(row[columns.skill] or "", columns.skill_separator, row_no))
            correct = _parse_correct(row[columns.correct] or "", row_no)
            if columns.timestamp is not None:
                raw_ts = (row[columns.timestamp] or "").strip()
                try:
                    sort_key = float(raw_ts)
                except ValueError:
                    raise DataError(f"timestamp {raw_ts!r} is not numeric", row=row_no) from None
            else:
                sort_key = float(row_no)
            per_user.setdefault(user, []).append((sort_key, item, skill, correct))
    if n_rows == 0:
        raise DataError("file has a header but no data rows", row=2)

    sequences = []
    for user, rows in per_user.items():
        rows.sort(key=lambda r: r[0])  # stable; file order when keys tie
        records = tuple(
            InteractionRecord(user_id=user, item_id=it, skill_id=sk, correct=c, position=i)
            for i, (_, it, sk, c) in enumerate(rows)
        )
        sequences.append(StudentSequence(user_id=user, records=records))

    return Dataset(
        name=name or path.stem,
        sequences=tuple(sequences),
        item_vocab=frozenset(items.labels()),
        skill_vocab=frozenset(skills.labels()),
        item_labels=items.labels(),
        skill_labels=skills.labels(),
    )


def build_dataset(name: str, rows: Iterable[tuple[str, int, int, int]]) -> Dataset:
    """Assemble a Dataset from in-memory (user, item, skill, correct) rows.

    Rows must already use dense non-negative integer ids; row order defines
    within-user order.
    """
    per_user: dict[str, list[tuple[int, int, int]]] = {}
    items: set[int] = set()
    skills: set[int] = set()
    for user, item, skill, correct in rows:
        if correct not in (0, 1):
            raise DataError(f"correctness value {correct!r} is not 0 or 1")
        per_user.setdefault(user, []).append((item, skill, correct))
        items.add(item)
        skills.add(skill)
    sequences = tuple(
        StudentSequence(
            user_id=user,
            records=tuple(
                InteractionRecord(user_id=user, item_id=it, skill_id=sk, correct=c, position=i)
                for i, (it, sk, c) in enumerate(rows_)
            ),
        )
        for user, rows_ in per_user.items()
    )
    return Dataset(
        name=name,
        sequences=sequences,
        item_vocab=frozenset(items),
        skill_vocab=frozenset(skills),
        item_labels={i: str(i) for i in sorted(items)},
        skill_labels={s: str(s) for s in sorted(skills)},
    )


def write_interactions(d: Dataset, path: str | Path) -> None:
    """Write the dataset back out with its dense ids, one record per row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "item_id", "skill_id", "correct"])
        for r in d.iter_records():
            writer.writerow([r.user_id, r.item_id, r.skill_id, r.correct])


def filter_degenerate_students(d: Dataset) -> tuple[Dataset, FilterReport]:
    """Drop students whose responses are all correct or all wrong.

    Idempotent. Raises DataError when nothing survives, which signals an
    unusable dataset rather than a mere empty result.
    """
    if not d.sequences:
        raise DataError("cannot filter an empty dataset")
    kept = []
    for seq in d.sequences:
        labels = seq.labels()
        if 0 in labels and 1 in labels:
            kept.append(seq)
    report = FilterReport(
        students_before=len(d.sequences),
        students_removed=len(d.sequences) - len(kept),
    )
    if not kept:
        raise DataError("all students are degenerate (single-valued responses)")
    filtered = Dataset(
        name=d.name,
        sequences=tuple(kept),
        item_vocab=d.item_vocab,
        skill_vocab=d.skill_vocab,
        item_labels=d.item_labels,
        skill_labels=d.skill_labels,
    )
    return filtered, report


@dataclass(frozen=True)
class SplitSpec:
    """User-level train/test split: external id lists or a seeded draw."""

    mode: str  # "external" | "seeded"
    train_user_ids: frozenset[str] | None = None
    test_user_ids: frozenset[str] | None = None
    train_fraction: float | None = None
    seed: int | None = None

    @staticmethod
    def external(train_user_ids: Iterable[str], test_user_ids: Iterable[str]) -> "SplitSpec":
        train = frozenset(train_user_ids)
        test = frozenset(test_user_ids)
        if not train or not test:
            raise DataError("external split needs non-empty train and test user lists")
        overlap = train & test
        if overlap:
            raise DataError(f"users in both split halves: {sorted(overlap)[:5]}")
        return SplitSpec(mode="external", train_user_ids=train, test_user_ids=test)

    @staticmethod
    def seeded(train_fraction: float, seed: int) -> "SplitSpec":
        if not 0.0 < train_fraction < 1.0:
            raise DataError(f"train_fraction must be in (0, 1), got {train_fraction}")
        return SplitSpec(mode="seeded", train_fraction=train_fraction, seed=seed)


def read_split_file(path: str | Path) -> list[str]:
    """One user id per line; blank lines ignored."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such split file: {path}")
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def _subset(d: Dataset, users: frozenset[str], tag: str) -> Dataset:
    seqs = tuple(s for s in d.sequences if s.user_id in users)
    return Dataset(
        name=f"{d.name}[{tag}]",
        sequences=seqs,
        item_vocab=d.item_vocab,
        skill_vocab=d.skill_vocab,
        item_labels=d.item_labels,
        skill_labels=d.skill_labels,
    )


def apply_split(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Partition users into train and test datasets.

    External mode keeps exactly the listed users (every listed id must exist);
    seeded mode shuffles the sorted user ids so the draw is independent of the
    sequence order in `d`.
    """
    present = set(d.user_ids())
    if spec.mode == "external":
        assert spec.train_user_ids is not None and spec.test_user_ids is not None
        unknown = (spec.train_user_ids | spec.test_user_ids) - present
        if unknown:
            raise DataError(f"split lists unknown user ids: {sorted(unknown)[:5]}")
        train_users, test_users = spec.train_user_ids, spec.test_user_ids
    elif spec.mode == "seeded":
        assert spec.train_fraction is not None and spec.seed is not None
        users = sorted(present)
        rng = np.random.default_rng(spec.seed)
        perm = rng.permutation(len(users))
        n_train = int(round(spec.train_fraction * len(users)))
        if n_train < 1 or n_train > len(users) - 1:
            raise DataError(
                f"seeded split of {len(users)} users at {spec.train_fraction} leaves an empty half"
            )
        train_users = frozenset(users[i] for i in perm[:n_train])
        test_users = frozenset(users[i] for i in perm[n_train:])
    else:
        raise DataError(f"unknown split mode {spec.mode!r}")

    train = _subset(d, train_users, "train")
    test = _subset(d, test_users, "test")
    if not train.sequences or not test.sequences:
        raise DataError("split produced an empty train or test half")
    return train, test


def _as_probs(params) -> tuple[float, float, float, float]:
    """Accept a BktParams-like object or a 4-sequence of probabilities."""
    if hasattr(params, "p_init"):
        vals = (params.p_init, params.p_learn, params.p_guess, params.p_slip)
    else:
        vals = tuple(float(v) for v in params)
        if len(vals) != 4:
            raise DataError(f"expected 4 probabilities, got {len(vals)}")
    for v in vals:
        if not 0.0 <= v <= 1.0 or not np.isfinite(v):
            raise DataError(f"probability out of range: {vals}")
    return vals  # type: ignore[return-value]


def generate_synthetic(
    params: Mapping[int, object],
    n_students: int,
    seq_len: int,
    skills_per_seq: int = 1,
    seed: int = 0,
) -> Dataset:
    """Sample student sequences from per-skill guess/slip knowledge dynamics.

    Each student starts knowing a skill with its prior probability; a response
    is correct with 1-slip when known and with the guess rate when not; after
    responding, an unknown skill becomes known with the learn rate. One item id
    per skill. Bit-identical output for a given seed.
    """
    if n_students < 1 or seq_len < 1:
        raise DataError("n_students and seq_len must be >= 1")
    skills = sorted(params)
    if not skills:
        raise DataError("no skills given")
    probs = {k: _as_probs(params[k]) for k in skills}
    k_sub = min(max(1, skills_per_seq), len(skills))
    rng = np.random.default_rng(seed)
    rows: list[tuple[str, int, int, int]] = []
    width = len(str(max(1, n_students - 1)))
    for u in range(n_students):
        user = f"synth-{u:0{width}d}"
        own = sorted(rng.choice(skills, size=k_sub, replace=False).tolist())
        known = {k: bool(rng.random() < probs[k][0]) for k in own}
        for _ in range(seq_len):
            k = own[int(rng.integers(len(own)))]
            p_init, p_learn, p_guess, p_slip = probs[k]
            if known[k]:
                correct = int(rng.random() >= p_slip)
            else:
                correct = int(rng.random() < p_guess)
            rows.append((user, k, k, correct))
            if not known[k] and rng.random() < p_learn:
                known[k] = True
    ds = build_dataset("synthetic", rows)
    # vocab covers every configured skill, sampled or not
    return Dataset(
        name=ds.name,
        sequences=ds.sequences,
        item_vocab=frozenset(skills),
        skill_vocab=frozenset(skills),
        item_labels={k: str(k) for k in skills},
        skill_labels={k: str(k) for k in skills},
    )
