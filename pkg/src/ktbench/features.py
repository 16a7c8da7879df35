"""History counters at a prediction point and their logistic-regression encoding.

At step i of a student's sequence the counters summarize everything strictly
before i: total correct/wrong answers so far, and correct/wrong answers on the
upcoming question's skill. These counters feed both the prompt templates and
the Best-LR feature vector.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np

from .dataset import StudentSequence
from .errors import DataError


@dataclass(frozen=True, slots=True)
class HistoryFeatures:
    question_id: int
    skill_id: int
    total_correct: int  # correct answers before this step
    total_wrong: int
    skill_correct: int  # correct answers on this step's skill before this step
    skill_wrong: int
    position: int


def history_features(seq: StudentSequence, i: int) -> HistoryFeatures:
    """Counters over records strictly before position i; ids from record i."""
    if not 0 <= i < len(seq):
        raise DataError(f"position {i} out of range for sequence of length {len(seq)}")
    target = seq.records[i]
    total_correct = total_wrong = skill_correct = skill_wrong = 0
    for r in seq.records[:i]:
        if r.correct == 1:
            total_correct += 1
            if r.skill_id == target.skill_id:
                skill_correct += 1
        else:
            total_wrong += 1
            if r.skill_id == target.skill_id:
                skill_wrong += 1
    return HistoryFeatures(
        question_id=target.item_id,
        skill_id=target.skill_id,
        total_correct=total_correct,
        total_wrong=total_wrong,
        skill_correct=skill_correct,
        skill_wrong=skill_wrong,
        position=i,
    )


def iter_history_features(seq: StudentSequence) -> Iterator[HistoryFeatures]:
    """Running-counter equivalent of history_features at every position.

    O(1) per step; matches the direct definition exactly (property-tested).
    """
    total_correct = total_wrong = 0
    per_skill: dict[int, list[int]] = {}
    for i, r in enumerate(seq.records):
        sc, sw = per_skill.get(r.skill_id, (0, 0))
        yield HistoryFeatures(
            question_id=r.item_id,
            skill_id=r.skill_id,
            total_correct=total_correct,
            total_wrong=total_wrong,
            skill_correct=sc,
            skill_wrong=sw,
            position=i,
        )
        if r.correct == 1:
            total_correct += 1
            per_skill[r.skill_id] = [sc + 1, sw]
        else:
            total_wrong += 1
            per_skill[r.skill_id] = [sc, sw + 1]


@dataclass(frozen=True)
class FeatureConfig:
    """Best-LR encoding switches.

    log_scale_counts applies phi(x) = ln(1+x) to all counters; raw counts
    destabilize the logistic fit. per_skill_counts adds the skill-conditioned
    counters; skill_onehot adds one indicator per vocabulary skill.
    """

    log_scale_counts: bool = True
    per_skill_counts: bool = True
    skill_onehot: bool = True


@dataclass(frozen=True)
class FeatureVector:
    entries: Mapping[int, float]
    dimension: int

    def __post_init__(self) -> None:
        for idx, val in self.entries.items():
            if not 0 <= idx < self.dimension:
                raise DataError(f"feature index {idx} outside dimension {self.dimension}")
            if not math.isfinite(val):
                raise DataError(f"non-finite feature value at index {idx}")

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dimension)
        for idx, val in self.entries.items():
            out[idx] = val
        return out

    def dot(self, w: np.ndarray) -> float:
        if w.shape[0] != self.dimension:
            raise DataError(f"weight dimension {w.shape[0]} != feature dimension {self.dimension}")
        return float(sum(w[i] * v for i, v in self.entries.items()))


@dataclass(frozen=True)
class FeatureSpace:
    """Fixed index layout over a skill vocabulary.

    Layout: [0]=bias, [1]=phi(total_correct), [2]=phi(total_wrong), then
    phi(skill_correct)/phi(skill_wrong) when enabled, then the skill one-hot
    block. With everything on, dimension = 5 + |skills|.
    """

    skills: tuple[int, ...]
    config: FeatureConfig = field(default_factory=FeatureConfig)

    @staticmethod
    def for_vocab(skill_vocab: Iterable[int], config: FeatureConfig = FeatureConfig()) -> "FeatureSpace":
        return FeatureSpace(skills=tuple(sorted(skill_vocab)), config=config)

    @property
    def count_slots(self) -> int:
        return 5 if self.config.per_skill_counts else 3

    @property
    def dimension(self) -> int:
        return self.count_slots + (len(self.skills) if self.config.skill_onehot else 0)

    def skill_index(self, skill_id: int) -> int:
        pos = bisect.bisect_left(self.skills, skill_id)
        if pos == len(self.skills) or self.skills[pos] != skill_id:
            raise DataError(f"skill {skill_id} not in feature-space vocabulary")
        return pos

    def _phi(self, x: int) -> float:
        return math.log1p(x) if self.config.log_scale_counts else float(x)

    def vector(self, f: HistoryFeatures) -> FeatureVector:
        entries: dict[int, float] = {0: 1.0, 1: self._phi(f.total_correct), 2: self._phi(f.total_wrong)}
        if self.config.per_skill_counts:
            entries[3] = self._phi(f.skill_correct)
            entries[4] = self._phi(f.skill_wrong)
        if self.config.skill_onehot:
            entries[self.count_slots + self.skill_index(f.skill_id)] = 1.0
        return FeatureVector(entries=entries, dimension=self.dimension)

    def describe(self) -> dict:
        return {
            "skills": list(self.skills),
            "log_scale_counts": self.config.log_scale_counts,
            "per_skill_counts": self.config.per_skill_counts,
            "skill_onehot": self.config.skill_onehot,
            "dimension": self.dimension,
        }

    @staticmethod
    def from_description(d: dict) -> "FeatureSpace":
        space = FeatureSpace(
            skills=tuple(d["skills"]),
            config=FeatureConfig(
                log_scale_counts=d["log_scale_counts"],
                per_skill_counts=d["per_skill_counts"],
                skill_onehot=d["skill_onehot"],
            ),
        )
        if space.dimension != d["dimension"]:
            raise DataError("feature-space description is inconsistent")
        return space


def best_lr_vector(
    f: HistoryFeatures,
    skill_vocab: Iterable[int],
    config: FeatureConfig = FeatureConfig(),
) -> FeatureVector:
    """Encode history counters for Best-LR over the given skill vocabulary."""
    return FeatureSpace.for_vocab(skill_vocab, config).vector(f)
