"""Sequence encoding shared by the DKT and SAKT trainers.

Interactions are encoded at skill granularity: the pair (skill, correctness)
maps to one index in [0, 2*n_skills). Long sequences are chunked into
consecutive windows; each chunk restarts with fresh state, which keeps
training and prediction deterministic.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from ..dataset import Dataset, InteractionRecord, StudentSequence
from ..errors import ModelError


def interaction_index(skill_index: int, correct: int, n_skills: int) -> int:
    return skill_index + correct * n_skills


def encode_dkt_input(record: InteractionRecord, n_skills: int) -> np.ndarray:
    """One-hot of length 2*n_skills, hot at skill + correct*n_skills."""
    if not 0 <= record.skill_id < n_skills:
        raise ModelError(f"unknown skill index {record.skill_id} for {n_skills} skills")
    out = np.zeros(2 * n_skills)
    out[interaction_index(record.skill_id, record.correct, n_skills)] = 1.0
    return out


@dataclass(frozen=True)
class SkillIndexer:
    """Snapshot of the skill vocabulary mapped to contiguous indices."""

    skills: tuple[int, ...]

    @staticmethod
    def from_vocab(vocab) -> "SkillIndexer":
        return SkillIndexer(skills=tuple(sorted(vocab)))

    @property
    def n_skills(self) -> int:
        return len(self.skills)

    def index(self, skill_id: int) -> int:
        pos = bisect.bisect_left(self.skills, skill_id)
        if pos == len(self.skills) or self.skills[pos] != skill_id:
            raise ModelError(f"skill {skill_id} not in the model's vocabulary")
        return pos


Chunk = tuple[np.ndarray, np.ndarray, np.ndarray]  # (interaction idx, skill idx, label)


def chunk_sequence(seq: StudentSequence, indexer: SkillIndexer, window: int) -> list[Chunk]:
    n_skills = indexer.n_skills
    skill_idx = np.array([indexer.index(r.skill_id) for r in seq.records], dtype=np.int32)
    labels = np.array([r.correct for r in seq.records], dtype=np.int32)
    inter = (skill_idx + labels * n_skills).astype(np.int32)
    out = []
    for start in range(0, len(seq.records), window):
        sl = slice(start, start + window)
        out.append((inter[sl], skill_idx[sl], labels[sl].astype(np.float64)))
    return out


def chunks_from_dataset(ds: Dataset, indexer: SkillIndexer, window: int) -> list[Chunk]:
    chunks: list[Chunk] = []
    for seq in ds.sequences:
        chunks.extend(chunk_sequence(seq, indexer, window))
    return chunks


@dataclass
class SeqBatch:
    xidx: np.ndarray  # (B, T) int32, padded 0
    skill: np.ndarray  # (B, T) int32, padded 0
    y: np.ndarray  # (B, T) float64, padded 0
    mask: np.ndarray  # (B, T) float64 1/0

    @property
    def n_points(self) -> float:
        return float(self.mask.sum())


def pad_batch(chunks: list[Chunk]) -> SeqBatch:
    B = len(chunks)
    T = max(len(c[0]) for c in chunks)
    xidx = np.zeros((B, T), dtype=np.int32)
    skill = np.zeros((B, T), dtype=np.int32)
    y = np.zeros((B, T), dtype=np.float64)
    mask = np.zeros((B, T), dtype=np.float64)
    for b, (xi, sk, lab) in enumerate(chunks):
        L = len(xi)
        xidx[b, :L] = xi
        skill[b, :L] = sk
        y[b, :L] = lab
        mask[b, :L] = 1.0
    return SeqBatch(xidx=xidx, skill=skill, y=y, mask=mask)
