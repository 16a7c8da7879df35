import numpy as np
import pytest

from ktbench.dataset import build_dataset, generate_synthetic


@pytest.fixture
def toy_dataset():
    """Four students, two skills, mixed outcomes; enough for any smoke fit."""
    rows = [
        ("alice", 0, 0, 1), ("alice", 1, 1, 0), ("alice", 2, 0, 1), ("alice", 3, 1, 1),
        ("bob", 0, 0, 0), ("bob", 2, 0, 1), ("bob", 1, 1, 1), ("bob", 3, 1, 0),
        ("cara", 1, 1, 1), ("cara", 0, 0, 0), ("cara", 3, 1, 1), ("cara", 2, 0, 0),
        ("dan", 2, 0, 1), ("dan", 3, 1, 0), ("dan", 0, 0, 0), ("dan", 1, 1, 1),
    ]
    return build_dataset("toy", rows)


@pytest.fixture
def synthetic_dataset():
    """Medium synthetic set; 30 students x 25 steps over 4 skills."""
    params = {k: (0.3, 0.15, 0.15, 0.1) for k in range(4)}
    return generate_synthetic(params, n_students=30, seq_len=25, skills_per_seq=2, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
