from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dupaudit.store import EmbeddingMatrix


def make_matrix(rows, ids=None, normalized=None) -> EmbeddingMatrix:
    data = np.asarray(rows, dtype=np.float32)
    if ids is None:
        ids = tuple(f"r{i}" for i in range(data.shape[0]))
    if normalized is None:
        norms = np.linalg.norm(data.astype(np.float64), axis=1)
        normalized = bool(data.shape[0] == 0 or np.all(np.abs(norms - 1) <= 1e-4))
    return EmbeddingMatrix(ids=tuple(ids), data=data, normalized=normalized)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))
