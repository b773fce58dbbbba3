"""Synthetic embedding fixtures with known ground truth.

The planted-cluster fixture places each cluster on its own coordinate axis
with a small in-plane cone (member = sqrt(0.9)*axis + sqrt(0.1)*u, u a unit
vector in the shared complement subspace), which guarantees intra-cluster
cosine >= 0.8 and cross-cluster cosine <= 0.1 by algebra alone.  Background
rows live in the complement subspace, so their similarity to any cluster
member is at most sqrt(0.1); background-background cosines are driven below
0.5 by a deterministic resampling repair loop and verified before returning.
"""

from __future__ import annotations

import numpy as np

from .store import EmbeddingMatrix

DEFAULT_SIZES = (250, 275, 300, 325, 350) + (500,) * 15
_AXIS_WEIGHT = np.sqrt(0.9)
_CONE_WEIGHT = np.sqrt(0.1)
_BG_REPAIR_COS = 0.49


def random_unit_matrix(n: int, dim: int, seed: int = 0,
                       prefix: str = "v") -> EmbeddingMatrix:
    """n random unit-norm rows with ids prefix0..prefix{n-1}."""
    rng = np.random.Generator(np.random.PCG64(seed))
    data = rng.standard_normal((n, dim))
    norms = np.linalg.norm(data, axis=1, keepdims=True)
    data = (data / norms).astype(np.float32)
    ids = tuple(f"{prefix}{i}" for i in range(n))
    return EmbeddingMatrix(ids=ids, data=data, normalized=True)


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _repair_background(rng: np.random.Generator, n: int, dim: int,
                       max_cos: float = _BG_REPAIR_COS,
                       max_rounds: int = 500) -> np.ndarray:
    """Unit rows whose pairwise cosine never exceeds max_cos.

    Violating pairs are fixed by resampling the higher-index endpoint, which
    shrinks the violating set geometrically at these sizes.
    """
    rows = _unit_rows(rng, n, dim)
    for _ in range(max_rounds):
        gram = rows @ rows.T
        np.fill_diagonal(gram, 0.0)
        bad = np.unique(np.argwhere(gram > max_cos).max(axis=1)) \
            if (gram > max_cos).any() else np.empty(0, dtype=np.int64)
        if bad.size == 0:
            return rows
        rows[bad] = _unit_rows(rng, bad.size, dim)
    raise RuntimeError(f"background repair did not converge within {max_rounds} rounds")


def planted_cluster_fixture(seed: int = 0, n: int = 10_000, dim: int = 64,
                            sizes: tuple[int, ...] = DEFAULT_SIZES,
                            ) -> tuple[EmbeddingMatrix, list[set[str]]]:
    """Embedding matrix with planted duplicate clusters plus background rows.

    Returns the (shuffled) matrix and the ground-truth member-id sets.
    Verifies the advertised geometry before returning: intra-cluster cosine
    >= 0.8, every other pair < 0.5.
    """
    n_clusters = len(sizes)
    if dim < n_clusters + 2:
        raise ValueError(f"dim {dim} too small for {n_clusters} clusters")
    n_bg = n - sum(sizes)
    if n_bg < 0:
        raise ValueError(f"cluster sizes sum to {sum(sizes)} > n={n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    cone_dim = dim - n_clusters

    blocks = []
    for c, size in enumerate(sizes):
        members = np.zeros((size, dim))
        members[:, c] = _AXIS_WEIGHT
        members[:, n_clusters:] = _CONE_WEIGHT * _unit_rows(rng, size, cone_dim)
        blocks.append(members)
    if n_bg:
        bg = np.zeros((n_bg, dim))
        bg[:, n_clusters:] = _repair_background(rng, n_bg, cone_dim)
        blocks.append(bg)

    data = np.concatenate(blocks, axis=0)
    perm = rng.permutation(n)
    data = data[perm].astype(np.float32)

    position = np.empty(n, dtype=np.int64)
    position[perm] = np.arange(n)
    ids = tuple(f"img{i:05d}" for i in range(n))
    truth = []
    offset = 0
    for size in sizes:
        truth.append({ids[position[offset + k]] for k in range(size)})
        offset += size

    matrix = EmbeddingMatrix(ids=ids, data=data, normalized=True)
    _verify_fixture(matrix, truth)
    return matrix, truth


def _verify_fixture(matrix: EmbeddingMatrix, truth: list[set[str]],
                    intra_min: float = 0.8, cross_max: float = 0.5) -> None:
    row = matrix.row_index()
    data = matrix.data.astype(np.float64)
    member_rows = [np.array(sorted(row[m] for m in cluster)) for cluster in truth]
    for rows in member_rows:
        gram = data[rows] @ data[rows].T
        if gram.min() < intra_min:
            raise RuntimeError(f"intra-cluster cosine {gram.min():.4f} < {intra_min}")
    labels = np.full(matrix.n, -1, dtype=np.int64)
    for c, rows in enumerate(member_rows):
        labels[rows] = c
    # every pair not inside one cluster must stay below cross_max
    for start in range(0, matrix.n, 2048):
        stop = min(start + 2048, matrix.n)
        gram = data[start:stop] @ data.T
        same = labels[start:stop, None] == labels[None, :]
        same &= labels[start:stop, None] >= 0
        np.fill_diagonal(gram[:, start:stop], 0.0)
        gram[same] = 0.0
        if gram.max() >= cross_max:
            raise RuntimeError(f"cross-pair cosine {gram.max():.4f} >= {cross_max}")
