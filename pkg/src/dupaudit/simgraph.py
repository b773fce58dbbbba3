"""Blocked exact cosine similarity search and duplicate-cluster discovery.

All-pairs work is done in row blocks so that the dense similarity matrix is
never materialized: peak extra memory is one block-pair of scores
(``block_rows**2`` floats) plus whatever the caller buffers.  Results are
bit-identical for any block size and worker count.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .store import EmbeddingMatrix

DEFAULT_EDGE_THRESHOLD = 0.7
DEFAULT_MIN_CLUSTER_SIZE = 250
DEFAULT_BLOCK_ROWS = 4096

# queries are processed in fixed-size chunks regardless of thread count so
# that parallel runs assemble the exact same per-chunk results
_QUERY_CHUNK = 256


class SimGraphError(ValueError):
    """Raised for invalid search or clustering inputs."""


@dataclass(frozen=True)
class MatchReport:
    """Top-k matches for one query: (reference id, cosine score), descending
    score with ties broken by ascending reference row index."""

    query_id: str
    matches: tuple[tuple[str, float], ...]

    @property
    def top1(self) -> tuple[str, float]:
        return self.matches[0]


@dataclass(frozen=True)
class DuplicateCluster:
    """A connected component of the thresholded similarity graph."""

    cluster_id: int
    member_ids: tuple[str, ...]
    size: int
    median_caption_similarity: float | None = None


@dataclass(frozen=True)
class ClusterConfig:
    edge_threshold: float = DEFAULT_EDGE_THRESHOLD
    min_cluster_size: int = DEFAULT_MIN_CLUSTER_SIZE
    block_rows: int = DEFAULT_BLOCK_ROWS

    def __post_init__(self):
        if not (0.0 < self.edge_threshold <= 1.0):
            raise SimGraphError(
                f"edge_threshold must be in (0, 1], got {self.edge_threshold}")
        if self.min_cluster_size < 1:
            raise SimGraphError(
                f"min_cluster_size must be >= 1, got {self.min_cluster_size}")
        if self.block_rows < 1:
            raise SimGraphError(f"block_rows must be >= 1, got {self.block_rows}")


def _check_normalized(m: EmbeddingMatrix, name: str) -> None:
    if not m.normalized:
        raise SimGraphError(f"{name} matrix must be row-normalized (see normalize_rows)")


def _block_scores(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine scores a @ b.T for one block pair.

    Deliberately avoids BLAS matmul: its kernel choice (and therefore the
    float32 rounding) varies with operand shape, which would break the
    bit-identical-across-blockings contract.  einsum without optimization
    reduces the feature axis in a fixed order for every output element.
    """
    return np.einsum("mk,nk->mn", a, b, optimize=False)


def _topk_chunk(qdata: np.ndarray, qexcl: np.ndarray, ref: np.ndarray,
                k: int, block_rows: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact top-k over all reference rows for one query chunk.

    Merges block results with a stable sort on (-score, ref index); because
    running candidates always carry lower indices than the incoming block,
    stability yields the ascending-index tie-break for free.
    """
    m = qdata.shape[0]
    nref = ref.shape[0]
    run_s = np.empty((m, 0), dtype=np.float32)
    run_i = np.empty((m, 0), dtype=np.int64)
    for start in range(0, nref, block_rows):
        stop = min(start + block_rows, nref)
        scores = _block_scores(qdata, ref[start:stop])
        hit = (qexcl >= start) & (qexcl < stop)
        if hit.any():
            rows = np.nonzero(hit)[0]
            scores[rows, qexcl[rows] - start] = -np.inf
        block_idx = np.arange(start, stop, dtype=np.int64)
        comb_s = np.concatenate([run_s, scores], axis=1)
        comb_i = np.concatenate(
            [run_i, np.broadcast_to(block_idx, (m, stop - start))], axis=1)
        order = np.argsort(-comb_s, axis=1, kind="stable")[:, :k]
        run_s = np.take_along_axis(comb_s, order, axis=1)
        run_i = np.take_along_axis(comb_i, order, axis=1)
    return run_s, run_i


def blocked_topk(query: EmbeddingMatrix, reference: EmbeddingMatrix, k: int,
                 exclude_self: bool = False, block_rows: int = DEFAULT_BLOCK_ROWS,
                 threads: int = 1) -> list[MatchReport]:
    """Exact k highest cosine scores over all reference rows per query.

    With ``exclude_self``, a reference row whose id equals the query id is
    skipped.  Output is invariant to ``block_rows`` and ``threads``.
    """
    if query.dim != reference.dim:
        raise SimGraphError(
            f"dimension mismatch: query D={query.dim}, reference D={reference.dim}")
    _check_normalized(query, "query")
    _check_normalized(reference, "reference")
    if k < 1:
        raise SimGraphError(f"k must be >= 1, got {k}")
    if block_rows < 1:
        raise SimGraphError(f"block_rows must be >= 1, got {block_rows}")

    excl = np.full(query.n, -1, dtype=np.int64)
    if exclude_self:
        ref_idx = reference.row_index()
        for qi, qid in enumerate(query.ids):
            excl[qi] = ref_idx.get(qid, -1)
    if query.n:
        usable = int((reference.n - (excl >= 0).astype(int)).min())
        if k > usable:
            raise SimGraphError(
                f"k={k} exceeds usable reference count {usable}")

    chunks = [(s, min(s + _QUERY_CHUNK, query.n))
              for s in range(0, query.n, _QUERY_CHUNK)]

    def run(chunk):
        s, e = chunk
        return _topk_chunk(query.data[s:e], excl[s:e], reference.data,
                           k, block_rows)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]

    reports: list[MatchReport] = []
    qpos = 0
    for (s, e), (scores, idx) in zip(chunks, parts):
        for row in range(e - s):
            matches = tuple(
                (reference.ids[idx[row, j]], float(scores[row, j]))
                for j in range(scores.shape[1]))
            reports.append(MatchReport(query_id=query.ids[qpos], matches=matches))
            qpos += 1
    return reports


def threshold_edges(m: EmbeddingMatrix, threshold: float,
                    block_rows: int = DEFAULT_BLOCK_ROWS,
                    ) -> Iterator[tuple[int, int, float]]:
    """Stream the unordered row pairs (i < j) with cosine >= threshold.

    The predicate is inclusive (score == threshold is kept).  Self-pairs are
    excluded.  Edges are emitted in ascending (i, j) block order without ever
    materializing the dense N x N matrix.
    """
    _check_normalized(m, "input")
    data = m.data
    n = data.shape[0]
    for bi in range(0, n, block_rows):
        bi_stop = min(bi + block_rows, n)
        left = data[bi:bi_stop]
        for bj in range(bi, n, block_rows):
            bj_stop = min(bj + block_rows, n)
            scores = _block_scores(left, data[bj:bj_stop])
            hits = np.argwhere(scores >= threshold)
            for li, lj in hits:
                gi, gj = bi + int(li), bj + int(lj)
                if gi < gj:
                    yield gi, gj, float(scores[li, lj])


def connected_components(edges: Iterable[tuple[int, int, float] | tuple[int, int]],
                         n: int) -> np.ndarray:
    """Label rows by connected component over the given edge stream.

    Union-find with path compression and union by size; streams edges without
    storing the graph.  Labels are canonicalized to the minimum member index,
    so output is invariant to edge order and duplication.
    """
    parent = list(range(n))
    size = [1] * n

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for edge in edges:
        i, j = int(edge[0]), int(edge[1])
        if not (0 <= i < n and 0 <= j < n):
            raise SimGraphError(f"edge endpoint ({i}, {j}) out of range for n={n}")
        ri, rj = find(i), find(j)
        if ri == rj:
            continue
        if size[ri] < size[rj]:
            ri, rj = rj, ri
        parent[rj] = ri
        size[ri] += size[rj]

    labels = np.empty(n, dtype=np.int64)
    canon: dict[int, int] = {}
    for i in range(n):
        r = find(i)
        if r not in canon:
            canon[r] = i  # first visit in ascending order is the minimum member
        labels[i] = canon[r]
    return labels


def filter_clusters(labels: np.ndarray, min_size: int,
                    ids: Sequence[str]) -> list[DuplicateCluster]:
    """Components of size >= min_size, sorted by descending size then
    ascending cluster id."""
    if len(labels) != len(ids):
        raise SimGraphError(f"{len(labels)} labels for {len(ids)} ids")
    members: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        members.setdefault(int(lab), []).append(i)
    clusters = [
        DuplicateCluster(cluster_id=lab,
                         member_ids=tuple(ids[i] for i in rows),
                         size=len(rows))
        for lab, rows in members.items() if len(rows) >= min_size
    ]
    clusters.sort(key=lambda c: (-c.size, c.cluster_id))
    return clusters


def write_clusters(clusters: Iterable[DuplicateCluster], path: str | Path) -> None:
    """Newline-delimited cluster records {cluster_id, size, member_ids}."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in clusters:
            rec = {"cluster_id": c.cluster_id, "size": c.size,
                   "member_ids": list(c.member_ids)}
            if c.median_caption_similarity is not None:
                rec["median_caption_similarity"] = c.median_caption_similarity
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_clusters(path: str | Path) -> list[DuplicateCluster]:
    clusters = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            clusters.append(DuplicateCluster(
                cluster_id=int(obj["cluster_id"]),
                member_ids=tuple(obj["member_ids"]),
                size=int(obj["size"]),
                median_caption_similarity=obj.get("median_caption_similarity")))
    return clusters


def write_edges(edges: Iterable[tuple[int, int, float]], path: str | Path) -> int:
    """Binary edge dump: little-endian (u32, u32, f32) triples. Returns count."""
    count = 0
    with open(path, "wb") as fh:
        for i, j, score in edges:
            fh.write(struct.pack("<IIf", i, j, score))
            count += 1
    return count


def read_edges(path: str | Path) -> list[tuple[int, int, float]]:
    raw = Path(path).read_bytes()
    if len(raw) % 12:
        raise SimGraphError(f"{path}: size {len(raw)} is not a multiple of 12")
    return [struct.unpack_from("<IIf", raw, off) for off in range(0, len(raw), 12)]
