"""Memorization and caption-similarity metrics.

The dataset similarity score is a high percentile (default 95) of the
per-query top-1 cosine distribution against a reference set; queries above a
replication threshold (default 0.5) are flagged as likely copies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as _scipy_stats

from .simgraph import MatchReport, DuplicateCluster, blocked_topk, DEFAULT_BLOCK_ROWS
from .store import CaptionRecord, EmbeddingMatrix

DEFAULT_PERCENTILE = 95.0
DEFAULT_REPLICATION_THRESHOLD = 0.5
DEFAULT_PAIR_BUDGET = 2000

# smaller p-values are clamped and rendered as "< 1e-300" in reports
P_VALUE_FLOOR = 1e-300


class MetricError(ValueError):
    """Raised for degenerate or inconsistent metric inputs."""


@dataclass(frozen=True)
class SimilarityReport:
    """Per-query top-1 matches plus the aggregate dataset similarity."""

    per_query: tuple[tuple[str, str, float], ...]  # (query_id, top1_ref_id, top1_score)
    dataset_similarity: float
    replication_threshold: float
    percentile: float
    flagged: tuple[str, ...]

    @property
    def flagged_rate(self) -> float:
        return len(self.flagged) / len(self.per_query) if self.per_query else 0.0


def dataset_similarity(scores: Sequence[float], percentile: float = DEFAULT_PERCENTILE) -> float:
    """Linear-interpolation percentile of a score multiset.

    Rank r = percentile/100 * (n-1) over the ascending sort; the result
    interpolates between floor(r) and ceil(r).
    """
    if len(scores) == 0:
        raise MetricError("cannot take a percentile of an empty score list")
    if not (0.0 <= percentile <= 100.0):
        raise MetricError(f"percentile must be in [0, 100], got {percentile}")
    s = np.sort(np.asarray(scores, dtype=np.float64))
    r = percentile / 100.0 * (len(s) - 1)
    lo = math.floor(r)
    hi = math.ceil(r)
    if lo == hi:
        return float(s[lo])
    return float(s[lo] + (r - lo) * (s[hi] - s[lo]))


def build_similarity_report(matches: Sequence[MatchReport],
                            percentile: float = DEFAULT_PERCENTILE,
                            replication_threshold: float = DEFAULT_REPLICATION_THRESHOLD,
                            ) -> SimilarityReport:
    if not matches:
        raise MetricError("no match reports given")
    per_query = tuple((m.query_id, m.top1[0], m.top1[1]) for m in matches)
    score = dataset_similarity([p[2] for p in per_query], percentile)
    flagged = tuple(qid for qid, _, s in per_query if s >= replication_threshold)
    return SimilarityReport(per_query=per_query, dataset_similarity=score,
                            replication_threshold=replication_threshold,
                            percentile=percentile, flagged=flagged)


def flag_replications(report: SimilarityReport,
                      threshold: float = DEFAULT_REPLICATION_THRESHOLD,
                      ) -> tuple[tuple[str, ...], float]:
    """Query ids whose top-1 score is >= threshold, plus the flagged rate."""
    flagged = tuple(qid for qid, _, s in report.per_query if s >= threshold)
    return flagged, len(flagged) / len(report.per_query)


def self_similarity_baseline(train: EmbeddingMatrix,
                             percentile: float = DEFAULT_PERCENTILE,
                             block_rows: int = DEFAULT_BLOCK_ROWS,
                             threads: int = 1) -> float:
    """Background similarity of a dataset against itself (top-1 with the
    trivial self-match excluded)."""
    if train.n < 2:
        raise MetricError(f"self-similarity needs at least 2 rows, got {train.n}")
    matches = blocked_topk(train, train, k=1, exclude_self=True,
                           block_rows=block_rows, threads=threads)
    return dataset_similarity([m.top1[1] for m in matches], percentile)


def unigram_jaccard(a: CaptionRecord, b: CaptionRecord) -> float:
    """Intersection-over-union of two captions' unigram sets.

    Defined as 1.0 when both sets are empty.
    """
    if not a.unigrams and not b.unigrams:
        return 1.0
    inter = len(a.unigrams & b.unigrams)
    union = len(a.unigrams | b.unigrams)
    return inter / union


def _median(values: Sequence[float]) -> float:
    s = sorted(values)
    n = len(s)
    mid = n // 2
    if n % 2:
        return float(s[mid])
    return float(0.5 * (s[mid - 1] + s[mid]))


def _sample_pair_indices(total: int, budget: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample of `budget` distinct pair indices out of `total`,
    without materializing the full range."""
    chosen: dict[int, None] = {}
    while len(chosen) < budget:
        draw = rng.integers(0, total, size=budget)
        for v in draw.tolist():
            if v not in chosen:
                chosen[v] = None
                if len(chosen) == budget:
                    break
    return np.fromiter(chosen.keys(), dtype=np.int64, count=budget)


def caption_cluster_similarity(cluster: DuplicateCluster,
                               text_emb: EmbeddingMatrix,
                               captions: Mapping[str, CaptionRecord] | Sequence[CaptionRecord],
                               pair_budget: int = DEFAULT_PAIR_BUDGET,
                               seed: int = 0) -> float:
    """Median over member pairs of (text-embedding dot product) *
    (unigram-Jaccard similarity).

    All unordered pairs are used when their count fits the pair budget;
    otherwise a seeded uniform sample of `pair_budget` pairs is taken so that
    very large clusters stay tractable.
    """
    if not isinstance(captions, Mapping):
        captions = {c.id: c for c in captions}
    if not text_emb.normalized:
        raise MetricError("text embeddings must be row-normalized")
    row = text_emb.row_index()
    # canonical member order makes the result invariant to input ordering
    # even when pairs are subsampled
    members = sorted(cluster.member_ids)
    for mid in members:
        if mid not in row:
            raise MetricError(f"cluster member {mid!r} has no text embedding")
        if mid not in captions:
            raise MetricError(f"cluster member {mid!r} has no caption")
    s = len(members)
    if s < 2:
        raise MetricError(f"cluster {cluster.cluster_id} has fewer than 2 members")

    total = s * (s - 1) // 2
    if total <= pair_budget:
        pair_idx = np.arange(total, dtype=np.int64)
    else:
        rng = np.random.Generator(np.random.PCG64(seed))
        pair_idx = _sample_pair_indices(total, pair_budget, rng)

    # unrank linear pair index m -> (i, j), i < j, lexicographic order
    i_range = np.arange(s, dtype=np.int64)
    pairs_before = i_range * s - i_range * (i_range + 1) // 2
    i_of = np.searchsorted(pairs_before, pair_idx, side="right") - 1
    j_of = pair_idx - pairs_before[i_of] + i_of + 1

    emb = text_emb.data.astype(np.float64)
    rows = np.array([row[m] for m in members], dtype=np.int64)
    values = []
    for i, j in zip(i_of.tolist(), j_of.tolist()):
        a, b = members[i], members[j]
        dot = float(emb[rows[i]] @ emb[rows[j]])
        values.append(dot * unigram_jaccard(captions[a], captions[b]))
    return _median(values)


def pearson_with_pvalue(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Pearson correlation with a two-sided p-value.

    The p-value comes from t = r*sqrt((n-2)/(1-r^2)) against the
    t-distribution with n-2 degrees of freedom, clamped at ``P_VALUE_FLOOR``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError(f"series shapes differ: {x.shape} vs {y.shape}")
    n = x.size
    if n < 3:
        raise MetricError(f"need at least 3 points, got {n}")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(xc @ xc))
    sy = math.sqrt(float(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise MetricError("constant input series has no defined correlation")
    r = float(xc @ yc) / (sx * sy)
    r = max(-1.0, min(1.0, r))
    if abs(r) >= 1.0:
        return r, P_VALUE_FLOOR
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = 2.0 * float(_scipy_stats.t.sf(abs(t), n - 2))
    return r, max(p, P_VALUE_FLOOR)


def _ranks(v: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) with ties sharing their mean rank."""
    order = np.argsort(v, kind="stable")
    sv = v[order]
    ranks = np.empty(v.size, dtype=np.float64)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman_with_pvalue(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Rank correlation variant, exposed for sensitivity checks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError(f"series shapes differ: {x.shape} vs {y.shape}")
    return pearson_with_pvalue(_ranks(x), _ranks(y))


def format_pvalue(p: float) -> str:
    return "< 1e-300" if p <= P_VALUE_FLOOR else repr(p)


def report_to_dict(report: SimilarityReport) -> dict:
    """JSON-ready view with stable structure."""
    return {
        "dataset_similarity": report.dataset_similarity,
        "percentile": report.percentile,
        "replication_threshold": report.replication_threshold,
        "flagged_count": len(report.flagged),
        "flagged_rate": report.flagged_rate,
        "flagged": list(report.flagged),
        "per_query": [
            {"query_id": q, "top1_ref_id": r, "top1_score": s}
            for q, r, s in report.per_query
        ],
    }


def report_from_dict(obj: dict) -> SimilarityReport:
    per_query = tuple((p["query_id"], p["top1_ref_id"], float(p["top1_score"]))
                      for p in obj["per_query"])
    return SimilarityReport(
        per_query=per_query,
        dataset_similarity=float(obj["dataset_similarity"]),
        replication_threshold=float(obj["replication_threshold"]),
        percentile=float(obj.get("percentile", DEFAULT_PERCENTILE)),
        flagged=tuple(obj["flagged"]),
    )
