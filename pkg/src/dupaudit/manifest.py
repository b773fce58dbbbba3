"""Duplication-aware training manifests and weighted epoch sampling.

The data duplication factor (ddf) is realized as a sampling weight rather
than physical row replication: duplicate-flagged images carry weight = ddf,
everything else weight 1.  Full duplication keeps each duplicate's single
original caption; partial duplication attaches a caption pool that is cycled
round-robin across draws, guaranteeing distinct captions per duplicate even
at small draw counts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .store import CaptionRecord

MODES = ("full", "partial", "none")


class ManifestError(ValueError):
    """Raised for inconsistent manifest construction or sampling inputs."""


@dataclass(frozen=True)
class ManifestRow:
    image_id: str
    captions: tuple[str, ...]  # singleton unless a partial-mode duplicate
    weight: float

    @property
    def caption(self) -> str:
        return self.captions[0]


@dataclass(frozen=True)
class TrainingManifest:
    rows: tuple[ManifestRow, ...]
    mode: str
    ddf: float


def build_manifest(records: Sequence[CaptionRecord], dup_ids: Iterable[str],
                   ddf: float, mode: str,
                   caption_pools: Mapping[str, Sequence[str]] | None = None,
                   ) -> TrainingManifest:
    """One manifest row per image, deterministic and order-preserving.

    Duplicate-flagged images get weight = ddf.  Partial mode requires a pool
    of at least 2 distinct captions for every duplicate.
    """
    if mode not in MODES:
        raise ManifestError(f"mode must be one of {MODES}, got {mode!r}")
    if ddf < 1.0:
        raise ManifestError(f"ddf must be >= 1, got {ddf}")
    dup_set = set(dup_ids) if mode != "none" else set()
    known = {r.id for r in records}
    unknown = dup_set - known
    if unknown:
        raise ManifestError(f"unknown duplicate id {sorted(unknown)[0]!r}")

    rows = []
    for rec in records:
        is_dup = rec.id in dup_set
        if is_dup and mode == "partial":
            pool = tuple((caption_pools or {}).get(rec.id, ()))
            if len(set(pool)) < 2:
                raise ManifestError(
                    f"partial mode needs >= 2 distinct captions for duplicate "
                    f"{rec.id!r}, got {len(set(pool))}")
            captions = pool
        else:
            captions = (rec.text,)
        rows.append(ManifestRow(image_id=rec.id, captions=captions,
                                weight=float(ddf) if is_dup else 1.0))
    return TrainingManifest(rows=tuple(rows), mode=mode, ddf=float(ddf))


def sample_epoch(m: TrainingManifest, n_draws: int, seed: int,
                 caption_mode: str = "round_robin") -> list[tuple[str, str]]:
    """n_draws independent weighted draws (with replacement).

    By default each draw of a partial-mode duplicate takes the next caption
    from its pool in a round-robin that starts at a seeded offset, so caption
    usage stays balanced within +/-1 per pool cycle.  caption_mode="iid"
    instead draws a pool caption uniformly per hit.
    """
    if n_draws < 1:
        raise ManifestError(f"n_draws must be >= 1, got {n_draws}")
    if not m.rows:
        raise ManifestError("manifest is empty")
    if caption_mode not in ("round_robin", "iid"):
        raise ManifestError(f"unknown caption_mode {caption_mode!r}")
    rng = np.random.Generator(np.random.PCG64(seed))
    weights = np.array([r.weight for r in m.rows], dtype=np.float64)
    # starting offsets are drawn in one fixed pass before any draws so the
    # two streams cannot interleave
    cursors = [int(rng.integers(len(r.captions))) if len(r.captions) > 1 else 0
               for r in m.rows]
    picks = rng.choice(len(m.rows), size=n_draws, p=weights / weights.sum())
    out = []
    for row_idx in picks.tolist():
        row = m.rows[row_idx]
        if len(row.captions) > 1:
            if caption_mode == "iid":
                caption = row.captions[int(rng.integers(len(row.captions)))]
            else:
                caption = row.captions[cursors[row_idx] % len(row.captions)]
                cursors[row_idx] += 1
        else:
            caption = row.captions[0]
        out.append((row.image_id, caption))
    return out


def expand_manifest(m: TrainingManifest) -> list[tuple[str, str]]:
    """Flat replicated rows for trainers that cannot consume weights.

    Requires integer weights; a partial-mode duplicate's replicas cycle its
    caption pool from the start.
    """
    out = []
    for row in m.rows:
        copies = round(row.weight)
        if abs(row.weight - copies) > 1e-9 or copies < 1:
            raise ManifestError(
                f"expanded mode needs integer weights, row {row.image_id!r} "
                f"has weight {row.weight}")
        for r in range(copies):
            out.append((row.image_id, row.captions[r % len(row.captions)]))
    return out


def write_manifest(m: TrainingManifest, path: str | Path,
                   expanded: bool = False) -> None:
    """Newline-delimited rows {image_id, caption, weight}; multi-caption rows
    add a `captions` list.  Expanded mode writes replicated rows without the
    weight field."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if expanded:
            for image_id, caption in expand_manifest(m):
                fh.write(json.dumps({"caption": caption, "image_id": image_id},
                                    ensure_ascii=False, sort_keys=True))
                fh.write("\n")
            return
        for row in m.rows:
            rec = {"caption": row.caption, "image_id": row.image_id,
                   "weight": row.weight}
            if len(row.captions) > 1:
                rec["captions"] = list(row.captions)
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_manifest(path: str | Path) -> TrainingManifest:
    """Rebuild a manifest from its file form.

    Mode and ddf are inferred (multi-caption rows imply partial; ddf is the
    maximum weight); sampling only depends on rows, so the inference is
    lossless for downstream use.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                captions = tuple(obj["captions"]) if "captions" in obj \
                    else (obj["caption"],)
                rows.append(ManifestRow(image_id=obj["image_id"],
                                        captions=captions,
                                        weight=float(obj.get("weight", 1.0))))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ManifestError(f"{path}:{lineno}: malformed manifest row ({exc})")
    mode = "partial" if any(len(r.captions) > 1 for r in rows) else "full"
    ddf = max((r.weight for r in rows), default=1.0)
    return TrainingManifest(rows=tuple(rows), mode=mode, ddf=ddf)


def write_epoch_sample(samples: Sequence[tuple[str, str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for image_id, caption in samples:
            fh.write(json.dumps({"caption": caption, "image_id": image_id},
                                ensure_ascii=False, sort_keys=True))
            fh.write("\n")
