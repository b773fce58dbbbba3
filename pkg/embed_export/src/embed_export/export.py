"""Export jobs: run an encoder over a manifest and emit an EMB1 file.

Rows are L2-normalized at export time so consumers can skip renormalization.
Undecodable images are skipped with a log line and excluded from the sidecar
(zero-filling would break the unit-norm invariant); row order otherwise
follows the manifest.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .emb1 import validate_emb1, write_emb1
from .models import ExportError, get_model


@dataclass
class ExportJob:
    model: str
    manifest: str
    output: str
    batch_size: int = 32

    def __post_init__(self):
        if self.batch_size < 1:
            raise ExportError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class ExportResult:
    n_rows: int
    dim: int
    skipped: list[str] = field(default_factory=list)


def read_manifest(path: str | Path) -> tuple[str, list[tuple[str, str]]]:
    """Returns ("image"|"text", [(id, path-or-caption), ...])."""
    rows = []
    kind = None
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rid = obj["id"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ExportError(f"{path}:{lineno}: malformed manifest row ({exc})")
            if rid in seen:
                raise ExportError(f"{path}:{lineno}: duplicate id {rid!r}")
            seen.add(rid)
            if "path" in obj:
                row_kind, payload = "image", obj["path"]
            elif "caption" in obj:
                row_kind, payload = "text", obj["caption"]
            else:
                raise ExportError(f"{path}:{lineno}: row needs a path or caption field")
            if kind is None:
                kind = row_kind
            elif kind != row_kind:
                raise ExportError(f"{path}:{lineno}: mixed image/text manifest")
            rows.append((rid, payload))
    return kind or "image", rows


def _normalize_rows(data: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(data, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ExportError("encoder produced a zero row, cannot normalize")
    return (data / norms).astype(np.float32)


def export_image_embeddings(job: ExportJob, log=sys.stderr) -> ExportResult:
    """One L2-normalized row per decodable manifest image, manifest order."""
    model = get_model(job.model)
    if model.kind != "image":
        raise ExportError(f"model {job.model!r} is a {model.kind} encoder, "
                          "but the manifest lists image paths")
    _, rows = read_manifest(job.manifest)
    kept_ids: list[str] = []
    chunks: list[np.ndarray] = []
    batch_ids: list[str] = []
    batch_imgs: list[Image.Image] = []

    def flush():
        if batch_imgs:
            chunks.append(model.encode_batch(batch_imgs))
            kept_ids.extend(batch_ids)
            for img in batch_imgs:
                img.close()
            batch_ids.clear()
            batch_imgs.clear()

    skipped = []
    for rid, path in rows:
        try:
            img = Image.open(path)
            img.load()
        except (UnidentifiedImageError, OSError) as exc:
            skipped.append(rid)
            print(f"warning: skipping {rid} ({path}): {exc}", file=log)
            continue
        batch_ids.append(rid)
        batch_imgs.append(img)
        if len(batch_imgs) >= job.batch_size:
            flush()
    flush()

    dim = getattr(model, "dim", None)
    data = (np.concatenate(chunks, axis=0) if chunks
            else np.empty((0, dim or 1), dtype=np.float64))
    write_emb1(_normalize_rows(data) if data.shape[0] else data.astype(np.float32),
               kept_ids, job.output)
    shape = validate_emb1(job.output)
    return ExportResult(n_rows=shape[0], dim=shape[1], skipped=skipped)


def export_text_embeddings(job: ExportJob, log=sys.stderr) -> ExportResult:
    """One L2-normalized row per manifest caption, manifest order."""
    model = get_model(job.model)
    if model.kind != "text":
        raise ExportError(f"model {job.model!r} is a {model.kind} encoder, "
                          "but the manifest lists captions")
    _, rows = read_manifest(job.manifest)
    ids = [rid for rid, _ in rows]
    chunks = []
    for start in range(0, len(rows), job.batch_size):
        texts = [caption for _, caption in rows[start:start + job.batch_size]]
        chunks.append(model.encode_batch(texts))
    dim = getattr(model, "dim", None)
    data = (np.concatenate(chunks, axis=0) if chunks
            else np.empty((0, dim or 1), dtype=np.float64))
    write_emb1(_normalize_rows(data) if data.shape[0] else data.astype(np.float32),
               ids, job.output)
    shape = validate_emb1(job.output)
    return ExportResult(n_rows=shape[0], dim=shape[1], skipped=[])
