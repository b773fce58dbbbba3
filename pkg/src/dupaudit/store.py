"""Ingestion, validation and persistence of embedding matrices and caption sets.

Embeddings live in a flat binary format ("EMB1"): a 12-byte header
(magic ``EMB1``, uint32-le row count N, uint32-le dimension D) followed by
N*D little-endian float32 values in row-major order.  Row identifiers are
kept in a sidecar text file at ``<path>.ids`` with one UTF-8 id per line.
Captions are newline-delimited JSON records with ``id`` and ``caption``
fields.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

EMB1_MAGIC = b"EMB1"
UNIT_NORM_TOL = 1e-4


class StoreError(ValueError):
    """Raised for malformed embedding files, caption files, or invalid matrices."""


@dataclass(frozen=True)
class EmbeddingMatrix:
    """N rows of D-dimensional float32 features with stable string ids.

    Instances are immutable after construction (the data buffer is marked
    read-only) and safe to share across threads.
    """

    ids: tuple[str, ...]
    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise StoreError(f"embedding data must be 2-D, got shape {data.shape}")
        n, d = data.shape
        if d < 1:
            raise StoreError("embedding dimension must be >= 1")
        if len(self.ids) != n:
            raise StoreError(f"id count {len(self.ids)} != row count {n}")
        seen = set()
        for i in self.ids:
            if i in seen:
                raise StoreError(f"duplicate id {i!r}")
            if "\n" in i or "\r" in i:
                raise StoreError(f"id contains a newline: {i!r}")
            seen.add(i)
        if self.normalized and n > 0:
            norms = np.linalg.norm(data.astype(np.float64), axis=1)
            bad = np.where(np.abs(norms - 1.0) > UNIT_NORM_TOL)[0]
            if bad.size:
                raise StoreError(
                    f"row {self.ids[bad[0]]!r} has norm {norms[bad[0]]:.6f}, "
                    f"not unit within {UNIT_NORM_TOL}"
                )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "ids", tuple(self.ids))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def row_index(self) -> dict[str, int]:
        return {i: k for k, i in enumerate(self.ids)}


def rows_are_unit_norm(data: np.ndarray, tol: float = UNIT_NORM_TOL) -> bool:
    if data.shape[0] == 0:
        return True
    norms = np.linalg.norm(data.astype(np.float64), axis=1)
    return bool(np.all(np.abs(norms - 1.0) <= tol))


def normalize_rows(m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Scale every row to unit Euclidean norm.

    Fails on zero rows, naming the offending id.  Idempotent within float32
    rounding (~1e-7 per element).
    """
    norms = np.linalg.norm(m.data.astype(np.float64), axis=1)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        raise StoreError(f"row {m.ids[zero[0]]!r} has zero norm, cannot normalize")
    scaled = (m.data.astype(np.float64) / norms[:, None]).astype(np.float32)
    return EmbeddingMatrix(ids=m.ids, data=scaled, normalized=True)


def write_embeddings(m: EmbeddingMatrix, path: str | Path) -> None:
    """Write an EMB1 file plus its ``.ids`` sidecar. Round-trips bitwise."""
    path = Path(path)
    payload = np.ascontiguousarray(m.data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(EMB1_MAGIC)
        fh.write(struct.pack("<II", m.n, m.dim))
        fh.write(payload)
    with open(str(path) + ".ids", "w", encoding="utf-8", newline="\n") as fh:
        for i in m.ids:
            fh.write(i)
            fh.write("\n")


def read_embeddings(path: str | Path) -> EmbeddingMatrix:
    """Read an EMB1 file and its id sidecar.

    The ``normalized`` flag is set when every row is unit-norm within
    ``UNIT_NORM_TOL`` (absorbs single-precision drift from external
    exporters).  Fails rather than truncates on any size mismatch.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != EMB1_MAGIC:
        raise StoreError(f"{path}: bad magic, not an EMB1 file")
    n, d = struct.unpack("<II", raw[4:12])
    if d < 1:
        raise StoreError(f"{path}: dimension {d} in header, must be >= 1")
    expected = 12 + n * d * 4
    if len(raw) != expected:
        raise StoreError(
            f"{path}: payload size mismatch, header says {n}x{d} "
            f"({expected} bytes total) but file has {len(raw)} bytes"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=12).reshape(n, d)
    ids = _read_id_sidecar(Path(str(path) + ".ids"), n)
    return EmbeddingMatrix(ids=tuple(ids), data=data,
                           normalized=rows_are_unit_norm(data))


def _read_id_sidecar(path: Path, n: int) -> list[str]:
    if not path.exists():
        if n == 0:
            return []
        raise StoreError(f"{path}: id sidecar missing")
    text = path.read_text(encoding="utf-8")
    if text.endswith("\n"):
        text = text[:-1]
    ids = text.split("\n") if text or n > 0 else []
    if n == 0 and ids == [""]:
        ids = []
    if len(ids) != n:
        raise StoreError(f"{path}: {len(ids)} ids for {n} rows")
    return ids


def tokenize(text: str) -> frozenset[str]:
    """Unigram set of a caption: lowercase, split on Unicode whitespace,
    strip leading/trailing characters that are not letters or digits.

    Tokens that are empty after stripping are dropped.  Pure: the same text
    always yields the same set.
    """
    out = set()
    for tok in text.lower().split():
        start, end = 0, len(tok)
        while start < end and not (tok[start].isalpha() or tok[start].isdigit()):
            start += 1
        while end > start and not (tok[end - 1].isalpha() or tok[end - 1].isdigit()):
            end -= 1
        if end > start:
            out.add(tok[start:end])
    return frozenset(out)


@dataclass(frozen=True)
class CaptionRecord:
    """One caption with its derived unigram set."""

    id: str
    text: str
    unigrams: frozenset[str] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.unigrams is None:
            object.__setattr__(self, "unigrams", tokenize(self.text))


def read_captions(path: str | Path) -> list[CaptionRecord]:
    """Read newline-delimited JSON caption records, preserving order.

    Each line is an object with ``id`` and ``caption`` fields.  Blank lines
    are skipped.  Reports the line number of malformed records and rejects
    duplicate ids.
    """
    records: list[CaptionRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rid = obj["id"]
                caption = obj["caption"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise StoreError(f"{path}:{lineno}: malformed caption record ({exc})")
            if not isinstance(rid, str) or not isinstance(caption, str):
                raise StoreError(f"{path}:{lineno}: id and caption must be strings")
            if rid in seen:
                raise StoreError(f"{path}:{lineno}: duplicate id {rid!r}")
            seen.add(rid)
            records.append(CaptionRecord(id=rid, text=caption))
    return records


def write_captions(records: Iterable[CaptionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps({"id": rec.id, "caption": rec.text},
                                ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_caption_pools(path: str | Path) -> dict[str, list[str]]:
    """Read newline-delimited JSON pool records ``{id, captions: [...]}``."""
    pools: dict[str, list[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rid = obj["id"]
                captions = obj["captions"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise StoreError(f"{path}:{lineno}: malformed pool record ({exc})")
            if rid in pools:
                raise StoreError(f"{path}:{lineno}: duplicate id {rid!r}")
            if not isinstance(captions, list) or not all(isinstance(c, str) for c in captions):
                raise StoreError(f"{path}:{lineno}: captions must be a list of strings")
            pools[rid] = captions
    return pools
