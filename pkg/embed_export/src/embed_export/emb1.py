"""EMB1 interchange format: writer, reader, and validator.

Layout: bytes 0-3 magic ``EMB1``; bytes 4-7 uint32-le row count N; bytes
8-11 uint32-le dimension D; then N*D little-endian float32 values, row-major.
Row ids live in a sidecar at ``<path>.ids``, one UTF-8 id per line.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"EMB1"
UNIT_NORM_TOL = 1e-4


class Emb1Error(ValueError):
    pass


def write_emb1(data: np.ndarray, ids: list[str], path: str | Path) -> None:
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 2:
        raise Emb1Error(f"expected 2-D data, got shape {data.shape}")
    if len(ids) != data.shape[0]:
        raise Emb1Error(f"{len(ids)} ids for {data.shape[0]} rows")
    if len(set(ids)) != len(ids):
        raise Emb1Error("duplicate ids")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", data.shape[0], data.shape[1]))
        fh.write(data.tobytes())
    with open(str(path) + ".ids", "w", encoding="utf-8", newline="\n") as fh:
        for rid in ids:
            fh.write(rid)
            fh.write("\n")


def read_emb1(path: str | Path) -> tuple[np.ndarray, list[str]]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise Emb1Error(f"{path}: bad magic")
    n, d = struct.unpack("<II", raw[4:12])
    if len(raw) != 12 + n * d * 4:
        raise Emb1Error(f"{path}: size mismatch for {n}x{d}")
    data = np.frombuffer(raw, dtype="<f4", offset=12).reshape(n, d)
    ids_path = Path(str(path) + ".ids")
    text = ids_path.read_text(encoding="utf-8") if ids_path.exists() else ""
    if text.endswith("\n"):
        text = text[:-1]
    ids = text.split("\n") if text else []
    if len(ids) != n:
        raise Emb1Error(f"{path}: {len(ids)} sidecar ids for {n} rows")
    return data, ids


def validate_emb1(path: str | Path) -> tuple[int, int]:
    """Check grammar, sidecar consistency, and the unit-norm invariant.

    Returns (N, D) on success.
    """
    data, ids = read_emb1(path)
    if data.shape[0]:
        norms = np.linalg.norm(data.astype(np.float64), axis=1)
        worst = np.abs(norms - 1.0).max()
        if worst > UNIT_NORM_TOL:
            raise Emb1Error(f"{path}: row norms deviate from 1 by {worst:.2e}")
    if len(set(ids)) != len(ids):
        raise Emb1Error(f"{path}: duplicate ids in sidecar")
    return data.shape
