from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(7))


def textured_image(rng, size=96) -> Image.Image:
    """A random but structured RGB image (blobs + gradient), distinct per call."""
    y, x = np.mgrid[0:size, 0:size]
    arr = np.zeros((size, size, 3))
    for _ in range(4):
        cx, cy = rng.uniform(0, size, size=2)
        radius = rng.uniform(size / 8, size / 3)
        mask = ((x - cx) ** 2 + (y - cy) ** 2) < radius ** 2
        arr[mask] += rng.uniform(30, 120, size=3)
    arr += np.stack([x * rng.uniform(0.2, 1.5)] * 3, axis=2)
    arr += rng.normal(0, 6, size=arr.shape)
    return Image.fromarray(np.clip(arr, 0, 255).astype(np.uint8), mode="RGB")


def write_image_manifest(path: Path, rows) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for rid, img_path in rows:
            fh.write(json.dumps({"id": rid, "path": str(img_path)}) + "\n")
    return path


def write_text_manifest(path: Path, rows) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for rid, caption in rows:
            fh.write(json.dumps({"caption": caption, "id": rid}) + "\n")
    return path
