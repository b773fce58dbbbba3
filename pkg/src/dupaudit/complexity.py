"""Image-complexity scoring: grayscale histogram entropy and JPEG size.

Images are standardized (shortest side resized to 256 with bilinear
interpolation, then center-cropped to 256x256) before scoring so that byte
counts and entropies are comparable across inputs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Literal, Mapping, Sequence

import numpy as np
from PIL import Image

from .metrics import (
    MetricError,
    SimilarityReport,
    pearson_with_pvalue,
    spearman_with_pvalue,
)

STANDARD_SIZE = 256
DEFAULT_JPEG_QUALITY = 90

# integer-rounded Rec.601 luma weights; ties round half-to-even via np.rint
_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114


class ComplexityError(ValueError):
    """Raised for undecodable or inconsistent complexity inputs."""


@dataclass(frozen=True)
class ComplexityScore:
    id: str
    entropy_bits: float
    jpeg_bytes: int
    bits_per_pixel: float


def preprocess_image(img: Image.Image, size: int = STANDARD_SIZE) -> Image.Image:
    """Resize the shortest side to `size` (bilinear) and center-crop to
    `size` x `size`.  Inputs already at the target geometry pass through
    pixel-identical."""
    if img.mode != "RGB":
        img = img.convert("RGB")
    w, h = img.size
    if w < 1 or h < 1:
        raise ComplexityError(f"degenerate image size {img.size}")
    scale = size / min(w, h)
    new_w = max(size, round(w * scale))
    new_h = max(size, round(h * scale))
    if (new_w, new_h) != (w, h):
        img = img.resize((new_w, new_h), Image.Resampling.BILINEAR)
    left = (new_w - size) // 2
    top = (new_h - size) // 2
    if (new_w, new_h) != (size, size):
        img = img.crop((left, top, left + size, top + size))
    return img


def to_grayscale(img: Image.Image, gray_mode: Literal["luma", "mean"] = "luma") -> np.ndarray:
    """8-bit grayscale plane: rounded 0.299R + 0.587G + 0.114B, or the
    per-channel mean behind the 'mean' flag."""
    arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    if gray_mode == "luma":
        # summed left to right elementwise; matmul would reassociate and can
        # flip exact .5 ties
        gray = _LUMA_R * arr[..., 0] + _LUMA_G * arr[..., 1] + _LUMA_B * arr[..., 2]
    elif gray_mode == "mean":
        gray = arr.mean(axis=2)
    else:
        raise ComplexityError(f"unknown gray_mode {gray_mode!r}")
    return np.clip(np.rint(gray), 0, 255).astype(np.uint8)


def histogram_entropy(img: Image.Image,
                      gray_mode: Literal["luma", "mean"] = "luma") -> float:
    """Shannon entropy (bits) of the 256-bin grayscale intensity histogram.

    Bounded by 8 bits; invariant under any spatial permutation of pixels.
    """
    gray = to_grayscale(img, gray_mode)
    hist = np.bincount(gray.ravel(), minlength=256)
    p = hist[hist > 0] / gray.size
    return float(-(p * np.log2(p)).sum()) + 0.0


def jpeg_compressibility(img: Image.Image,
                         quality: int = DEFAULT_JPEG_QUALITY) -> tuple[int, float]:
    """Encoded byte count at the given JPEG quality, plus bits per pixel.

    Encoder settings are pinned (baseline, 4:2:0 chroma subsampling, no
    optimize pass) so repeated encodes are byte-identical.
    """
    if not (1 <= quality <= 100):
        raise ComplexityError(f"quality must be in [1, 100], got {quality}")
    buf = io.BytesIO()
    img.convert("RGB").save(buf, format="JPEG", quality=quality,
                            subsampling=2, optimize=False, progressive=False)
    nbytes = buf.tell()
    w, h = img.size
    return nbytes, 8.0 * nbytes / (w * h)


def score_image(image_id: str, img: Image.Image,
                quality: int = DEFAULT_JPEG_QUALITY,
                gray_mode: Literal["luma", "mean"] = "luma") -> ComplexityScore:
    std = preprocess_image(img)
    entropy = histogram_entropy(std, gray_mode)
    nbytes, bpp = jpeg_compressibility(std, quality)
    return ComplexityScore(id=image_id, entropy_bits=entropy,
                           jpeg_bytes=nbytes, bits_per_pixel=bpp)


def complexity_correlation(report: SimilarityReport,
                           scores: Mapping[str, ComplexityScore] | Sequence[ComplexityScore],
                           metric: Literal["entropy", "jpeg"] = "entropy",
                           method: Literal["pearson", "spearman"] = "pearson",
                           ) -> tuple[float, float]:
    """Correlation between each query's top-1 similarity score and the
    complexity of the training image it matched."""
    if not isinstance(scores, Mapping):
        scores = {s.id: s for s in scores}
    xs, ys = [], []
    for _, ref_id, score in report.per_query:
        if ref_id not in scores:
            raise MetricError(f"no complexity score for matched id {ref_id!r}")
        c = scores[ref_id]
        xs.append(score)
        ys.append(c.entropy_bits if metric == "entropy" else float(c.jpeg_bytes))
    estimator = spearman_with_pvalue if method == "spearman" else pearson_with_pvalue
    return estimator(xs, ys)


def write_complexity_csv(scores: Sequence[ComplexityScore], path,
                         header_lines: Sequence[str] = ()) -> None:
    """CSV rows (id, entropy_bits, jpeg_bytes, bits_per_pixel); optional
    '#'-prefixed provenance lines on top."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "entropy_bits", "jpeg_bytes", "bits_per_pixel"])
        for s in scores:
            writer.writerow([s.id, repr(s.entropy_bits), s.jpeg_bytes,
                             repr(s.bits_per_pixel)])


def read_complexity_csv(path) -> list[ComplexityScore]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows, None)
        for sid, entropy, nbytes, bpp in rows:
            out.append(ComplexityScore(id=sid, entropy_bits=float(entropy),
                                       jpeg_bytes=int(nbytes),
                                       bits_per_pixel=float(bpp)))
    return out
