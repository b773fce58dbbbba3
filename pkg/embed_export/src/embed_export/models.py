"""Encoder registry.

Two dependency-free encoders ship built in and run fully offline:

* ``pixelstats`` (image) - a classical descriptor: mean-pooled luma
  thumbnail plus per-channel color histograms.  Deterministic, robust to
  re-encoding noise, good enough to smoke-test audit pipelines end to end.
* ``hashed-bow`` (text) - signed feature-hashing of whitespace tokens.

Pretrained-hub encoders are addressed as ``torchvision:<arch>`` and
``st:<model>``; they import their frameworks lazily and surface weight
download failures as ExportError.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image


class ExportError(RuntimeError):
    pass


class PixelStatsImageEncoder:
    """Luma thumbnail + RGB histograms, L2-normalized downstream."""

    kind = "image"
    name = "pixelstats"
    _GRID = 16
    _BINS = 16

    @property
    def dim(self) -> int:
        return self._GRID * self._GRID + 3 * self._BINS

    def encode_batch(self, images: list[Image.Image]) -> np.ndarray:
        out = np.empty((len(images), self.dim), dtype=np.float64)
        for i, img in enumerate(images):
            arr = np.asarray(img.convert("RGB").resize(
                (64, 64), Image.Resampling.BILINEAR), dtype=np.float64) / 255.0
            luma = 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]
            block = 64 // self._GRID
            thumb = luma.reshape(self._GRID, block, self._GRID, block).mean(axis=(1, 3))
            thumb = thumb - thumb.mean()  # brightness-invariant part
            hists = [np.histogram(arr[..., c], bins=self._BINS,
                                  range=(0.0, 1.0))[0] / arr[..., c].size
                     for c in range(3)]
            out[i] = np.concatenate([thumb.ravel(), *hists])
        return out


class HashedBowTextEncoder:
    """Signed bag-of-words via stable hashing; empty text maps to a
    reserved feature so every row stays nonzero."""

    kind = "text"
    name = "hashed-bow"
    dim = 256
    _EMPTY = "\x00empty"

    def _slot(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        value = int.from_bytes(digest, "little")
        return value % self.dim, 1.0 if (value >> 63) & 1 else -1.0

    def encode_batch(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            tokens = text.lower().split() or [self._EMPTY]
            for tok in tokens:
                idx, sign = self._slot(tok)
                out[i, idx] += sign
            if not np.any(out[i]):
                # signs cancelled exactly; fall back to the reserved feature
                idx, sign = self._slot(self._EMPTY)
                out[i, idx] = sign
        return out


class TorchvisionImageEncoder:
    """Pretrained torchvision backbone, pooled features of the last stage."""

    kind = "image"

    def __init__(self, arch: str):
        self.name = f"torchvision:{arch}"
        try:
            import torch
            import torchvision.models as tvm
        except ImportError as exc:
            raise ExportError(f"torchvision unavailable: {exc}")
        try:
            model = getattr(tvm, arch)(weights="DEFAULT")
        except AttributeError:
            raise ExportError(f"unknown torchvision architecture {arch!r}")
        except Exception as exc:
            raise ExportError(f"weight download failure for {self.name}: {exc}")
        self._torch = torch
        self._model = torch.nn.Sequential(*list(model.children())[:-1]).eval()

    def encode_batch(self, images):
        torch = self._torch
        mean = torch.tensor([0.485, 0.456, 0.406]).view(3, 1, 1)
        std = torch.tensor([0.229, 0.224, 0.225]).view(3, 1, 1)
        batch = []
        for img in images:
            arr = np.asarray(img.convert("RGB").resize(
                (224, 224), Image.Resampling.BILINEAR), dtype=np.float32) / 255.0
            ten = torch.from_numpy(arr).permute(2, 0, 1)
            batch.append((ten - mean) / std)
        with torch.no_grad():
            feats = self._model(torch.stack(batch))
        return feats.flatten(1).numpy().astype(np.float64)


class SentenceTransformerTextEncoder:
    kind = "text"

    def __init__(self, model_name: str):
        self.name = f"st:{model_name}"
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise ExportError(f"sentence-transformers unavailable: {exc}")
        try:
            self._model = SentenceTransformer(model_name)
        except Exception as exc:
            raise ExportError(f"weight download failure for {self.name}: {exc}")

    def encode_batch(self, texts):
        return np.asarray(self._model.encode(list(texts)), dtype=np.float64)


def get_model(name: str):
    if name == "pixelstats":
        return PixelStatsImageEncoder()
    if name == "hashed-bow":
        return HashedBowTextEncoder()
    if name.startswith("torchvision:"):
        return TorchvisionImageEncoder(name.split(":", 1)[1])
    if name.startswith("st:"):
        return SentenceTransformerTextEncoder(name.split(":", 1)[1])
    raise ExportError(
        f"unknown model {name!r}; built-ins are 'pixelstats' (image) and "
        f"'hashed-bow' (text), hub models are 'torchvision:<arch>' / 'st:<model>'")
