"""Embedding encoders the exporter can drive.

Three families, picked by model name:

* ``hash`` or ``hash-<d>``: a self-contained deterministic encoder with no
  model weights. Images are decoded with Pillow, resampled to a fixed
  32x32 RGB grid, and projected by a matrix drawn from a generator seeded
  by the model name. Texts become hashed bags of words over d signed
  buckets. Meant for plumbing, conformance tests, and offline smoke runs.
* ``clip:<checkpoint>``: bridges to a pretrained vision-language
  checkpoint via torch + transformers. Raises ModelUnavailable when the
  libraries or the weights cannot be loaded (for instance with no network
  and a cold cache).
* ``plugin:<module>:<attr>``: imports <module>, calls <attr>() with no
  arguments, and adapts any object exposing encode_images(paths) and
  encode_texts(strings) that return array-likes.

Every encoder consumes manifest record batches and returns one float64 row
per record, in order. Model outputs pass through raw and unnormalized.
"""

from __future__ import annotations

import hashlib
import importlib
import io
import re
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import ModelUnavailable, UnreadableInput
from .manifest import ManifestRecord

GRID = 32
DEFAULT_HASH_DIM = 64

_HASH_NAME = re.compile(r"^hash(?:-(\d+))?$")
_TOKEN = re.compile(r"[a-z0-9]+")


class Encoder(Protocol):
    """Batch interface the export loop drives."""

    name: str

    def encode_images(self, batch: Sequence[ManifestRecord]) -> np.ndarray: ...

    def encode_texts(self, batch: Sequence[ManifestRecord]) -> np.ndarray: ...


def _rng_from(tag: str) -> np.random.Generator:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


class HashEncoder:
    """Weight-free deterministic encoder: same input bytes, same row, always."""

    def __init__(self, dim: int = DEFAULT_HASH_DIM):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self.name = f"hash-{dim}"
        n_pixels = 3 * GRID * GRID
        rng = _rng_from(f"{self.name}|image-projection")
        self._proj = rng.standard_normal((n_pixels, dim)) / np.sqrt(n_pixels)

    def encode_images(self, batch: Sequence[ManifestRecord]) -> np.ndarray:
        from PIL import Image  # deferred so text-only exports never touch Pillow

        rows = np.empty((len(batch), self.dim))
        for i, rec in enumerate(batch):
            try:
                blob = Path(rec.payload).read_bytes()
            except OSError as e:
                raise UnreadableInput(rec.id, str(e)) from e
            try:
                with Image.open(io.BytesIO(blob)) as im:
                    im = im.convert("RGB").resize((GRID, GRID), Image.Resampling.BILINEAR)
                    pixels = np.asarray(im, dtype=np.float64)
            except Exception as e:
                raise UnreadableInput(rec.id, f"cannot decode image: {e}") from e
            rows[i] = (pixels / 255.0).reshape(-1) @ self._proj
        return rows

    def encode_texts(self, batch: Sequence[ManifestRecord]) -> np.ndarray:
        rows = np.zeros((len(batch), self.dim))
        for i, rec in enumerate(batch):
            for token in _TOKEN.findall(rec.payload.lower()):
                digest = hashlib.sha256(token.encode("utf-8")).digest()
                bucket = int.from_bytes(digest[:4], "little") % self.dim
                sign = 1.0 if digest[4] & 1 else -1.0
                rows[i, bucket] += sign
        return rows


class ClipEncoder:
    """Wraps a pretrained contrastive checkpoint behind the batch interface."""

    def __init__(self, checkpoint: str, device: str = "cpu"):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except Exception as e:
            raise ModelUnavailable(f"torch/transformers not importable: {e}") from e
        try:
            model = CLIPModel.from_pretrained(checkpoint)
            self._processor = CLIPProcessor.from_pretrained(checkpoint)
        except Exception as e:
            raise ModelUnavailable(f"cannot load checkpoint {checkpoint!r}: {e}") from e
        self._torch = torch
        self._device = device
        self._model = model.eval().to(device)
        self.name = f"clip:{checkpoint}"

    def encode_images(self, batch: Sequence[ManifestRecord]) -> np.ndarray:
        from PIL import Image

        ims = []
        for rec in batch:
            try:
                with Image.open(rec.payload) as im:
                    ims.append(im.convert("RGB"))
            except Exception as e:
                raise UnreadableInput(rec.id, f"cannot decode image: {e}") from e
        with self._torch.no_grad():
            inputs = self._processor(images=ims, return_tensors="pt").to(self._device)
            feats = self._model.get_image_features(**inputs)
        return feats.cpu().numpy().astype(np.float64)

    def encode_texts(self, batch: Sequence[ManifestRecord]) -> np.ndarray:
        with self._torch.no_grad():
            inputs = self._processor(
                text=[r.payload for r in batch],
                return_tensors="pt",
                padding=True,
                truncation=True,
            ).to(self._device)
            feats = self._model.get_text_features(**inputs)
        return feats.cpu().numpy().astype(np.float64)


class PluginAdapter:
    """Adapts a plain payload-level encoder to the record-batch interface.

    The wrapped object sees payload strings only. When a batch call fails,
    the batch is retried one record at a time so the error can name the
    offending manifest id.
    """

    def __init__(self, inner, name: str):
        for attr in ("encode_images", "encode_texts"):
            if not callable(getattr(inner, attr, None)):
                raise ModelUnavailable(f"plugin {name!r} lacks {attr}()")
        self._inner = inner
        self.name = name

    def _call(self, fn, batch: Sequence[ManifestRecord]) -> np.ndarray:
        try:
            return np.asarray(fn([r.payload for r in batch]), dtype=np.float64)
        except Exception:
            for rec in batch:
                try:
                    fn([rec.payload])
                except Exception as e:
                    raise UnreadableInput(rec.id, str(e)) from e
            raise  # batch failed but every record passes alone: not an input problem

    def encode_images(self, batch: Sequence[ManifestRecord]) -> np.ndarray:
        return self._call(self._inner.encode_images, batch)

    def encode_texts(self, batch: Sequence[ManifestRecord]) -> np.ndarray:
        return self._call(self._inner.encode_texts, batch)


def resolve_encoder(model: str, device: str = "cpu") -> Encoder:
    """Map a model name to a ready encoder. Unknown names raise ModelUnavailable."""
    m = _HASH_NAME.match(model)
    if m:
        return HashEncoder(int(m.group(1) or DEFAULT_HASH_DIM))
    if model.startswith("clip:"):
        return ClipEncoder(model[len("clip:") :], device=device)
    if model.startswith("plugin:"):
        spec = model[len("plugin:") :]
        mod_name, _, attr = spec.rpartition(":")
        if not mod_name or not attr:
            raise ModelUnavailable(
                f"plugin spec must look like plugin:<module>:<attr>, got {model!r}"
            )
        try:
            factory = getattr(importlib.import_module(mod_name), attr)
        except Exception as e:
            raise ModelUnavailable(f"cannot import plugin {spec!r}: {e}") from e
        try:
            inner = factory()
        except Exception as e:
            raise ModelUnavailable(f"plugin factory {spec!r} failed: {e}") from e
        return PluginAdapter(inner, name=model)
    raise ModelUnavailable(f"unknown model {model!r}")
