"""Batched export of a manifest into the interchange files.

Inference runs in fixed-size batches; rows are stitched back together and
written once, in manifest order, by a single writer. Row i of each output
matrix always corresponds to the i-th record of its modality in the
manifest file.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .encoders import resolve_encoder
from .errors import ExportFailure
from .formats import write_embedding_file, write_label_file
from .manifest import ManifestRecord, read_manifest


@dataclass(frozen=True)
class ExportJob:
    """One export request.

    Output paths are per modality. A path may be None only when the
    manifest holds no record of that modality. labels_out, when set, gets
    one {id, text, task} line per text record with text = the payload and
    task = the job's task tag.
    """

    model: str
    manifest: str | Path
    image_out: str | Path | None = None
    text_out: str | Path | None = None
    labels_out: str | Path | None = None
    batch_size: int = 32
    device: str = "cpu"
    task: str = "default"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class ExportResult:
    files: tuple[str, ...]
    image_count: int
    text_count: int
    image_dim: int | None
    text_dim: int | None


def _encode_in_batches(
    fn: Callable[[Sequence[ManifestRecord]], np.ndarray],
    records: list[ManifestRecord],
    batch_size: int,
    what: str,
) -> np.ndarray:
    chunks: list[np.ndarray] = []
    dim: int | None = None
    for start in range(0, len(records), batch_size):
        batch = records[start : start + batch_size]
        out = np.asarray(fn(batch), dtype=np.float64)
        if out.ndim != 2 or out.shape[0] != len(batch):
            raise ExportFailure(
                f"{what} encoder returned shape {out.shape} for a batch of {len(batch)}"
            )
        if dim is None:
            dim = out.shape[1]
        elif out.shape[1] != dim:
            raise ExportFailure(f"{what} encoder changed dim from {dim} to {out.shape[1]}")
        if out.size and not np.isfinite(out).all():
            raise ExportFailure(f"{what} encoder produced NaN/Inf")
        chunks.append(out)
    return np.concatenate(chunks, axis=0)


def export_embeddings(job: ExportJob) -> ExportResult:
    """Encode every manifest record and write the interchange files.

    Returns the written paths and per-modality counts and dims. Raises
    ModelUnavailable, UnreadableInput, manifest errors, or ExportFailure.
    """
    records = read_manifest(job.manifest)
    images = [r for r in records if r.kind == "image"]
    texts = [r for r in records if r.kind == "text"]
    if images and job.image_out is None:
        raise ValueError("manifest has image records but image_out is not set")
    if texts and job.text_out is None:
        raise ValueError("manifest has text records but text_out is not set")

    encoder = resolve_encoder(job.model, device=job.device)

    files: list[str] = []
    image_dim: int | None = None
    text_dim: int | None = None
    if images:
        rows = _encode_in_batches(encoder.encode_images, images, job.batch_size, "image")
        image_dim = rows.shape[1]
        write_embedding_file(job.image_out, rows, [r.id for r in images])
        files += [str(job.image_out), str(job.image_out) + ".ids"]
    if texts:
        rows = _encode_in_batches(encoder.encode_texts, texts, job.batch_size, "text")
        text_dim = rows.shape[1]
        write_embedding_file(job.text_out, rows, [r.id for r in texts])
        files += [str(job.text_out), str(job.text_out) + ".ids"]
        if job.labels_out is not None:
            write_label_file(job.labels_out, [(r.id, r.payload, job.task) for r in texts])
            files.append(str(job.labels_out))
    return ExportResult(
        files=tuple(files),
        image_count=len(images),
        text_count=len(texts),
        image_dim=image_dim,
        text_dim=text_dim,
    )
