"""Synthetic paired-modality data with a controllable cross-space offset.

Both "image" and "text" embeddings are projections of shared class latents
through different random linear maps, plus Gaussian noise. The text side is
additionally shifted by a constant vector, so the two clouds sit apart the
way real dual-encoder outputs do. Class identity is the only signal shared
across the two spaces, which is exactly what an aligner has to recover.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding_io import EmbeddingSet, LabelRecord, write_embeddings, write_labels

_FIRST = (
    "alpha", "bravo", "cedar", "delta", "ember", "fjord",
    "gamma", "harbor", "indigo", "juniper", "kelp", "lumen",
)
_SECOND = (
    "arch", "basin", "crest", "dune", "eddy", "flint",
    "grove", "heath", "inlet", "jetty", "knoll", "ledge",
)


def class_names(n: int, offset: int = 0) -> list[str]:
    """Deterministic distinct two-word class descriptions."""
    combos = [f"{a} {b}" for b in _SECOND for a in _FIRST]
    if offset + n > len(combos):
        raise ValueError(f"at most {len(combos) - offset} classes supported")
    return combos[offset : offset + n]


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 10
    n_texts: int = 200
    n_images: int = 200
    d_latent: int = 16
    d_img: int = 32
    d_txt: int = 32
    noise_sigma: float = 0.05
    gap_offset: float = 1.0
    seed: int = 0
    task: str = "classify"

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.n_texts < self.n_classes or self.n_images < 1:
            raise ValueError("need >=1 text per class and >=1 image")


@dataclass(frozen=True)
class SynthData:
    images: EmbeddingSet
    texts: EmbeddingSet
    labels: list[LabelRecord]  # text-row records then image-row records
    truth: list[LabelRecord]  # image-row records only
    names: list[str]


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    z = rng.normal(size=(n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _balanced_classes(rng: np.random.Generator, n_rows: int, n_classes: int) -> np.ndarray:
    return rng.permutation(np.arange(n_rows) % n_classes)


def make(spec: SynthSpec) -> SynthData:
    rng = np.random.default_rng(spec.seed)
    latents = _unit_rows(rng, spec.n_classes, spec.d_latent)
    a = rng.normal(size=(spec.d_latent, spec.d_img)) / np.sqrt(spec.d_latent)
    b = rng.normal(size=(spec.d_latent, spec.d_txt)) / np.sqrt(spec.d_latent)
    offset = _unit_rows(rng, 1, spec.d_txt)[0] * spec.gap_offset

    img_cls = _balanced_classes(rng, spec.n_images, spec.n_classes)
    txt_cls = _balanced_classes(rng, spec.n_texts, spec.n_classes)
    img = latents[img_cls] @ a + spec.noise_sigma * rng.normal(size=(spec.n_images, spec.d_img))
    txt = latents[txt_cls] @ b + offset
    txt += spec.noise_sigma * rng.normal(size=(spec.n_texts, spec.d_txt))

    names = class_names(spec.n_classes)
    img_ids = tuple(f"img{i:06d}" for i in range(spec.n_images))
    txt_ids = tuple(f"txt{i:06d}" for i in range(spec.n_texts))
    labels = [
        LabelRecord(id=txt_ids[i], text=names[c], task=spec.task)
        for i, c in enumerate(txt_cls)
    ]
    truth = [
        LabelRecord(id=img_ids[i], text=names[c], task=spec.task)
        for i, c in enumerate(img_cls)
    ]
    return SynthData(
        images=EmbeddingSet(img.astype(np.float32), img_ids),
        texts=EmbeddingSet(txt.astype(np.float32), txt_ids),
        labels=labels + truth,
        truth=truth,
        names=names,
    )


def make_multitask(
    spec: SynthSpec, n_classes_b: int | None = None, tasks: tuple[str, str] = ("taska", "taskb")
) -> SynthData:
    """Two independent class factors per image; one text corpus per factor.

    Task-a texts encode only the first factor, task-b texts only the second,
    both in the same text space, so a single decoder can serve both tasks.
    """
    n_a = spec.n_classes
    n_b = n_classes_b if n_classes_b is not None else spec.n_classes
    rng = np.random.default_rng(spec.seed)
    lat_a = _unit_rows(rng, n_a, spec.d_latent)
    lat_b = _unit_rows(rng, n_b, spec.d_latent)
    a = rng.normal(size=(2 * spec.d_latent, spec.d_img)) / np.sqrt(2 * spec.d_latent)
    b = rng.normal(size=(2 * spec.d_latent, spec.d_txt)) / np.sqrt(2 * spec.d_latent)
    offset = _unit_rows(rng, 1, spec.d_txt)[0] * spec.gap_offset

    img_a = _balanced_classes(rng, spec.n_images, n_a)
    img_b = _balanced_classes(rng, spec.n_images, n_b)
    img_lat = np.concatenate([lat_a[img_a], lat_b[img_b]], axis=1)
    img = img_lat @ a + spec.noise_sigma * rng.normal(size=(spec.n_images, spec.d_img))

    half = spec.n_texts // 2
    txt_a_cls = _balanced_classes(rng, half, n_a)
    txt_b_cls = _balanced_classes(rng, spec.n_texts - half, n_b)
    zeros_a = np.zeros((half, spec.d_latent))
    zeros_b = np.zeros((spec.n_texts - half, spec.d_latent))
    txt_lat = np.concatenate(
        [
            np.concatenate([lat_a[txt_a_cls], zeros_a], axis=1),
            np.concatenate([zeros_b, lat_b[txt_b_cls]], axis=1),
        ],
        axis=0,
    )
    txt = txt_lat @ b + offset + spec.noise_sigma * rng.normal(size=(spec.n_texts, spec.d_txt))

    names_a = class_names(n_a)
    names_b = class_names(n_b, offset=n_a)
    img_ids = tuple(f"img{i:06d}" for i in range(spec.n_images))
    txt_ids = tuple(f"txt{i:06d}" for i in range(spec.n_texts))
    labels = [
        LabelRecord(id=txt_ids[i], text=names_a[c], task=tasks[0])
        for i, c in enumerate(txt_a_cls)
    ] + [
        LabelRecord(id=txt_ids[half + i], text=names_b[c], task=tasks[1])
        for i, c in enumerate(txt_b_cls)
    ]
    truth = [
        LabelRecord(id=img_ids[i], text=names_a[c], task=tasks[0])
        for i, c in enumerate(img_a)
    ] + [
        LabelRecord(id=img_ids[i], text=names_b[c], task=tasks[1])
        for i, c in enumerate(img_b)
    ]
    return SynthData(
        images=EmbeddingSet(img.astype(np.float32), img_ids),
        texts=EmbeddingSet(txt.astype(np.float32), txt_ids),
        labels=labels + truth,
        truth=truth,
        names=names_a + names_b,
    )


def save(data: SynthData, out_dir) -> dict[str, Path]:
    """Write images.emb1 (+.ids), texts.emb1 (+.ids), labels.jsonl, truth.jsonl."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "images": out / "images.emb1",
        "texts": out / "texts.emb1",
        "labels": out / "labels.jsonl",
        "truth": out / "truth.jsonl",
    }
    write_embeddings(data.images, paths["images"])
    write_embeddings(data.texts, paths["texts"])
    write_labels(data.labels, paths["labels"])
    write_labels(data.truth, paths["truth"])
    return paths
