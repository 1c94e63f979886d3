"""Scalar modality-gap measurement and a deterministic 2-D PCA projection.

Two complementary scalars: distance between the modality centroids, and the
mean Euclidean distance between row-paired image/text embeddings. The PCA
path exports plot-ready coordinates without any RNG.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding_io import EmbeddingSet
from .errors import (
    CountMismatch,
    DegenerateCovariance,
    DimensionMismatch,
    EmptyInput,
    IoFailure,
)


@dataclass(frozen=True)
class GapReport:
    centroid_gap: float
    mean_pair_gap: float | None  # None when the sets cannot be row-paired
    n_pairs: int
    subset: str = "all"  # which rows were compared, e.g. "anchors" or "held-out"


def modality_gap(
    images: EmbeddingSet,
    texts: EmbeddingSet,
    subset: str = "all",
    paired: bool | None = None,
) -> GapReport:
    """Centroid distance always; mean row-paired distance when counts allow.

    paired=None pairs automatically iff the counts match; paired=True demands
    a row pairing and raises CountMismatch when counts differ.
    """
    if images.dim != texts.dim:
        raise DimensionMismatch(f"dims {images.dim} vs {texts.dim}")
    if images.count == 0 or texts.count == 0:
        raise EmptyInput("both sets need at least one row")
    if paired is None:
        paired = images.count == texts.count
    if paired and images.count != texts.count:
        raise CountMismatch(f"{images.count} image rows vs {texts.count} text rows")
    img = images.data.astype(np.float64)
    txt = texts.data.astype(np.float64)
    centroid_gap = float(np.linalg.norm(img.mean(axis=0) - txt.mean(axis=0)))
    mean_pair_gap = float(np.linalg.norm(img - txt, axis=1).mean()) if paired else None
    return GapReport(
        centroid_gap=centroid_gap,
        mean_pair_gap=mean_pair_gap,
        n_pairs=images.count if paired else 0,
        subset=subset,
    )


def project_2d(sets: list[EmbeddingSet]) -> list[np.ndarray]:
    """Shared-basis PCA: fit on the union, project each set to N x 2.

    Basis = top-2 eigenvectors of the covariance of the mean-centered union,
    each sign-fixed so its largest-magnitude component is positive.
    """
    if not sets:
        raise ValueError("need at least one embedding set")
    dim = sets[0].dim
    for s in sets:
        if s.dim != dim:
            raise DimensionMismatch("all sets must share dim")
    union = np.concatenate([s.data.astype(np.float64) for s in sets], axis=0)
    if union.shape[0] < 2:
        raise ValueError("need at least 2 rows in total")
    centered = union - union.mean(axis=0)
    cov = centered.T @ centered / union.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals[-1] <= 0.0:
        raise DegenerateCovariance("all rows coincide; no principal directions")
    basis = []
    for col in (eigvecs[:, -1], eigvecs[:, -2] if dim >= 2 else eigvecs[:, -1] * 0.0):
        lead = col[np.abs(col).argmax()] if np.abs(col).max() > 0 else 1.0
        basis.append(col if lead > 0 else -col)
    basis_mat = np.stack(basis, axis=1)  # (d, 2)

    mean = union.mean(axis=0)
    return [(s.data.astype(np.float64) - mean) @ basis_mat for s in sets]


def write_gap_csv(
    reports: dict[str, GapReport],
    path,
    projections: dict[str, tuple[EmbeddingSet, np.ndarray]] | None = None,
) -> None:
    """Summary rows `metric,value`; optional per-point rows in a sibling file.

    The projection file (``<stem>.points.csv``) has columns
    set_name,row_id,x,y so any plotting tool can consume it.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            for name, report in reports.items():
                writer.writerow([f"{name}.centroid_gap", repr(report.centroid_gap)])
                pair = "" if report.mean_pair_gap is None else repr(report.mean_pair_gap)
                writer.writerow([f"{name}.mean_pair_gap", pair])
                writer.writerow([f"{name}.n_pairs", report.n_pairs])
                writer.writerow([f"{name}.subset", report.subset])
        if projections:
            points_path = path.with_suffix(".points.csv")
            with points_path.open("w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["set_name", "row_id", "x", "y"])
                for name, (emb, coords) in projections.items():
                    for row_id, (x, y) in zip(emb.ids, coords):
                        writer.writerow([name, row_id, repr(float(x)), repr(float(y))])
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e
