"""Anchor selection on image embeddings: seeded KMeans and farthest point sampling.

Both samplers return actual dataset row indices, never synthetic points.
FPS is RNG-free: the first anchor is the row farthest from the dataset mean,
every later anchor maximizes the minimum distance to the rows already chosen,
and all ties break toward the lowest row index.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding_io import EmbeddingSet
from .errors import EmptyInput, IoFailure, KTooLarge

KMEANS = "KMEANS"
FPS = "FPS"


@dataclass(frozen=True)
class AnchorSet:
    """K distinct row indices into a source EmbeddingSet, in selection order."""

    indices: tuple[int, ...]
    method: str
    seed: int
    k: int

    def __post_init__(self):
        if self.method not in (KMEANS, FPS):
            raise ValueError(f"unknown sampling method {self.method!r}")
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("anchor indices must be distinct")


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    objective: float
    objective_history: tuple[float, ...]


def _check_k(n: int, k: int) -> None:
    if n == 0:
        raise EmptyInput("no rows to sample from")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > n:
        raise KTooLarge(f"k={k} exceeds row count {n}")


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, (N, C), clamped against cancellation."""
    d2 = (
        (points * points).sum(axis=1)[:, None]
        - 2.0 * points @ centers.T
        + (centers * centers).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    centroids[0] = points[rng.integers(n)]
    d2 = _sq_dists(points, centroids[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total > 0.0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, _sq_dists(points, centroids[j : j + 1])[:, 0])
    return centroids


def kmeans(emb: EmbeddingSet, k: int, seed: int, max_iter: int = 100) -> KMeansResult:
    """Lloyd iterations from k-means++ seeding.

    Stops when assignments stop changing or after max_iter iterations.
    The objective (sum of squared distances to the assigned centroid) is
    non-increasing across iterations; empty clusters are reseeded at the
    rows currently farthest from their assigned centroids.
    """
    _check_k(emb.count, k)
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    points = emb.data.astype(np.float64)
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(points, k, rng)

    prev_assign = None
    history: list[float] = []
    assignments = np.zeros(emb.count, dtype=np.int64)
    for _ in range(max_iter):
        d2 = _sq_dists(points, centroids)
        assignments = d2.argmin(axis=1)
        mins = d2[np.arange(emb.count), assignments]
        objective = float(mins.sum())
        if history and objective > history[-1] + 1e-9 * max(1.0, history[-1]):
            raise RuntimeError("kmeans objective increased")
        history.append(objective)
        if prev_assign is not None and np.array_equal(assignments, prev_assign):
            break
        prev_assign = assignments

        new_centroids = np.empty_like(centroids)
        empty = []
        for j in range(k):
            members = assignments == j
            if members.any():
                new_centroids[j] = points[members].mean(axis=0)
            else:
                empty.append(j)
        if empty:
            # farthest rows from their assigned centroids, ties to lowest index
            order = np.lexsort((np.arange(emb.count), -mins))
            for slot, j in enumerate(empty):
                new_centroids[j] = points[order[slot]]
        centroids = new_centroids

    return KMeansResult(
        centroids=centroids,
        assignments=assignments,
        objective=history[-1],
        objective_history=tuple(history),
    )


def select_anchors_kmeans(
    emb: EmbeddingSet, k: int, seed: int, max_iter: int = 100
) -> AnchorSet:
    """Pick, per centroid, the nearest dataset row (ties to lowest index).

    When two centroids claim the same row, later centroids fall back to their
    next-nearest unused row, so exactly k distinct rows come back.
    """
    result = kmeans(emb, k, seed, max_iter)
    points = emb.data.astype(np.float64)
    d2 = _sq_dists(points, result.centroids)
    used: set[int] = set()
    indices: list[int] = []
    for j in range(k):
        for row in np.argsort(d2[:, j], kind="stable"):
            if int(row) not in used:
                used.add(int(row))
                indices.append(int(row))
                break
    return AnchorSet(indices=tuple(indices), method=KMEANS, seed=seed, k=k)


def fps(emb: EmbeddingSet, k: int) -> AnchorSet:
    """Greedy max-min selection starting from the row farthest from the mean."""
    _check_k(emb.count, k)
    points = emb.data.astype(np.float64)
    mean = points.mean(axis=0)
    first = int(_sq_dists(points, mean[None, :])[:, 0].argmax())
    selected = [first]
    min_d2 = _sq_dists(points, points[first][None, :])[:, 0]
    min_d2[first] = -np.inf
    for _ in range(1, k):
        nxt = int(min_d2.argmax())
        selected.append(nxt)
        min_d2 = np.minimum(min_d2, _sq_dists(points, points[nxt][None, :])[:, 0])
        min_d2[selected] = -np.inf
    return AnchorSet(indices=tuple(selected), method=FPS, seed=0, k=k)


def write_anchors(anchors: AnchorSet, path) -> None:
    path = Path(path)
    lines = [f"# method={anchors.method} k={anchors.k} seed={anchors.seed}"]
    lines += [str(i) for i in anchors.indices]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(f"{l}\n" for l in lines), encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def read_anchors(path) -> AnchorSet:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    if not lines or not lines[0].startswith("# "):
        raise IoFailure(f"{path}: missing anchor header line")
    fields = dict(part.split("=", 1) for part in lines[0][2:].split())
    indices = tuple(int(l) for l in lines[1:] if l.strip())
    return AnchorSet(
        indices=indices,
        method=fields["method"],
        seed=int(fields["seed"]),
        k=int(fields["k"]),
    )
