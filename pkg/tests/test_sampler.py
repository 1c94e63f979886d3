"""Anchor selection: KMeans and farthest point sampling against brute force.

Oracles here are deliberately naive re-implementations: exhaustive partition
search for tiny KMeans instances and a literal greedy max-min loop for FPS.
"""

import itertools

import numpy as np
import pytest

from conftest import make_set, random_set
from ftda.errors import EmptyInput, KTooLarge
from ftda.sampler import (
    FPS,
    KMEANS,
    AnchorSet,
    fps,
    kmeans,
    read_anchors,
    select_anchors_kmeans,
    write_anchors,
)

FOUR_POINTS = [[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]


def brute_force_fps(points: np.ndarray, k: int) -> list[int]:
    """Greedy max-min selection, ties to the lowest index, literal loops."""
    n = len(points)
    mean = points.mean(axis=0)
    start = 0
    best = -1.0
    for i in range(n):
        d = float(np.linalg.norm(points[i] - mean))
        if d > best:
            best = d
            start = i
    chosen = [start]
    while len(chosen) < k:
        cand, cand_d = -1, -1.0
        for i in range(n):
            if i in chosen:
                continue
            d = min(float(np.linalg.norm(points[i] - points[j])) for j in chosen)
            if d > cand_d:
                cand, cand_d = i, d
        chosen.append(cand)
    return chosen


def best_two_partition_cost(points: np.ndarray) -> tuple[float, frozenset]:
    """Exhaustive optimum over all 2-partitions of a tiny point set."""
    n = len(points)
    best_cost, best_split = float("inf"), None
    for size in range(1, n):
        for group in itertools.combinations(range(n), size):
            a = points[list(group)]
            b = points[[i for i in range(n) if i not in group]]
            cost = ((a - a.mean(axis=0)) ** 2).sum() + ((b - b.mean(axis=0)) ** 2).sum()
            if cost < best_cost:
                best_cost, best_split = cost, frozenset(group)
    return best_cost, best_split


def test_kmeans_k_equals_n_zero_objective():
    emb = make_set(FOUR_POINTS)
    result = kmeans(emb, k=4, seed=0)
    assert result.objective == pytest.approx(0.0, abs=1e-12)
    assert len(np.unique(result.assignments)) == 4


def test_kmeans_two_clusters_recovers_global_optimum():
    emb = make_set(FOUR_POINTS)
    result = kmeans(emb, k=2, seed=0)
    expected_cost, expected_split = best_two_partition_cost(np.asarray(FOUR_POINTS))
    assert expected_split in (frozenset({0, 1}), frozenset({2, 3}))
    assert result.objective == pytest.approx(expected_cost, abs=1e-9)
    groups = {
        frozenset(np.flatnonzero(result.assignments == c).tolist())
        for c in np.unique(result.assignments)
    }
    assert groups == {frozenset({0, 1}), frozenset({2, 3})}
    centroids = sorted(map(tuple, np.round(result.centroids, 9).tolist()))
    assert centroids == [(0.0, 0.5), (10.0, 0.5)]


def test_kmeans_seeded_determinism():
    rng = np.random.default_rng(3)
    emb = random_set(rng, 40, 5)
    r1 = kmeans(emb, k=6, seed=11)
    r2 = kmeans(emb, k=6, seed=11)
    assert np.array_equal(r1.centroids, r2.centroids)
    assert np.array_equal(r1.assignments, r2.assignments)


def test_kmeans_objective_matches_assignment_cost():
    rng = np.random.default_rng(5)
    emb = random_set(rng, 60, 4)
    result = kmeans(emb, k=5, seed=2)
    cost = 0.0
    for i in range(emb.count):
        diff = emb.data[i].astype(np.float64) - result.centroids[result.assignments[i]]
        cost += float(diff @ diff)
    assert result.objective == pytest.approx(cost, rel=1e-12)


def test_kmeans_k_too_large():
    emb = make_set([[0.0], [1.0]])
    with pytest.raises(KTooLarge):
        kmeans(emb, k=3, seed=0)


def test_kmeans_empty_input():
    emb = make_set(np.zeros((0, 3)))
    with pytest.raises(EmptyInput):
        kmeans(emb, k=1, seed=0)


def test_select_anchors_kmeans_four_point_example():
    emb = make_set(FOUR_POINTS)
    anchors = select_anchors_kmeans(emb, k=2, seed=0)
    # each centroid sits between two rows at equal distance; tie -> lower index
    assert sorted(anchors.indices) == [0, 2]
    assert anchors.method == KMEANS
    assert anchors.k == 2


def test_select_anchors_k_equals_n():
    emb = make_set(FOUR_POINTS)
    anchors = select_anchors_kmeans(emb, k=4, seed=1)
    assert sorted(anchors.indices) == [0, 1, 2, 3]


def test_select_anchors_are_nearest_dataset_rows():
    rng = np.random.default_rng(7)
    emb = random_set(rng, 50, 6)
    seed = 13
    anchors = select_anchors_kmeans(emb, k=8, seed=seed)
    result = kmeans(emb, k=8, seed=seed)
    data = emb.data.astype(np.float64)
    used = set()
    for centroid in result.centroids:
        dists = np.linalg.norm(data - centroid, axis=1)
        order = np.argsort(dists, kind="stable")
        nearest = next(int(i) for i in order if int(i) not in used)
        used.add(nearest)
    assert set(anchors.indices) == used


def test_fps_line_example():
    emb = make_set([[0.0], [1.0], [10.0]])
    anchors = fps(emb, k=2)
    assert list(anchors.indices) == [2, 0]
    assert anchors.method == FPS


def test_fps_k1_farthest_from_mean():
    emb = make_set([[0.0], [1.0], [10.0]])
    assert list(fps(emb, k=1).indices) == [2]


def test_fps_k_equals_n_permutation():
    rng = np.random.default_rng(1)
    emb = random_set(rng, 12, 3)
    anchors = fps(emb, k=12)
    assert sorted(anchors.indices) == list(range(12))


def test_fps_matches_brute_force_greedy():
    rng = np.random.default_rng(21)
    for trial in range(30):
        n = int(rng.integers(2, 12))
        k = int(rng.integers(1, n + 1))
        emb = random_set(rng, n, 3)
        got = list(fps(emb, k).indices)
        want = brute_force_fps(emb.data.astype(np.float64), k)
        assert got == want, f"trial {trial}: {got} != {want}"


def test_fps_stepwise_optimality():
    rng = np.random.default_rng(4)
    emb = random_set(rng, 60, 4)
    anchors = list(fps(emb, k=10).indices)
    pts = emb.data.astype(np.float64)
    for t in range(1, len(anchors)):
        selected = anchors[:t]
        chosen = anchors[t]
        min_d = {
            i: min(float(np.linalg.norm(pts[i] - pts[j])) for j in selected)
            for i in range(emb.count)
            if i not in selected
        }
        best = max(min_d.values())
        assert min_d[chosen] == pytest.approx(best, rel=1e-12)


def test_fps_spread_beats_random():
    rng = np.random.default_rng(99)
    wins = 0
    for _ in range(100):
        emb = random_set(rng, 200, 8)
        k = 10
        sel = list(fps(emb, k).indices)
        rand = rng.choice(200, size=k, replace=False)
        pts = emb.data.astype(np.float64)

        def min_pair(idx):
            d = np.linalg.norm(pts[idx][:, None, :] - pts[idx][None, :, :], axis=2)
            return d[np.triu_indices(len(idx), k=1)].min()

        if min_pair(sel) >= min_pair(rand):
            wins += 1
    assert wins >= 95


def test_fps_k_too_large():
    emb = make_set([[0.0], [1.0]])
    with pytest.raises(KTooLarge):
        fps(emb, k=3)


def test_anchor_file_roundtrip(tmp_path):
    anchors = AnchorSet(indices=(2, 0, 1), method=FPS, seed=0, k=3)
    path = tmp_path / "anchors.txt"
    write_anchors(anchors, path)
    header = path.read_text().splitlines()[0]
    assert header == "# method=FPS k=3 seed=0"
    back = read_anchors(path)
    assert back == anchors
