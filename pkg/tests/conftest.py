"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np

from ftda.embedding_io import EmbeddingSet


def make_set(rows, prefix: str = "r") -> EmbeddingSet:
    data = np.ascontiguousarray(rows, dtype=np.float32)
    if data.ndim != 2:
        raise ValueError("rows must be 2-D")
    ids = tuple(f"{prefix}{i:04d}" for i in range(data.shape[0]))
    return EmbeddingSet(data, ids)


def random_set(rng: np.random.Generator, n: int, d: int, prefix: str = "r") -> EmbeddingSet:
    return make_set(rng.normal(size=(n, d)), prefix=prefix)
