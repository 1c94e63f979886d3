"""Modality alignment MLP: maps image embeddings into text-embedding space.

Architecture: d_in -> hidden -> hidden -> d_out with ReLU on both hidden
layers and an identity output. Trained with Adam on the mean-over-pairs
squared-Euclidean loss. All math runs in float64; the ALN1 file format
stores float32.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyAnchorSet,
    EmptyBatch,
    IoFailure,
    MalformedHeader,
    NonFiniteLoss,
    TruncatedPayload,
)

MAGIC = b"ALN1"
VERSION = 1
HIDDEN_DEFAULT = 128
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class AlignerParams:
    w1: np.ndarray  # (d_in, hidden)
    b1: np.ndarray
    w2: np.ndarray  # (hidden, hidden)
    b2: np.ndarray
    w3: np.ndarray  # (hidden, d_out)
    b3: np.ndarray
    init_seed: int = 0

    @property
    def d_in(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def d_out(self) -> int:
        return self.w3.shape[1]

    def tensors(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)


@dataclass(frozen=True)
class AlignTrainConfig:
    learning_rate: float = 0.001
    epochs: int = 15
    batch_size: int = 16
    init_seed: int = 0
    shuffle_seed: int = 0
    hidden: int = HIDDEN_DEFAULT

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def init_aligner(d_in: int, d_out: int, seed: int, hidden: int = HIDDEN_DEFAULT) -> AlignerParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    if d_in < 1 or d_out < 1 or hidden < 1:
        raise ValueError("layer dims must be >= 1")
    rng = np.random.default_rng(seed)

    def layer(fan_in: int, fan_out: int) -> np.ndarray:
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    return AlignerParams(
        w1=layer(d_in, hidden),
        b1=np.zeros(hidden),
        w2=layer(hidden, hidden),
        b2=np.zeros(hidden),
        w3=layer(hidden, d_out),
        b3=np.zeros(d_out),
        init_seed=seed,
    )


def align_forward(params: AlignerParams, x: np.ndarray) -> np.ndarray:
    """y = W3·relu(W2·relu(W1·x + b1) + b2) + b3, for one row or a batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.d_in:
        raise DimensionMismatch(f"expected input dim {params.d_in}, got {x.shape}")
    h1 = np.maximum(x @ params.w1 + params.b1, 0.0)
    h2 = np.maximum(h1 @ params.w2 + params.b2, 0.0)
    y = h2 @ params.w3 + params.b3
    return y[0] if single else y


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over rows of squared Euclidean distance (not over coordinates)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 2:
        raise DimensionMismatch(f"shapes {pred.shape} vs {target.shape}")
    if pred.shape[0] == 0:
        raise EmptyBatch("loss over zero pairs is undefined")
    return float(((pred - target) ** 2).sum(axis=1).mean())


def align_gradient(
    params: AlignerParams, batch_x: np.ndarray, batch_y: np.ndarray
) -> tuple[dict[str, np.ndarray], float]:
    """Analytic gradients of mse_loss(align_forward(x), y); ReLU'(0) = 0."""
    x = np.asarray(batch_x, dtype=np.float64)
    y = np.asarray(batch_y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"batch shapes {x.shape} vs {y.shape}")
    if x.shape[1] != params.d_in or y.shape[1] != params.d_out:
        raise DimensionMismatch("batch dims do not match aligner dims")
    if x.shape[0] == 0:
        raise EmptyBatch("cannot take gradients over an empty batch")

    n = x.shape[0]
    z1 = x @ params.w1 + params.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ params.w2 + params.b2
    h2 = np.maximum(z2, 0.0)
    pred = h2 @ params.w3 + params.b3

    diff = pred - y
    loss = float((diff**2).sum(axis=1).mean())
    dpred = 2.0 * diff / n
    dw3 = h2.T @ dpred
    db3 = dpred.sum(axis=0)
    dz2 = (dpred @ params.w3.T) * (z2 > 0.0)
    dw2 = h1.T @ dz2
    db2 = dz2.sum(axis=0)
    dz1 = (dz2 @ params.w2.T) * (z1 > 0.0)
    dw1 = x.T @ dz1
    db1 = dz1.sum(axis=0)
    grads = {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2, "w3": dw3, "b3": db3}
    return grads, loss


def train_aligner(
    anchor_images: np.ndarray,
    anchor_texts: np.ndarray,
    cfg: AlignTrainConfig,
) -> tuple[AlignerParams, list[float]]:
    """Adam over shuffled mini-batches; returns params and per-epoch mean loss.

    The last partial batch is kept. Deterministic given (init_seed, shuffle_seed).
    """
    x = np.asarray(anchor_images, dtype=np.float64)
    y = np.asarray(anchor_texts, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise DimensionMismatch("anchor matrices must be 2-D")
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{x.shape[0]} image rows vs {y.shape[0]} text rows")
    if x.shape[0] == 0:
        raise EmptyAnchorSet("no anchor pairs to train on")

    params = init_aligner(x.shape[1], y.shape[1], cfg.init_seed, hidden=cfg.hidden)
    state = {k: v.copy() for k, v in zip(("w1", "b1", "w2", "b2", "w3", "b3"), params.tensors())}
    m = {k: np.zeros_like(v) for k, v in state.items()}
    v = {k: np.zeros_like(val) for k, val in state.items()}
    rng = np.random.default_rng(cfg.shuffle_seed)
    n = x.shape[0]
    step = 0
    history: list[float] = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            cur = AlignerParams(init_seed=cfg.init_seed, **state)
            grads, loss = align_gradient(cur, x[idx], y[idx])
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"epoch {epoch}, batch at {start}: loss={loss}")
            total += loss * len(idx)
            step += 1
            bc1 = 1.0 - ADAM_BETA1**step
            bc2 = 1.0 - ADAM_BETA2**step
            for key, g in grads.items():
                m[key] = ADAM_BETA1 * m[key] + (1.0 - ADAM_BETA1) * g
                v[key] = ADAM_BETA2 * v[key] + (1.0 - ADAM_BETA2) * g * g
                state[key] = state[key] - cfg.learning_rate * (m[key] / bc1) / (
                    np.sqrt(v[key] / bc2) + ADAM_EPS
                )
        history.append(total / n)
        for val in state.values():
            if not np.isfinite(val).all():
                raise NonFiniteLoss(f"non-finite parameters after epoch {epoch}")
    return AlignerParams(init_seed=cfg.init_seed, **state), history


def identity_aligner(dim: int) -> AlignerParams:
    """A pass-through map for the no-anchor baseline (requires d_in == d_out).

    Uses non-negative/negative splitting so ReLU layers carry any sign:
    x == relu(x) - relu(-x) reassembled by the output layer.
    """
    w1 = np.concatenate([np.eye(dim), -np.eye(dim)], axis=1)
    w2 = np.eye(2 * dim)
    w3 = np.concatenate([np.eye(dim), -np.eye(dim)], axis=0)
    return AlignerParams(
        w1=w1,
        b1=np.zeros(2 * dim),
        w2=w2,
        b2=np.zeros(2 * dim),
        w3=w3,
        b3=np.zeros(dim),
        init_seed=0,
    )


def save_aligner(params: AlignerParams, path) -> None:
    path = Path(path)
    header = MAGIC + struct.pack("<III", VERSION, params.d_in, params.d_out)
    payload = b"".join(
        np.ascontiguousarray(t, dtype="<f4").tobytes() for t in params.tensors()
    )
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(header + payload)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def _hidden_from_float_count(n_floats: int, d_in: int, d_out: int) -> int:
    # n_floats = h^2 + h*(d_in + d_out + 2) + d_out, solved for integer h
    b = d_in + d_out + 2
    disc = b * b + 4 * (n_floats - d_out)
    root = math.isqrt(disc)
    if root * root != disc or (root - b) % 2 != 0:
        raise TruncatedPayload("payload length matches no hidden width")
    h = (root - b) // 2
    if h < 1:
        raise TruncatedPayload("payload length matches no hidden width")
    return h


def load_aligner(path) -> AlignerParams:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise MalformedHeader(f"{path}: not an ALN1 file")
    version, d_in, d_out = struct.unpack_from("<III", blob, 4)
    if version != VERSION:
        raise MalformedHeader(f"{path}: unsupported version {version}")
    body = len(blob) - 16
    if body % 4 != 0:
        raise TruncatedPayload(f"{path}: payload not a float32 multiple")
    hidden = _hidden_from_float_count(body // 4, d_in, d_out)
    floats = np.frombuffer(blob, dtype="<f4", offset=16).astype(np.float64)
    shapes = [(d_in, hidden), (hidden,), (hidden, hidden), (hidden,), (hidden, d_out), (d_out,)]
    tensors = []
    pos = 0
    for shape in shapes:
        size = int(np.prod(shape))
        tensors.append(floats[pos : pos + size].reshape(shape))
        pos += size
    if pos != floats.size:
        raise TruncatedPayload(f"{path}: payload size mismatch")
    return AlignerParams(*tensors)


def write_loss_csv(history: list[float], path) -> None:
    path = Path(path)
    lines = ["epoch,mean_loss"] + [f"{i + 1},{loss!r}" for i, loss in enumerate(history)]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(f"{l}\n" for l in lines), encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def as_float32(params: AlignerParams) -> AlignerParams:
    """Round-trip through float32 so in-memory params match a saved file."""
    return replace(
        params,
        **{
            k: t.astype(np.float32).astype(np.float64)
            for k, t in zip(("w1", "b1", "w2", "b2", "w3", "b3"), params.tensors())
        },
    )
