"""Bit-exact embedding matrix IO, label records, and vector hygiene.

Binary layout (EMB1): bytes 0-3 ASCII "EMB1", bytes 4-7 u32 LE version = 1,
bytes 8-11 u32 LE row count N, bytes 12-15 u32 LE dim d, then N*d float32 LE
row-major. Row ids live in a sidecar text file "<path>.ids", one id per line.
Labels are UTF-8 JSON lines with exactly the keys id, text, task.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateId,
    EmptyText,
    IoFailure,
    MalformedHeader,
    MalformedLine,
    NonFiniteValue,
    TruncatedPayload,
    ZeroVector,
)

MAGIC = b"EMB1"
VERSION = 1
HEADER_LEN = 16


@dataclass(frozen=True)
class EmbeddingSet:
    """An immutable N x d float32 matrix with one opaque string id per row.

    float64 (or any non-float32) data is rejected rather than cast so that
    files round-trip bit-exactly across languages.
    """

    data: np.ndarray
    ids: tuple[str, ...]

    def __post_init__(self):
        if not isinstance(self.data, np.ndarray) or self.data.dtype != np.float32:
            raise TypeError("embedding data must be a float32 ndarray (cast explicitly)")
        if self.data.ndim != 2:
            raise ValueError("embedding data must be 2-D (N x d)")
        if self.data.shape[1] < 1:
            raise ValueError("embedding dim must be >= 1")
        object.__setattr__(self, "ids", tuple(self.ids))
        if len(self.ids) != self.data.shape[0]:
            raise ValueError(
                f"ids length {len(self.ids)} != row count {self.data.shape[0]}"
            )
        if len(set(self.ids)) != len(self.ids):
            raise DuplicateId("duplicate row ids")
        if self.data.size and not np.isfinite(self.data).all():
            raise NonFiniteValue("embedding data contains NaN/Inf")
        self.data.setflags(write=False)

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (
            self.ids == other.ids
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )


@dataclass(frozen=True)
class LabelRecord:
    """Target text for one row id under one task tag."""

    id: str
    text: str
    task: str


def read_embeddings(path) -> EmbeddingSet:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    if len(blob) < HEADER_LEN:
        raise MalformedHeader(f"{path}: file shorter than the 16-byte header")
    if blob[:4] != MAGIC:
        raise MalformedHeader(f"{path}: bad magic {blob[:4]!r}")
    version, count, dim = struct.unpack_from("<III", blob, 4)
    if version != VERSION:
        raise MalformedHeader(f"{path}: unsupported version {version}")
    if dim < 1:
        raise MalformedHeader(f"{path}: dim must be >= 1, got {dim}")
    expected = HEADER_LEN + 4 * count * dim
    if len(blob) != expected:
        raise TruncatedPayload(
            f"{path}: {len(blob)} bytes, expected {expected} for N={count} d={dim}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=HEADER_LEN).reshape(count, dim)
    data = np.ascontiguousarray(data)
    if data.size and not np.isfinite(data).all():
        raise NonFiniteValue(f"{path}: payload contains NaN/Inf")

    ids_path = Path(str(path) + ".ids")
    try:
        id_text = ids_path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot read id sidecar {ids_path}: {e}") from e
    ids = id_text.splitlines()
    if len(ids) != count:
        raise IoFailure(f"{ids_path}: {len(ids)} ids for {count} rows")
    if len(set(ids)) != len(ids):
        raise DuplicateId(f"{ids_path}: duplicate ids")
    return EmbeddingSet(data=data, ids=tuple(ids))


def write_embeddings(emb: EmbeddingSet, path) -> None:
    path = Path(path)
    header = MAGIC + struct.pack("<III", VERSION, emb.count, emb.dim)
    payload = np.ascontiguousarray(emb.data, dtype="<f4").tobytes()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(header + payload)
        Path(str(path) + ".ids").write_text(
            "".join(f"{i}\n" for i in emb.ids), encoding="utf-8"
        )
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def l2_normalize(emb: EmbeddingSet) -> EmbeddingSet:
    """Scale each row to unit Euclidean norm. Raises ZeroVector on a zero row."""
    data = emb.data.astype(np.float64)
    norms = np.linalg.norm(data, axis=1)
    zero_rows = np.flatnonzero(norms == 0.0)
    if zero_rows.size:
        raise ZeroVector(int(zero_rows[0]))
    out = (data / norms[:, None]).astype(np.float32)
    return EmbeddingSet(data=out, ids=emb.ids)


def read_labels(path) -> list[LabelRecord]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    records = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedLine(line_no, str(e)) from e
        if not isinstance(obj, dict) or set(obj) != {"id", "text", "task"}:
            raise MalformedLine(line_no, "expected exactly the keys id, text, task")
        if not all(isinstance(obj[k], str) for k in ("id", "text", "task")):
            raise MalformedLine(line_no, "id, text, task must be strings")
        text = " ".join(obj["text"].split())
        if not text:
            raise EmptyText(line_no)
        records.append(LabelRecord(id=obj["id"], text=text, task=obj["task"]))
    return records


def write_labels(records: list[LabelRecord], path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            for r in records:
                fh.write(json.dumps({"id": r.id, "text": r.text, "task": r.task}) + "\n")
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e
