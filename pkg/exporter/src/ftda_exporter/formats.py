"""Writers for the interchange files the adaptation toolkit reads.

Layout is fixed: bytes 0-3 ASCII "EMB1", bytes 4-7 u32 LE version = 1,
bytes 8-11 u32 LE row count, bytes 12-15 u32 LE dim, then row-major float32
LE data. Row ids go to a "<path>.ids" text sidecar, one id per line. Label
files are UTF-8 JSON lines with exactly the keys id, text, task.

These writers are implemented from the byte layout on purpose. The files
are the only contract between this package and its consumers, so no reader
code is shared or imported.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ExportFailure

MAGIC = b"EMB1"
VERSION = 1


def write_embedding_file(path, rows: np.ndarray, ids: Sequence[str]) -> None:
    """Write one EMB1 file plus its id sidecar.

    rows may be float64; the downcast to float32 happens here and nowhere
    earlier, so encoders keep full precision internally.
    """
    rows = np.asarray(rows)
    if rows.ndim != 2 or rows.shape[1] < 1:
        raise ValueError(f"rows must be 2-D with dim >= 1, got shape {rows.shape}")
    if len(ids) != rows.shape[0]:
        raise ValueError(f"{len(ids)} ids for {rows.shape[0]} rows")
    if len(set(ids)) != len(ids):
        raise ValueError("row ids must be unique")
    if any("\n" in i or "\r" in i for i in ids):
        raise ValueError("row ids must be single-line")
    with np.errstate(over="ignore"):
        data = np.ascontiguousarray(rows, dtype="<f4")
    if data.size and not np.isfinite(data).all():
        # catches NaN/Inf input and float64 values that overflow float32
        raise ValueError("rows are not finite in float32")
    header = MAGIC + struct.pack("<III", VERSION, data.shape[0], data.shape[1])
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(header + data.tobytes())
        Path(str(path) + ".ids").write_text(
            "".join(f"{i}\n" for i in ids), encoding="utf-8"
        )
    except OSError as e:
        raise ExportFailure(f"cannot write {path}: {e}") from e


def write_label_file(path, records: Sequence[tuple[str, str, str]]) -> None:
    """Write (id, text, task) triples as JSON lines."""
    for rid, text, _ in records:
        if not text.split():
            raise ValueError(f"label text for {rid!r} is empty")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            for rid, text, task in records:
                fh.write(json.dumps({"id": rid, "text": text, "task": task}) + "\n")
    except OSError as e:
        raise ExportFailure(f"cannot write {path}: {e}") from e
