"""Line-delimited export manifests.

One JSON object per line with exactly the keys id, kind, payload. kind is
"image" (payload: a file path) or "text" (payload: the text itself). ids
must be unique across the whole file; blank lines are skipped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DuplicateManifestId, ExportFailure, MalformedManifest

KINDS = ("image", "text")


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    kind: str
    payload: str


def read_manifest(path) -> list[ManifestRecord]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ExportFailure(f"cannot read manifest {path}: {e}") from e
    records: list[ManifestRecord] = []
    seen: set[str] = set()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedManifest(line_no, f"not valid JSON: {e.msg}") from e
        if not isinstance(obj, dict) or set(obj) != {"id", "kind", "payload"}:
            raise MalformedManifest(line_no, "expected exactly the keys id, kind, payload")
        if not all(isinstance(obj[k], str) for k in ("id", "kind", "payload")):
            raise MalformedManifest(line_no, "id, kind, payload must be strings")
        if obj["kind"] not in KINDS:
            raise MalformedManifest(line_no, f"kind must be one of {KINDS}, got {obj['kind']!r}")
        if not obj["id"] or any(c in obj["id"] for c in "\r\n"):
            # the id sidecar is line-based, so ids must be single-line
            raise MalformedManifest(line_no, "id must be non-empty and single-line")
        if not obj["payload"]:
            raise MalformedManifest(line_no, "payload must be non-empty")
        if obj["id"] in seen:
            raise DuplicateManifestId(f"{path}: id {obj['id']!r} appears more than once")
        seen.add(obj["id"])
        records.append(ManifestRecord(id=obj["id"], kind=obj["kind"], payload=obj["payload"]))
    return records
