"""Command line front end. Usage errors exit 1, data errors exit 2."""

from __future__ import annotations

import argparse
import sys

from .errors import ExporterError
from .export import ExportJob, export_embeddings


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> _Parser:
    p = _Parser(
        prog="ftda-export",
        description="Export encoder embeddings to EMB1 interchange files.",
    )
    p.add_argument("--manifest", required=True, help="line-delimited JSON manifest")
    p.add_argument("--model", default="hash-64", help="encoder name (default: hash-64)")
    p.add_argument("--image-out", help="EMB1 path for image rows")
    p.add_argument("--text-out", help="EMB1 path for text rows")
    p.add_argument("--labels-out", help="JSONL path for text label records")
    p.add_argument("--task", default="default", help="task tag on label records (default: default)")
    p.add_argument("--batch-size", type=int, default=32, help="records per encoder call (default: 32)")
    p.add_argument("--device", default="cpu", help="device for weight-backed encoders (default: cpu)")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        job = ExportJob(
            model=args.model,
            manifest=args.manifest,
            image_out=args.image_out,
            text_out=args.text_out,
            labels_out=args.labels_out,
            batch_size=args.batch_size,
            device=args.device,
            task=args.task,
        )
        result = export_embeddings(job)
    except (ExporterError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(
        f"model={args.model} images={result.image_count} texts={result.text_count} "
        f"files={len(result.files)}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
