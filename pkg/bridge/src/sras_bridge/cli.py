"""Manifest-driven command line: ``sras-bridge manifest.json``."""

from __future__ import annotations

import argparse
import os
import sys

from .encoders import EncoderError
from .exporter import ExportManifest, run_manifest
from .formats import ExportError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sras-bridge",
        description=(
            "Export embedding stores and semantic reward caches for the "
            "selector pipeline from a JSON manifest."
        ),
    )
    parser.add_argument("manifest", help="path to the export manifest (JSON)")
    args = parser.parse_args(sys.argv[1:] if argv is None else argv)
    try:
        if not os.path.exists(args.manifest):
            raise FileNotFoundError(f"manifest not found: {args.manifest}")
        manifest = ExportManifest.from_file(args.manifest)
        summary = run_manifest(manifest)
    except (ExportError, EncoderError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    parts = [f"encoder {summary.encoder}"]
    if summary.store_records or summary.store_dim:
        parts.append(f"{summary.store_records} embeddings (dim {summary.store_dim})")
    if summary.cache_records or summary.skipped:
        parts.append(f"{summary.cache_records} cache records, {summary.skipped} skipped")
    print("bridge: " + "; ".join(parts))
    return 1 if summary.skipped else 0


if __name__ == "__main__":
    sys.exit(main())
