"""File formats the selector pipeline consumes, written independently here.

The bridge deliberately does not import the selector package; these writers
are contract-tested against its readers instead. Store layout
(little-endian): magic ``SRSE``, u32 version=1, u32 dim, u64 count,
count*dim float32 row-major, then count id entries (u16 length + UTF-8).
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

STORE_MAGIC = b"SRSE"
STORE_VERSION = 1
_STORE_HEADER = struct.Struct("<4sIIQ")


class ExportError(RuntimeError):
    """Invalid input data or unwritable output."""


def write_store(ids: list[str], matrix: np.ndarray, path: str | os.PathLike) -> None:
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise ExportError(f"matrix shape {matrix.shape} does not match {len(ids)} ids")
    seen: set[str] = set()
    for ident in ids:
        if ident in seen:
            raise ExportError(f"duplicate id '{ident}' in export")
        seen.add(ident)
    parts = [_STORE_HEADER.pack(STORE_MAGIC, STORE_VERSION, matrix.shape[1], len(ids))]
    parts.append(matrix.astype("<f4").tobytes())
    for ident in ids:
        encoded = ident.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ExportError(f"id too long to serialize: '{ident[:32]}...'")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(b"".join(parts))
    os.replace(tmp, path)


def read_jsonl(path: str | os.PathLike, required: tuple[str, ...]) -> list[dict]:
    records: list[dict] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ExportError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            for key in required:
                if key not in record:
                    raise ExportError(f"{path}:{lineno}: missing field '{key}'")
            records.append(record)
    return records


def write_jsonl(records: list[dict], path: str | os.PathLike) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record) + "\n")
    os.replace(tmp, path)
