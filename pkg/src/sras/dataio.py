"""Dataset ingestion and persistence.

File formats (all little-endian):

* Embedding store: magic ``SRSE``, u32 version=1, u32 dim, u64 count,
  ``count * dim`` float32 values row-major, then an id table of ``count``
  entries, each a u16 byte length followed by the UTF-8 id.
* QA file: JSON lines with fields ``id``, ``question``, ``answer``,
  ``gold_doc_id``, ``candidate_doc_ids`` (and optional ``difficulty``).
* Corpus file: JSON lines with ``id`` and ``text``.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FormatError
from .numcore import SeededRng

STORE_MAGIC = b"SRSE"
STORE_VERSION = 1
_STORE_HEADER = struct.Struct("<4sIIQ")  # magic, version, dim, count


class EmbeddingStore:
    """Immutable id-indexed matrix of embedding vectors."""

    def __init__(self, dim: int, ids: list[str], matrix: np.ndarray):
        if dim < 1:
            raise DataError(f"embedding dim must be >= 1, got {dim}")
        matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        if matrix.shape != (len(ids), dim):
            raise DataError(
                f"matrix shape {matrix.shape} != ({len(ids)}, {dim})"
            )
        if not np.all(np.isfinite(matrix)):
            raise DataError("embedding store contains non-finite values")
        self.dim = dim
        self.ids = list(ids)
        self.matrix = matrix
        self._row: dict[str, int] = {}
        for i, ident in enumerate(self.ids):
            if ident in self._row:
                raise DataError(f"duplicate id '{ident}' in embedding store")
            self._row[ident] = i

    @classmethod
    def from_pairs(cls, dim: int, pairs) -> "EmbeddingStore":
        ids = [p[0] for p in pairs]
        if ids:
            matrix = np.stack([np.asarray(p[1], dtype=np.float32) for p in pairs])
        else:
            matrix = np.zeros((0, dim), dtype=np.float32)
        return cls(dim, ids, matrix)

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, ident: str) -> bool:
        return ident in self._row

    def vector(self, ident: str) -> np.ndarray:
        row = self._row.get(ident)
        if row is None:
            raise DataError(f"unknown embedding id '{ident}'")
        return self.matrix[row]

    def vectors(self, ids) -> np.ndarray:
        """Stacked vectors for a sequence of ids, preserving order."""
        rows = []
        for ident in ids:
            row = self._row.get(ident)
            if row is None:
                raise DataError(f"unknown embedding id '{ident}'")
            rows.append(row)
        return self.matrix[rows]


def write_embedding_store(store: EmbeddingStore, path: str | os.PathLike) -> None:
    """Binary store writer; atomic via temp file + rename."""
    parts = [_STORE_HEADER.pack(STORE_MAGIC, STORE_VERSION, store.dim, len(store))]
    parts.append(store.matrix.astype("<f4").tobytes())
    for ident in store.ids:
        encoded = ident.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise DataError(f"id too long to serialize: {len(encoded)} bytes")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(b"".join(parts))
    os.replace(tmp, path)


def read_embedding_store(path: str | os.PathLike) -> EmbeddingStore:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _STORE_HEADER.size:
        raise FormatError(
            f"store file truncated: {len(raw)} bytes < {_STORE_HEADER.size}-byte header"
        )
    magic, version, dim, count = _STORE_HEADER.unpack_from(raw, 0)
    if magic != STORE_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {STORE_MAGIC!r}")
    if version != STORE_VERSION:
        raise FormatError(f"unsupported store version {version}")
    if dim < 1:
        raise FormatError(f"invalid dim {dim}")
    offset = _STORE_HEADER.size
    need = count * dim * 4
    if len(raw) < offset + need:
        raise FormatError(f"store payload truncated at offset {offset}: need {need} vector bytes")
    matrix = np.frombuffer(raw, dtype="<f4", count=count * dim, offset=offset).reshape(
        count, dim
    )
    offset += need
    ids: list[str] = []
    for i in range(count):
        if len(raw) < offset + 2:
            raise FormatError(f"id table truncated at entry {i} (offset {offset})")
        (length,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        if len(raw) < offset + length:
            raise FormatError(f"id entry {i} truncated at offset {offset}")
        ids.append(raw[offset : offset + length].decode("utf-8"))
        offset += length
    if offset != len(raw):
        raise FormatError(f"{len(raw) - offset} trailing bytes after id table")
    return EmbeddingStore(dim, ids, matrix.copy())


@dataclass
class QAExample:
    """One QA training/eval instance with its fixed candidate pool."""

    id: str
    question: str
    answer: str
    gold_doc_id: str
    candidate_doc_ids: tuple[str, ...]
    difficulty: float | None = None

    def __post_init__(self):
        self.candidate_doc_ids = tuple(self.candidate_doc_ids)
        if len(set(self.candidate_doc_ids)) != len(self.candidate_doc_ids):
            raise DataError(f"example '{self.id}': duplicate candidate doc ids")
        if self.gold_doc_id not in self.candidate_doc_ids:
            raise DataError(
                f"example '{self.id}': gold doc '{self.gold_doc_id}' not in candidates"
            )

    @property
    def gold_index(self) -> int:
        return self.candidate_doc_ids.index(self.gold_doc_id)


@dataclass
class CorpusDoc:
    id: str
    text: str


_QA_REQUIRED = ("id", "question", "answer", "gold_doc_id", "candidate_doc_ids")


def load_qa_jsonl(path: str | os.PathLike) -> list[QAExample]:
    """Parse QA examples, attaching line numbers to every error."""
    examples: list[QAExample] = []
    seen_ids: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            for key in _QA_REQUIRED:
                if key not in record:
                    raise DataError(f"{path}:{lineno}: missing field '{key}'")
            ident = str(record["id"])
            if ident in seen_ids:
                raise DataError(f"{path}:{lineno}: duplicate example id '{ident}'")
            seen_ids.add(ident)
            try:
                examples.append(
                    QAExample(
                        id=ident,
                        question=str(record["question"]),
                        answer=str(record["answer"]),
                        gold_doc_id=str(record["gold_doc_id"]),
                        candidate_doc_ids=tuple(str(c) for c in record["candidate_doc_ids"]),
                        difficulty=record.get("difficulty"),
                    )
                )
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return examples


def write_qa_jsonl(examples, path: str | os.PathLike) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as f:
        for ex in examples:
            record = {
                "id": ex.id,
                "question": ex.question,
                "answer": ex.answer,
                "gold_doc_id": ex.gold_doc_id,
                "candidate_doc_ids": list(ex.candidate_doc_ids),
            }
            if ex.difficulty is not None:
                record["difficulty"] = ex.difficulty
            f.write(json.dumps(record) + "\n")
    os.replace(tmp, path)


def load_corpus_jsonl(path: str | os.PathLike) -> list[CorpusDoc]:
    docs: list[CorpusDoc] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            if "id" not in record or "text" not in record:
                raise DataError(f"{path}:{lineno}: corpus record needs 'id' and 'text'")
            ident = str(record["id"])
            if ident in seen:
                raise DataError(f"{path}:{lineno}: duplicate corpus id '{ident}'")
            seen.add(ident)
            docs.append(CorpusDoc(id=ident, text=str(record["text"])))
    return docs


def build_candidate_pool(
    gold_id: str, corpus_ids, n: int, rng: SeededRng
) -> tuple[str, ...]:
    """Gold plus n-1 distinct distractors, uniformly sampled, order shuffled.

    The gold document's position in the returned pool is uniform so a
    selector cannot exploit position.
    """
    others = [c for c in corpus_ids if c != gold_id]
    if len(others) < n - 1:
        raise DataError(
            f"corpus has {len(others)} non-gold docs, need {n - 1} distractors"
        )
    chosen = rng.choice(len(others), size=n - 1, replace=False)
    pool = [gold_id] + [others[int(i)] for i in chosen]
    order = rng.permutation(n)
    return tuple(pool[int(i)] for i in order)
