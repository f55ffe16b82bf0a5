"""Export pipeline: corpus/query embeddings and semantic reward caches."""

from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from .encoders import HashedNgramEncoder, greedy_match_score, resolve_encoder
from .formats import ExportError, read_jsonl, write_jsonl, write_store


@dataclass
class ExportManifest:
    corpus_path: str | None = None
    qa_path: str | None = None
    predictions_path: str | None = None
    out_store: str | None = None
    out_cache: str | None = None
    encoder: str = "hashed-ngram-v1"
    dim: int = 384
    batch_size: int = 64

    @classmethod
    def from_file(cls, path: str) -> "ExportManifest":
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ExportError(f"unknown manifest keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass
class ExportSummary:
    store_records: int = 0
    store_dim: int = 0
    cache_records: int = 0
    skipped: int = 0
    encoder: str = ""


def export_embeddings(manifest: ExportManifest) -> ExportSummary:
    """Encode corpus documents (and QA questions, when given) into one store.

    Document vectors are keyed by doc id, query vectors by QA example id;
    everything is L2-normalized so cosine reduces to a dot product
    downstream. Duplicate ids abort the export.
    """
    if not manifest.out_store:
        raise ExportError("manifest has no out_store path")
    encoder = resolve_encoder(manifest.encoder, manifest.dim, manifest.batch_size)
    ids: list[str] = []
    texts: list[str] = []
    if manifest.corpus_path:
        for record in read_jsonl(manifest.corpus_path, ("id", "text")):
            ids.append(str(record["id"]))
            texts.append(str(record["text"]))
    if manifest.qa_path:
        for record in read_jsonl(manifest.qa_path, ("id", "question")):
            ids.append(str(record["id"]))
            texts.append(str(record["question"]))
    matrix = np.zeros((0, encoder.dim), dtype=np.float32)
    if texts:
        blocks = [
            encoder.encode(texts[i : i + manifest.batch_size])
            for i in range(0, len(texts), manifest.batch_size)
        ]
        matrix = np.concatenate(blocks, axis=0)
    if matrix.shape[0] != len(ids) or (len(ids) and matrix.shape[1] != encoder.dim):
        raise ExportError(
            f"encoder produced shape {matrix.shape} for {len(ids)} texts (dim {encoder.dim})"
        )
    write_store(ids, matrix, manifest.out_store)
    return ExportSummary(
        store_records=len(ids), store_dim=encoder.dim, encoder=encoder.name
    )


def export_semantic_scores(manifest: ExportManifest) -> ExportSummary:
    """Score predictions against their examples' reference answers.

    Reads predictions JSONL ({example_id, prediction, optional doc_ids}),
    joins with the QA file for reference answers, writes the reward cache
    ({example_id, doc_ids, prediction, semantic_score}). Predictions whose
    example id has no reference answer are skipped with a warning and
    counted in the summary.
    """
    if not manifest.out_cache:
        raise ExportError("manifest has no out_cache path")
    if not manifest.qa_path:
        raise ExportError("semantic export requires qa_path for reference answers")
    if not manifest.predictions_path:
        raise ExportError("semantic export requires predictions_path")
    encoder = resolve_encoder(manifest.encoder, manifest.dim, manifest.batch_size)
    if not isinstance(encoder, HashedNgramEncoder):
        # token-level matching needs per-token vectors; pretrained sentence
        # encoders only hand back pooled text vectors
        token_encoder = HashedNgramEncoder(manifest.dim)
    else:
        token_encoder = encoder
    answers = {
        str(r["id"]): str(r["answer"])
        for r in read_jsonl(manifest.qa_path, ("id", "answer"))
    }
    records: list[dict] = []
    skipped = 0
    for pred in read_jsonl(manifest.predictions_path, ("example_id", "prediction")):
        example_id = str(pred["example_id"])
        reference = answers.get(example_id)
        if reference is None:
            print(
                f"warning: no reference answer for example '{example_id}', skipping",
                file=sys.stderr,
            )
            skipped += 1
            continue
        prediction = str(pred["prediction"])
        score = greedy_match_score(prediction, reference, token_encoder)
        records.append(
            {
                "example_id": example_id,
                "doc_ids": [str(d) for d in pred.get("doc_ids", [])],
                "prediction": prediction,
                "semantic_score": round(float(score), 9),
            }
        )
    write_jsonl(records, manifest.out_cache)
    return ExportSummary(
        cache_records=len(records), skipped=skipped, encoder=token_encoder.name
    )


def run_manifest(manifest: ExportManifest) -> ExportSummary:
    """Run whichever exports the manifest configures."""
    if not manifest.out_store and not manifest.out_cache:
        raise ExportError("manifest configures no exports (out_store/out_cache both empty)")
    summary = ExportSummary()
    if manifest.out_store:
        emb = export_embeddings(manifest)
        summary.store_records = emb.store_records
        summary.store_dim = emb.store_dim
        summary.encoder = emb.encoder
    if manifest.out_cache:
        sem = export_semantic_scores(manifest)
        summary.cache_records = sem.cache_records
        summary.skipped = sem.skipped
        summary.encoder = summary.encoder or sem.encoder
    return summary
