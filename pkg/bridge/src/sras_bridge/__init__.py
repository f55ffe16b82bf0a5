"""Exporter producing the selector pipeline's inputs from raw text."""

from .encoders import HashedNgramEncoder, greedy_match_score, resolve_encoder
from .exporter import (
    ExportManifest,
    ExportSummary,
    export_embeddings,
    export_semantic_scores,
    run_manifest,
)

__version__ = "0.1.0"
