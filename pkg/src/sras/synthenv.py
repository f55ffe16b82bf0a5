"""Synthetic planted-gold task.

Each query is a random unit vector; its gold document embedding is the
query plus scaled unit gaussian noise, renormalized, so every embedding
lives on the unit sphere and the query-gold cosine concentrates near
1/sqrt(1 + sigma^2). Distractors are independent random unit vectors. The
answer text of each example is its gold document id, which keeps
exact-match and token-F1 rewards well-defined without any text generation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import EmbeddingStore, QAExample, build_candidate_pool
from .errors import DataError
from .numcore import SeededRng
from .policy import TopKAction


@dataclass
class SynthConfig:
    num_examples: int = 700
    n: int = 8
    d: int = 384
    sigma: float = 0.3
    corpus_size: int = 100
    seed: int = 42

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.d < 2:
            raise ValueError(f"d must be >= 2, got {self.d}")
        if self.corpus_size < self.n:
            raise ValueError(
                f"corpus_size {self.corpus_size} cannot feed pools of n={self.n}"
            )
        if self.num_examples < 1 or self.n < 1:
            raise ValueError("num_examples and n must be >= 1")


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def generate_task(config: SynthConfig) -> tuple[EmbeddingStore, list[QAExample]]:
    """Build the store (queries, gold docs, distractor corpus) and examples.

    Ids: queries ``q%05d``, gold docs ``g%05d``, distractors ``d%05d``.
    Deterministic for a fixed seed.
    """
    rng = SeededRng(config.seed)
    gen_rng = rng.split("embeddings")
    pool_rng = rng.split("pools")

    corpus_ids = [f"d{i:05d}" for i in range(config.corpus_size)]
    corpus = np.stack(
        [_unit(gen_rng.standard_normal(config.d)) for _ in range(config.corpus_size)]
    )

    pairs: list[tuple[str, np.ndarray]] = list(zip(corpus_ids, corpus))
    examples: list[QAExample] = []
    for i in range(config.num_examples):
        qid = f"q{i:05d}"
        gid = f"g{i:05d}"
        query = _unit(gen_rng.standard_normal(config.d))
        noise_dir = _unit(gen_rng.standard_normal(config.d))
        if config.sigma == 0.0:
            gold = query.copy()
        else:
            gold = _unit(query + config.sigma * noise_dir)
        pairs.append((qid, query))
        pairs.append((gid, gold))
        pool = build_candidate_pool(gid, corpus_ids + [gid], config.n, pool_rng)
        examples.append(
            QAExample(
                id=qid,
                question=f"which document matches query {qid}",
                answer=gid,
                gold_doc_id=gid,
                candidate_doc_ids=pool,
            )
        )
    store = EmbeddingStore.from_pairs(config.d, pairs)
    return store, examples


def oracle_reward(
    action: TopKAction,
    example: QAExample,
    store: EmbeddingStore,
    mode: str = "dense",
) -> float:
    """Ground-truth reward for a selection on the synthetic task.

    dense: max over selected docs of (1 + cosine(doc, gold)) / 2 — exactly
    1.0 whenever the gold doc is selected. sparse: gold-in-selection
    indicator.
    """
    if mode not in ("dense", "sparse"):
        raise ValueError(f"mode must be 'dense' or 'sparse', got '{mode}'")
    if any(i >= len(example.candidate_doc_ids) for i in action.indices):
        raise DataError(
            f"action indices {action.indices} out of range for example '{example.id}'"
        )
    selected = [example.candidate_doc_ids[i] for i in action.indices]
    if mode == "sparse":
        return float(example.gold_doc_id in selected)
    gold = store.vector(example.gold_doc_id).astype(np.float64)
    gold = gold / np.linalg.norm(gold)
    best = 0.0
    for doc_id in selected:
        doc = store.vector(doc_id).astype(np.float64)
        norm = np.linalg.norm(doc)
        cos = float(doc @ gold / norm) if norm > 0 else 0.0
        best = max(best, (1.0 + cos) / 2.0)
    return best
