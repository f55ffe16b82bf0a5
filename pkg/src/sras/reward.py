"""Hybrid reward: token-level relaxed F1 mixed with a semantic score.

The semantic side is a seam. Four sources are supported:

* ``precomputed-cache`` — scores produced offline (e.g. by the bridge
  exporter running a real contextual-embedding metric) and read from a
  JSON-lines cache.
* ``embedding-cosine`` — greedy max-cosine token matching over a static
  token-embedding table; a desk-scale stand-in with the same structure as
  contextual-embedding metrics.
* ``synthetic-oracle`` — the planted-gold environment's cosine oracle
  (requires an embedding store).
* ``constant-zero`` — always 0; reduces the hybrid to pure relaxed F1
  scaled by alpha.
"""

from __future__ import annotations

import hashlib
import json
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .dataio import EmbeddingStore, QAExample
from .errors import DataError, RewardError
from .numcore import as_vector

# Fixed default stopword list: 35 common English function words. Overridable
# via RewardConfig; reproduced verbatim in the README.
DEFAULT_STOPWORDS = frozenset(
    """a an the and or but if then else when at by for with about against
    between into through during before after above below to from up down
    in out on off over under is""".split()
)

SEMANTIC_SOURCES = ("precomputed-cache", "embedding-cosine", "synthetic-oracle", "constant-zero")


@dataclass
class RewardConfig:
    alpha: float = 0.6
    stopwords: frozenset[str] = DEFAULT_STOPWORDS
    semantic_source: str = "synthetic-oracle"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.stopwords is None:
            raise ValueError("stopword list may be empty but not None")
        self.stopwords = frozenset(w.lower() for w in self.stopwords)
        if self.semantic_source not in SEMANTIC_SOURCES:
            raise ValueError(
                f"semantic_source must be one of {SEMANTIC_SOURCES}, got '{self.semantic_source}'"
            )


def normalize_answer(text: str, stopwords: frozenset[str] = DEFAULT_STOPWORDS) -> list[str]:
    """Lowercase, map every non-alphanumeric codepoint to a space, split,
    drop stopwords; token order is preserved."""
    lowered = text.lower()
    cleaned = "".join(c if c.isalnum() else " " for c in lowered)
    return [tok for tok in cleaned.split() if tok not in stopwords]


def relaxed_f1(prediction: str, reference: str, config: RewardConfig | None = None) -> float:
    """Token-level F1 over normalized answers (multiset overlap).

    Both token lists empty -> 1.0; exactly one empty -> 0.0.
    """
    stop = config.stopwords if config is not None else DEFAULT_STOPWORDS
    pred = normalize_answer(prediction, stop)
    ref = normalize_answer(reference, stop)
    if not pred and not ref:
        return 1.0
    if not pred or not ref:
        return 0.0
    overlap = sum((Counter(pred) & Counter(ref)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(ref)
    return 2.0 * precision * recall / (precision + recall)


def exact_match(prediction: str, reference: str, config: RewardConfig | None = None) -> float:
    """Sparse indicator: 1.0 iff the normalized token sequences are equal."""
    stop = config.stopwords if config is not None else DEFAULT_STOPWORDS
    return float(normalize_answer(prediction, stop) == normalize_answer(reference, stop))


class SemanticScorer(Protocol):
    def score(self, prediction: str, reference: str) -> float: ...


class ConstantSemantic:
    def __init__(self, value: float = 0.0):
        self.value = float(value)

    def score(self, prediction: str, reference: str) -> float:
        return self.value


def hybrid_reward(
    prediction: str,
    reference: str,
    semantic: SemanticScorer,
    config: RewardConfig,
    example_id: str | None = None,
) -> float:
    """alpha-weighted mix of relaxed F1 and the semantic score."""
    f1 = relaxed_f1(prediction, reference, config)
    try:
        sem = semantic.score(prediction, reference)
    except Exception as exc:
        raise RewardError(f"semantic scorer failed: {exc}", example_id) from exc
    return config.alpha * f1 + (1.0 - config.alpha) * sem


def normalize_batch(rewards) -> np.ndarray:
    """Zero-mean, unit-variance rescaling with a population std and an
    epsilon guard; a constant batch maps to all zeros."""
    r = as_vector(rewards, "rewards")
    if r.size == 0:
        raise ValueError("normalize_batch: empty batch")
    return (r - r.mean()) / (r.std() + 1e-8)


def _hash_unit_vector(token: str, dim: int) -> np.ndarray:
    """Deterministic unit vector for an out-of-table token: the token's
    blake2b digest seeds a PCG64 gaussian draw which is then normalized."""
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    gen = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
    v = gen.standard_normal(dim)
    return v / np.linalg.norm(v)


def _token_vector(token: str, table: EmbeddingStore) -> np.ndarray:
    if token in table:
        v = table.vector(token).astype(np.float64)
        norm = np.linalg.norm(v)
        return v / norm if norm > 0 else v
    return _hash_unit_vector(token, table.dim)


def embedding_cosine_semantic(prediction: str, reference: str, table: EmbeddingStore) -> float:
    """Greedy max-cosine token matching, rescaled from [-1, 1] to [0, 1].

    Precision is the mean over prediction tokens of the best rescaled
    cosine against any reference token; recall is symmetric; the result is
    their harmonic mean. Tokenization is the answer normalization without
    stopword removal. Empty/empty -> 1.0, one empty -> 0.0.
    """
    pred = normalize_answer(prediction, frozenset())
    ref = normalize_answer(reference, frozenset())
    if not pred and not ref:
        return 1.0
    if not pred or not ref:
        return 0.0
    p_vecs = np.stack([_token_vector(t, table) for t in pred])
    r_vecs = np.stack([_token_vector(t, table) for t in ref])
    sims = (p_vecs @ r_vecs.T + 1.0) / 2.0
    precision = sims.max(axis=1).mean()
    recall = sims.max(axis=0).mean()
    if precision + recall == 0.0:
        return 0.0
    return float(2.0 * precision * recall / (precision + recall))


class EmbeddingCosineSemantic:
    def __init__(self, table: EmbeddingStore):
        self.table = table

    def score(self, prediction: str, reference: str) -> float:
        return embedding_cosine_semantic(prediction, reference, self.table)


@dataclass
class CacheRecord:
    example_id: str
    doc_ids: tuple[str, ...]
    prediction: str
    semantic_score: float


def load_reward_cache(path: str | os.PathLike) -> dict[str, CacheRecord]:
    """Reward cache JSONL -> records keyed by example id."""
    records: dict[str, CacheRecord] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            for key in ("example_id", "doc_ids", "prediction", "semantic_score"):
                if key not in raw:
                    raise DataError(f"{path}:{lineno}: missing field '{key}'")
            score = float(raw["semantic_score"])
            if not 0.0 <= score <= 1.0:
                raise DataError(f"{path}:{lineno}: semantic_score {score} outside [0, 1]")
            records[str(raw["example_id"])] = CacheRecord(
                example_id=str(raw["example_id"]),
                doc_ids=tuple(str(d) for d in raw["doc_ids"]),
                prediction=str(raw["prediction"]),
                semantic_score=score,
            )
    return records


def write_reward_cache(records, path: str | os.PathLike) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(
                json.dumps(
                    {
                        "example_id": rec.example_id,
                        "doc_ids": list(rec.doc_ids),
                        "prediction": rec.prediction,
                        "semantic_score": rec.semantic_score,
                    }
                )
                + "\n"
            )
    os.replace(tmp, path)


class RewardEngine:
    """Per-example reward computation for a document selection.

    Without a generative QA model in the loop, the "prediction" for a
    selection is the space-joined list of selected document ids (the
    planted-gold environment makes this meaningful: answers are document
    ids). With ``precomputed-cache`` the cached prediction text is used
    instead, so real generator outputs can be replayed.
    """

    def __init__(
        self,
        config: RewardConfig,
        store: EmbeddingStore | None = None,
        token_table: EmbeddingStore | None = None,
        cache: dict[str, CacheRecord] | None = None,
    ):
        self.config = config
        self.store = store
        self.cache = cache
        if config.semantic_source == "synthetic-oracle" and store is None:
            raise ValueError("synthetic-oracle semantic source requires an embedding store")
        if config.semantic_source == "precomputed-cache" and cache is None:
            raise ValueError("precomputed-cache semantic source requires a loaded cache")
        if config.semantic_source == "embedding-cosine" and token_table is None:
            raise ValueError("embedding-cosine semantic source requires a token table")
        self._cosine = EmbeddingCosineSemantic(token_table) if token_table is not None else None

    def prediction_for(self, example: QAExample, selected_ids) -> str:
        if self.config.semantic_source == "precomputed-cache":
            record = self.cache.get(example.id)
            if record is None:
                raise RewardError("no cached prediction", example.id)
            return record.prediction
        return " ".join(selected_ids)

    def _semantic(self, example: QAExample, selected_ids, prediction: str) -> float:
        source = self.config.semantic_source
        if source == "constant-zero":
            return 0.0
        if source == "precomputed-cache":
            record = self.cache.get(example.id)
            if record is None:
                raise RewardError("no cached semantic score", example.id)
            return record.semantic_score
        if source == "embedding-cosine":
            try:
                return self._cosine.score(prediction, example.answer)
            except Exception as exc:
                raise RewardError(f"semantic scorer failed: {exc}", example.id) from exc
        # synthetic-oracle: best rescaled cosine between a selected doc and gold
        gold = self.store.vector(example.gold_doc_id).astype(np.float64)
        best = 0.0
        for doc_id in selected_ids:
            doc = self.store.vector(doc_id).astype(np.float64)
            denom = np.linalg.norm(doc) * np.linalg.norm(gold)
            cos = float(doc @ gold / denom) if denom > 0 else 0.0
            best = max(best, (1.0 + cos) / 2.0)
        return best

    def components(self, example: QAExample, selected_ids) -> tuple[float, float]:
        """(relaxed F1, semantic score) for one example's selection."""
        prediction = self.prediction_for(example, selected_ids)
        f1 = relaxed_f1(prediction, example.answer, self.config)
        return f1, self._semantic(example, selected_ids, prediction)

    def dense(self, example: QAExample, selected_ids) -> float:
        """Shaped hybrid reward: alpha * F1 + (1 - alpha) * semantic."""
        f1, sem = self.components(example, selected_ids)
        return self.config.alpha * f1 + (1.0 - self.config.alpha) * sem

    def sparse(self, example: QAExample, selected_ids) -> float:
        """Exact-match indicator on the normalized prediction text."""
        prediction = self.prediction_for(example, selected_ids)
        return exact_match(prediction, example.answer, self.config)
