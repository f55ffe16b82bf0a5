"""Text encoders for the exporter.

The default encoder is a deterministic hashed character-ngram featurizer:
each token maps to the normalized sum of hash-seeded gaussian vectors of
its padded character trigrams, and a text maps to the normalized mean of
its token vectors. It needs no model download, produces unit-norm vectors,
and is bit-stable across runs, which makes it the right default for
offline pipelines and contract tests. A sentence-transformers model can be
named instead when that package (and its weights) are available.
"""

from __future__ import annotations

import hashlib

import numpy as np

HASHED_ENCODER_NAME = "hashed-ngram-v1"


class EncoderError(RuntimeError):
    """Encoder could not be loaded or produced unusable output."""


def tokenize(text: str) -> list[str]:
    cleaned = "".join(c if c.isalnum() else " " for c in text.lower())
    return cleaned.split()


def _hash_gaussian(key: str, dim: int) -> np.ndarray:
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    gen = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
    return gen.standard_normal(dim)


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


class HashedNgramEncoder:
    """Deterministic unit-norm text embeddings from hashed char trigrams."""

    def __init__(self, dim: int = 384):
        if dim < 2:
            raise EncoderError(f"encoder dim must be >= 2, got {dim}")
        self.dim = dim
        self.name = HASHED_ENCODER_NAME
        self._token_cache: dict[str, np.ndarray] = {}

    def token_vector(self, token: str) -> np.ndarray:
        cached = self._token_cache.get(token)
        if cached is not None:
            return cached
        padded = f"^{token}$"
        total = np.zeros(self.dim)
        for i in range(len(padded) - 2):
            total += _hash_gaussian(padded[i : i + 3], self.dim)
        vec = _unit(total) if np.linalg.norm(total) > 0 else _unit(_hash_gaussian(token, self.dim))
        self._token_cache[token] = vec
        return vec

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float32)
        for row, text in enumerate(texts):
            tokens = tokenize(text)
            if not tokens:
                out[row] = _unit(_hash_gaussian("", self.dim)).astype(np.float32)
                continue
            mean = np.mean([self.token_vector(t) for t in tokens], axis=0)
            out[row] = _unit(mean).astype(np.float32)
        return out


class SentenceTransformerEncoder:
    """Thin adapter over sentence-transformers; vectors L2-normalized."""

    def __init__(self, model_name: str, batch_size: int = 64):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderError(
                f"encoder '{model_name}' requires the sentence-transformers package"
            ) from exc
        try:
            self._model = SentenceTransformer(model_name)
        except Exception as exc:
            raise EncoderError(f"failed to load encoder '{model_name}': {exc}") from exc
        self.name = model_name
        self.batch_size = batch_size
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: list[str]) -> np.ndarray:
        vectors = self._model.encode(
            texts,
            batch_size=self.batch_size,
            normalize_embeddings=True,
            show_progress_bar=False,
        )
        return np.asarray(vectors, dtype=np.float32)


def resolve_encoder(name: str, dim: int = 384, batch_size: int = 64):
    if name in (HASHED_ENCODER_NAME, "hashed-ngram"):
        return HashedNgramEncoder(dim)
    return SentenceTransformerEncoder(name, batch_size=batch_size)


def greedy_match_score(prediction: str, reference: str, encoder: HashedNgramEncoder) -> float:
    """Semantic similarity in [0, 1]: greedy max-cosine token matching.

    Each prediction token is matched to its best reference token and vice
    versa; pairwise cosines are rescaled from [-1, 1] to [0, 1] and the two
    directions combine as a harmonic mean. An empty prediction scores 0 by
    cache convention; two empty texts score 1.
    """
    pred_tokens = tokenize(prediction)
    ref_tokens = tokenize(reference)
    if not pred_tokens and not ref_tokens:
        return 1.0
    if not pred_tokens or not ref_tokens:
        return 0.0
    p_vecs = np.stack([encoder.token_vector(t) for t in pred_tokens])
    r_vecs = np.stack([encoder.token_vector(t) for t in ref_tokens])
    sims = (p_vecs @ r_vecs.T + 1.0) / 2.0
    precision = float(sims.max(axis=1).mean())
    recall = float(sims.max(axis=0).mean())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)
