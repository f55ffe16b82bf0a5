"""Additive-interaction relevance scorer.

A query embedding q and each candidate document embedding d_i are projected
into a shared hidden space and combined through a tanh nonlinearity; a
linear head produces one scalar score per candidate:

    s_i = w . tanh(W_q q + W_d d_i)

There are no bias terms. Weights are stored as float32 (the on-disk model
format is float32); all arithmetic runs in float64.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError
from .numcore import SeededRng

MODEL_MAGIC = b"SRSM"
MODEL_VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")  # magic, version, d, h, reserved
HEADER_BYTES = _HEADER.size


@dataclass
class SelectorParams:
    """Learnable state of the selector: two projections and a scoring head."""

    w_q: np.ndarray  # (h, d) float32
    w_d: np.ndarray  # (h, d) float32
    w: np.ndarray  # (h,) float32

    def __post_init__(self):
        self.w_q = np.ascontiguousarray(self.w_q, dtype=np.float32)
        self.w_d = np.ascontiguousarray(self.w_d, dtype=np.float32)
        self.w = np.ascontiguousarray(self.w, dtype=np.float32)
        if self.w_q.ndim != 2 or self.w_d.ndim != 2 or self.w.ndim != 1:
            raise ShapeError("selector params must be (h,d), (h,d), (h,)")
        if self.w_q.shape != self.w_d.shape or self.w_q.shape[0] != self.w.shape[0]:
            raise ShapeError(
                f"inconsistent param shapes: w_q {self.w_q.shape}, "
                f"w_d {self.w_d.shape}, w {self.w.shape}"
            )
        for name, arr in self.tensors().items():
            if not np.all(np.isfinite(arr)):
                raise ShapeError(f"parameter '{name}' contains non-finite values")

    @property
    def d(self) -> int:
        return self.w_q.shape[1]

    @property
    def h(self) -> int:
        return self.w_q.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {"w_q": self.w_q, "w_d": self.w_d, "w": self.w}

    def copy(self) -> "SelectorParams":
        return SelectorParams(self.w_q.copy(), self.w_d.copy(), self.w.copy())


@dataclass
class ScoreGradients:
    d_w_q: np.ndarray
    d_w_d: np.ndarray
    d_w: np.ndarray

    def tensors(self) -> dict[str, np.ndarray]:
        return {"w_q": self.d_w_q, "w_d": self.d_w_d, "w": self.d_w}


def param_count(params: SelectorParams) -> int:
    """Total learnable scalars: 2*h*d + h."""
    return 2 * params.h * params.d + params.h


def init_params(d: int, h: int, rng: SeededRng) -> SelectorParams:
    """Uniform init in [-1/sqrt(d), 1/sqrt(d)] for projections, [-1/sqrt(h),
    1/sqrt(h)] for the head; keeps tanh pre-activations in the linear region."""
    if d < 1 or h < 1:
        raise ValueError(f"dims must be >= 1, got d={d}, h={h}")
    bd = 1.0 / np.sqrt(d)
    bh = 1.0 / np.sqrt(h)
    return SelectorParams(
        w_q=rng.uniform(-bd, bd, (h, d)),
        w_d=rng.uniform(-bd, bd, (h, d)),
        w=rng.uniform(-bh, bh, (h,)),
    )


def _coerce_docs(params: SelectorParams, docs) -> np.ndarray:
    arr = np.asarray(docs, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ShapeError(f"docs must be a non-empty (n, d) array, got shape {arr.shape}")
    if arr.shape[1] != params.d:
        raise ShapeError(f"doc dim {arr.shape[1]} != model dim {params.d}")
    return arr


def _coerce_query(params: SelectorParams, query) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != params.d:
        raise ShapeError(f"query must have shape ({params.d},), got {q.shape}")
    return q


def score_forward(
    params: SelectorParams, query, docs
) -> tuple[np.ndarray, np.ndarray]:
    """Scores plus the tanh activations needed for the backward pass.

    Returns (scores (n,), tanh_acts (n, h)), both float64.
    """
    q = _coerce_query(params, query)
    d_mat = _coerce_docs(params, docs)
    w_q = params.w_q.astype(np.float64)
    w_d = params.w_d.astype(np.float64)
    w = params.w.astype(np.float64)
    h_q = w_q @ q  # computed once per call
    z = h_q[None, :] + d_mat @ w_d.T
    t = np.tanh(z)
    return t @ w, t


def score_candidates(params: SelectorParams, query, docs) -> np.ndarray:
    """Relevance score per candidate document."""
    scores, _ = score_forward(params, query, docs)
    return scores


def score_gradients(
    params: SelectorParams,
    query,
    docs,
    upstream,
    tanh_acts: np.ndarray | None = None,
) -> ScoreGradients:
    """Analytic gradients of sum_i upstream_i * s_i w.r.t. all parameters.

    With z_i = W_q q + W_d d_i and t_i = tanh(z_i):

        dw   = sum_i g_i t_i
        dW_q = (sum_i g_i (1 - t_i^2) * w) q^T
        dW_d = sum_i [g_i (1 - t_i^2) * w] d_i^T

    ``tanh_acts`` from :func:`score_forward` may be passed to skip the
    forward recomputation.
    """
    q = _coerce_query(params, query)
    d_mat = _coerce_docs(params, docs)
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != (d_mat.shape[0],):
        raise ShapeError(f"upstream must have shape ({d_mat.shape[0]},), got {g.shape}")
    if tanh_acts is None:
        _, tanh_acts = score_forward(params, q, d_mat)
    t = tanh_acts
    w = params.w.astype(np.float64)
    u = (1.0 - t * t) * w[None, :] * g[:, None]  # (n, h)
    d_w = t.T @ g
    d_w_q = np.outer(u.sum(axis=0), q)
    d_w_d = u.T @ d_mat
    return ScoreGradients(d_w_q=d_w_q, d_w_d=d_w_d, d_w=d_w)


def score_forward_batch(
    params: SelectorParams, queries: np.ndarray, doc_blocks: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Batched forward over B examples with n candidates each.

    ``queries`` is (B, d), ``doc_blocks`` is (B, n, d). Returns
    (scores (B, n), tanh_acts (B, n, h)). Identical math to
    :func:`score_forward`, folded into larger matmuls for the trainer.
    """
    q = np.asarray(queries, dtype=np.float64)
    blocks = np.asarray(doc_blocks, dtype=np.float64)
    if q.ndim != 2 or blocks.ndim != 3 or q.shape[0] != blocks.shape[0]:
        raise ShapeError(f"bad batch shapes: queries {q.shape}, docs {blocks.shape}")
    if q.shape[1] != params.d or blocks.shape[2] != params.d:
        raise ShapeError(f"embedding dim mismatch with model dim {params.d}")
    b, n, d = blocks.shape
    w_q = params.w_q.astype(np.float64)
    w_d = params.w_d.astype(np.float64)
    w = params.w.astype(np.float64)
    h_q = q @ w_q.T  # (B, h)
    h_d = (blocks.reshape(b * n, d) @ w_d.T).reshape(b, n, -1)
    t = np.tanh(h_q[:, None, :] + h_d)
    return t @ w, t


def score_gradients_batch(
    params: SelectorParams,
    queries: np.ndarray,
    doc_blocks: np.ndarray,
    tanh_acts: np.ndarray,
    upstream: np.ndarray,
) -> ScoreGradients:
    """Batched counterpart of :func:`score_gradients`, summed over the batch."""
    q = np.asarray(queries, dtype=np.float64)
    blocks = np.asarray(doc_blocks, dtype=np.float64)
    g = np.asarray(upstream, dtype=np.float64)
    b, n, d = blocks.shape
    t = tanh_acts
    w = params.w.astype(np.float64)
    u = (1.0 - t * t) * w[None, None, :] * g[:, :, None]  # (B, n, h)
    d_w = np.einsum("bnh,bn->h", t, g)
    d_w_q = u.sum(axis=1).T @ q  # (h, d)
    d_w_d = u.reshape(b * n, -1).T @ blocks.reshape(b * n, d)
    return ScoreGradients(d_w_q=d_w_q, d_w_d=d_w_d, d_w=d_w)


def model_bytes(params: SelectorParams) -> bytes:
    """Serialized model image: 24-byte header then W_q, W_d, w as f32."""
    header = _HEADER.pack(MODEL_MAGIC, MODEL_VERSION, params.d, params.h, 0)
    body = (
        params.w_q.astype("<f4").tobytes()
        + params.w_d.astype("<f4").tobytes()
        + params.w.astype("<f4").tobytes()
    )
    return header + body


def save_params(params: SelectorParams, path: str | os.PathLike) -> None:
    """Write the model file atomically (temp file + rename)."""
    data = model_bytes(params)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def load_params(path: str | os.PathLike) -> SelectorParams:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < HEADER_BYTES:
        raise FormatError(f"model file truncated: {len(raw)} bytes < {HEADER_BYTES}-byte header")
    magic, version, d, h, _reserved = _HEADER.unpack_from(raw, 0)
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}")
    if d < 1 or h < 1:
        raise FormatError(f"invalid dims d={d}, h={h}")
    expected = HEADER_BYTES + 4 * (2 * h * d + h)
    if len(raw) != expected:
        raise FormatError(f"model payload is {len(raw)} bytes, expected {expected}")
    offset = HEADER_BYTES
    w_q = np.frombuffer(raw, dtype="<f4", count=h * d, offset=offset).reshape(h, d)
    offset += 4 * h * d
    w_d = np.frombuffer(raw, dtype="<f4", count=h * d, offset=offset).reshape(h, d)
    offset += 4 * h * d
    w = np.frombuffer(raw, dtype="<f4", count=h, offset=offset)
    return SelectorParams(w_q=w_q.copy(), w_d=w_d.copy(), w=w.copy())
