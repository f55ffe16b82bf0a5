"""Dense numeric kernel: vector/matrix helpers, softmax, seeded RNG, AdamW.

Everything here is plain numpy. Weights persisted to disk are float32;
internal accumulation is float64 throughout.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ShapeError, TrainingError


class SeededRng:
    """Deterministic random stream.

    Backed by numpy's PCG64 bit generator: the same 64-bit seed produces the
    same draw sequence on every run of the same build. Child streams derived
    with :meth:`split` are independent and equally reproducible, so separate
    training phases cannot perturb each other's randomness.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def split(self, label: str) -> "SeededRng":
        """Derive an independent child stream keyed by ``label``."""
        digest = hashlib.blake2b(
            self.seed.to_bytes(8, "little") + label.encode("utf-8"), digest_size=8
        ).digest()
        return SeededRng(int.from_bytes(digest, "little"))

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def standard_normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, x) -> np.ndarray:
        return self._gen.permutation(x)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def categorical(self, probs: np.ndarray) -> int:
        """Sample an index from a probability vector via inverse CDF."""
        u = self._gen.random()
        return int(min(np.searchsorted(np.cumsum(probs), u), len(probs) - 1))


def as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite values")
    return arr


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite values")
    return arr


def matvec(m, v) -> np.ndarray:
    """Matrix-vector product with shape validation."""
    mat = as_matrix(m, "matrix")
    vec = as_vector(v, "vector")
    if mat.shape[1] != vec.shape[0]:
        raise ShapeError(f"matvec: matrix cols {mat.shape[1]} != vector dim {vec.shape[0]}")
    return mat @ vec


def softmax(scores) -> np.ndarray:
    """Numerically stable softmax (max-subtraction)."""
    s = as_vector(scores, "scores")
    if s.size == 0:
        raise ShapeError("softmax: empty input")
    shifted = s - s.max()
    e = np.exp(shifted)
    return e / e.sum()


def log_softmax(scores) -> np.ndarray:
    s = as_vector(scores, "scores")
    if s.size == 0:
        raise ShapeError("log_softmax: empty input")
    shifted = s - s.max()
    return shifted - np.log(np.exp(shifted).sum())


def logsumexp(scores) -> float:
    s = as_vector(scores, "scores")
    if s.size == 0:
        raise ShapeError("logsumexp: empty input")
    m = s.max()
    return float(m + np.log(np.exp(s - m).sum()))


class AdamW:
    """Adam with decoupled weight decay.

    Parameters are updated as

        theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)

    where the decay term uses the pre-update parameter value. Moments are
    kept in float64 regardless of parameter dtype; updates are cast back to
    each parameter's own dtype. With ``weight_decay=0`` this is plain Adam.
    """

    def __init__(
        self,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Apply one update in place. ``grads`` keys must match ``params``."""
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = np.asarray(grads[name], dtype=np.float64)
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for parameter '{name}'")
            if g.shape != p.shape:
                raise ShapeError(
                    f"gradient shape {g.shape} != parameter shape {p.shape} for '{name}'"
                )
            if name not in self._m:
                self._m[name] = np.zeros(p.shape, dtype=np.float64)
                self._v[name] = np.zeros(p.shape, dtype=np.float64)
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / bc1
            v_hat = v / bc2
            theta = p.astype(np.float64)
            update = m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * theta
            p[...] = (theta - self.lr * update).astype(p.dtype)
