"""Stochastic top-k selection over candidate scores.

Sampling is sequential without replacement (Plackett-Luce): at each of k
steps one candidate is drawn from the softmax over the remaining scores.
The action log-probability is the sum of the k sequential log-softmax
terms, which is exactly what a clipped-ratio policy update needs. Greedy
inference uses argmax_topk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import SeededRng, as_vector, log_softmax, softmax


@dataclass(frozen=True)
class TopKAction:
    """An ordered selection of k distinct candidate indices."""

    indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if len(set(self.indices)) != len(self.indices):
            raise ValueError(f"action indices must be distinct, got {self.indices}")
        if any(i < 0 for i in self.indices):
            raise ValueError(f"action indices must be non-negative, got {self.indices}")

    @property
    def k(self) -> int:
        return len(self.indices)


def _check_k(n: int, k: int) -> None:
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}], got {k}")


def sample_topk(scores, k: int, rng: SeededRng) -> tuple[TopKAction, float]:
    """Draw an ordered k-subset and return it with its exact log-probability."""
    s = as_vector(scores, "scores")
    _check_k(s.size, k)
    active = np.ones(s.size, dtype=bool)
    picked: list[int] = []
    log_prob = 0.0
    for _ in range(k):
        ids = np.flatnonzero(active)
        logp = log_softmax(s[ids])
        choice = rng.categorical(np.exp(logp))
        picked.append(int(ids[choice]))
        log_prob += float(logp[choice])
        active[ids[choice]] = False
    return TopKAction(tuple(picked)), log_prob


def logprob_of(scores, action: TopKAction) -> float:
    """Log-probability of an ordered selection under the current scores."""
    s = as_vector(scores, "scores")
    if any(i >= s.size for i in action.indices):
        raise ValueError(f"action index out of range for {s.size} candidates")
    _check_k(s.size, action.k)
    active = np.ones(s.size, dtype=bool)
    log_prob = 0.0
    for idx in action.indices:
        if not active[idx]:
            raise ValueError(f"repeated index {idx} in action")
        ids = np.flatnonzero(active)
        logp = log_softmax(s[ids])
        log_prob += float(logp[np.searchsorted(ids, idx)])
        active[idx] = False
    return log_prob


def logprob_grad(scores, action: TopKAction) -> tuple[float, np.ndarray]:
    """Log-probability plus its gradient with respect to the scores.

    d logP / d s_j = sum over steps of [indicator(j picked at step) -
    p_step(j) * indicator(j still in the pool)].
    """
    s = as_vector(scores, "scores")
    _check_k(s.size, action.k)
    active = np.ones(s.size, dtype=bool)
    grad = np.zeros(s.size)
    log_prob = 0.0
    for idx in action.indices:
        if not active[idx]:
            raise ValueError(f"repeated index {idx} in action")
        ids = np.flatnonzero(active)
        logp = log_softmax(s[ids])
        log_prob += float(logp[np.searchsorted(ids, idx)])
        grad[ids] -= np.exp(logp)
        grad[idx] += 1.0
        active[idx] = False
    return log_prob, grad


def argmax_topk(scores, k: int) -> TopKAction:
    """Indices of the k largest scores, descending; ties go to the lower index."""
    s = as_vector(scores, "scores")
    _check_k(s.size, k)
    order = np.lexsort((np.arange(s.size), -s))
    return TopKAction(tuple(int(i) for i in order[:k]))


def entropy(scores) -> float:
    """Shannon entropy (nats) of the first-step categorical distribution."""
    p = softmax(scores)
    nz = p[p > 0.0]
    return float(-(nz * np.log(nz)).sum())


def entropy_grad(scores) -> tuple[float, np.ndarray]:
    """Entropy and its gradient w.r.t. the scores: dH/ds_j = -p_j (ln p_j + H)."""
    s = as_vector(scores, "scores")
    logp = log_softmax(s)
    p = np.exp(logp)
    h = float(-(p * logp).sum())
    return h, -p * (logp + h)
