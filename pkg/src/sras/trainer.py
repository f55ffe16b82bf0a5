"""Clipped-ratio policy-gradient training loop with stabilization.

Every QA pair is a one-step episode: sample an ordered top-k selection,
collect one reward, done. There is no value network; the advantage is the
raw reward minus an exponential-moving-average baseline of past batch
means, then batch-normalized. The discount factor therefore never
compounds; it is kept in the config for completeness. Four stabilizers are
built in and individually removable for ablations:

* supervised warmup (``no_sw`` disables): cross-entropy pretraining on the
  gold-document label, with its own learning rate (``warmup_lr``) since the
  policy-gradient rate is far too small to move a freshly initialized net,
* shaped reward (``no_rs`` replaces the hybrid reward with a sparse
  exact-match indicator),
* batch advantage normalization (always on; the epsilon guard keeps
  degenerate batches at zero),
* curriculum ordering (``no_cl`` disables): early epochs train on the
  easiest examples by query-gold cosine, later epochs widen to the full
  set (tier sizes 50% / 75% / 100% over thirds of the epoch budget,
  ceiling rounding).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dataio import EmbeddingStore, QAExample
from .errors import DataError, TrainingError
from .numcore import AdamW, SeededRng, softmax
from .policy import TopKAction, entropy_grad, logprob_grad, sample_topk
from .reward import RewardEngine, normalize_batch
from .scorer import (
    SelectorParams,
    score_forward_batch,
    score_gradients_batch,
)


@dataclass
class TrainConfig:
    epochs: int = 25
    batch_size: int = 8
    k: int = 3
    n: int = 8
    lr: float = 1e-5
    warmup_lr: float = 1.5e-2
    gamma: float = 0.99
    clip_eps: float = 0.2
    warmup_epochs: int = 3
    ppo_inner_epochs: int = 4
    baseline_ema_decay: float = 0.9
    entropy_coef: float = 0.0
    no_sw: bool = False
    no_rs: bool = False
    no_cl: bool = False
    seed: int = 42

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError(f"clip_eps must be in (0, 1), got {self.clip_eps}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.k > self.n:
            raise ValueError(f"k={self.k} cannot exceed n={self.n}")
        for name in ("batch_size", "k", "n", "ppo_inner_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.epochs < 0 or self.warmup_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.lr <= 0 or self.warmup_lr <= 0:
            raise ValueError("learning rates must be positive")
        if not 0.0 <= self.baseline_ema_decay < 1.0:
            raise ValueError("baseline_ema_decay must be in [0, 1)")


@dataclass
class Transition:
    """One bandit step: what was offered, what was picked, what it earned."""

    example_id: str
    candidate_doc_ids: tuple[str, ...]
    action: TopKAction
    old_log_prob: float
    raw_reward: float
    advantage: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.old_log_prob) or self.old_log_prob > 0.0:
            raise ValueError(
                f"old_log_prob must be finite and <= 0, got {self.old_log_prob}"
            )


@dataclass
class EpochStats:
    epoch: int
    mean_reward: float
    mean_loss: float
    clip_fraction: float
    entropy: float
    seconds: float


@dataclass
class TrainResult:
    params: SelectorParams
    log: list[EpochStats] = field(default_factory=list)
    warmup_losses: list[float] = field(default_factory=list)


TRAINLOG_COLUMNS = ("epoch", "mean_reward", "mean_loss", "clip_fraction", "entropy", "seconds")


def trainlog_to_csv(log: list[EpochStats], path) -> None:
    import os

    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(",".join(TRAINLOG_COLUMNS) + "\n")
        for row in log:
            f.write(
                f"{row.epoch},{row.mean_reward!r},{row.mean_loss!r},"
                f"{row.clip_fraction!r},{row.entropy!r},{row.seconds:.6f}\n"
            )
    os.replace(tmp, path)


class _ExampleTensors:
    """Query/candidate embeddings staged as contiguous arrays, keyed by the
    dataset's own order, so epoch batches assemble with fancy indexing."""

    def __init__(self, dataset: list[QAExample], store: EmbeddingStore, n: int):
        if not dataset:
            raise DataError("dataset is empty")
        if len({ex.id for ex in dataset}) != len(dataset):
            raise DataError("dataset contains duplicate example ids")
        for ex in dataset:
            if len(ex.candidate_doc_ids) != n:
                raise DataError(
                    f"example '{ex.id}' has {len(ex.candidate_doc_ids)} candidates, expected {n}"
                )
        self.queries = np.stack(
            [store.vector(ex.id).astype(np.float64) for ex in dataset]
        )
        self.docs = np.stack(
            [store.vectors(ex.candidate_doc_ids).astype(np.float64) for ex in dataset]
        )
        self.gold_index = np.array([ex.gold_index for ex in dataset], dtype=np.int64)
        self.index_of = {ex.id: i for i, ex in enumerate(dataset)}


def warmup_epoch(
    params: SelectorParams,
    dataset: list[QAExample],
    store: EmbeddingStore,
    config: TrainConfig,
    optimizer: AdamW | None = None,
    rng: SeededRng | None = None,
    tensors: _ExampleTensors | None = None,
) -> float:
    """One cross-entropy epoch on the gold-document labels; returns the mean
    per-example loss -log softmax(scores)[gold]."""
    if optimizer is None:
        optimizer = AdamW(lr=config.warmup_lr)
    if rng is None:
        rng = SeededRng(config.seed).split("warmup")
    if tensors is None:
        tensors = _ExampleTensors(dataset, store, config.n)
    order = rng.permutation(len(dataset))
    losses: list[float] = []
    for start in range(0, len(order), config.batch_size):
        rows = order[start : start + config.batch_size]
        q_batch = tensors.queries[rows]
        d_batch = tensors.docs[rows]
        scores, tanh_acts = score_forward_batch(params, q_batch, d_batch)
        upstream = np.zeros_like(scores)
        for j, row in enumerate(rows):
            probs = softmax(scores[j])
            gold = tensors.gold_index[row]
            losses.append(-float(np.log(probs[gold])))
            upstream[j] = probs
            upstream[j, gold] -= 1.0
        upstream /= len(rows)
        grads = score_gradients_batch(params, q_batch, d_batch, tanh_acts, upstream)
        optimizer.step(params.tensors(), grads.tensors())
    return float(np.mean(losses))


def compute_advantage(
    raw_rewards, baseline: float | None, decay: float
) -> tuple[np.ndarray, float]:
    """Reward minus EMA baseline, then batch normalization.

    A ``None`` baseline initializes to the current batch mean (first batch
    is therefore pure centering). Returns (advantages, updated baseline).
    """
    r = np.asarray(raw_rewards, dtype=np.float64)
    if r.size == 0:
        raise ValueError("compute_advantage: empty batch")
    batch_mean = float(r.mean())
    b = batch_mean if baseline is None else baseline
    advantages = normalize_batch(r - b)
    new_baseline = decay * b + (1.0 - decay) * batch_mean
    return advantages, new_baseline


def ppo_clip_loss(old_log_prob: float, new_log_prob: float, advantage: float, eps: float) -> float:
    """Negated clipped surrogate: -min(r*A, clip(r, 1-eps, 1+eps)*A)."""
    loss, _ = _ppo_loss_grad(old_log_prob, new_log_prob, advantage, eps)
    return loss


def _ppo_loss_grad(
    old_log_prob: float, new_log_prob: float, advantage: float, eps: float
) -> tuple[float, float]:
    """Loss plus d(loss)/d(new_log_prob); the gradient is exactly zero when
    the clipped branch is strictly smaller (the clip region is flat)."""
    ratio = math.exp(new_log_prob - old_log_prob)
    unclipped = ratio * advantage
    clipped = min(max(ratio, 1.0 - eps), 1.0 + eps) * advantage
    if unclipped <= clipped:
        return -unclipped, -ratio * advantage
    return -clipped, 0.0


def curriculum_order(
    dataset: list[QAExample],
    embeddings: EmbeddingStore,
    epoch: int,
    total_epochs: int,
    config: TrainConfig,
    rng: SeededRng,
) -> list[QAExample]:
    """Examples for one epoch: the easiest tier, shuffled.

    Difficulty is 1 - cosine(query embedding, gold embedding); tier sizes
    are ceil(fraction * N) with fractions 0.5 / 0.75 / 1.0 over thirds of
    the epoch budget. Equal difficulties resolve by a seeded permutation.
    With ``no_cl`` the full dataset is returned in seeded shuffle order.
    """
    if config.no_cl:
        return [dataset[int(i)] for i in rng.permutation(len(dataset))]
    difficulties = np.empty(len(dataset))
    for i, ex in enumerate(dataset):
        if ex.difficulty is not None:
            difficulties[i] = ex.difficulty
        else:
            q = embeddings.vector(ex.id).astype(np.float64)
            g = embeddings.vector(ex.gold_doc_id).astype(np.float64)
            denom = np.linalg.norm(q) * np.linalg.norm(g)
            difficulties[i] = 1.0 - (float(q @ g / denom) if denom > 0 else 0.0)
    if epoch < total_epochs / 3:
        fraction = 0.5
    elif epoch < 2 * total_epochs / 3:
        fraction = 0.75
    else:
        fraction = 1.0
    tier_size = math.ceil(fraction * len(dataset))
    perm = rng.permutation(len(dataset))
    ranked = perm[np.argsort(difficulties[perm], kind="stable")]
    tier = ranked[:tier_size]
    shuffled = tier[rng.permutation(tier_size)]
    return [dataset[int(i)] for i in shuffled]


def train(
    params: SelectorParams,
    dataset: list[QAExample],
    embeddings: EmbeddingStore,
    reward_engine: RewardEngine,
    config: TrainConfig,
    on_epoch=None,
) -> TrainResult:
    """Full training run: optional supervised warmup, then clipped-ratio
    policy-gradient epochs. Deterministic for a fixed seed (wall-clock
    fields aside); ``params`` is updated in place and returned.

    ``on_epoch(epoch, params, stats)`` is invoked after each epoch when
    given (checkpointing hook)."""
    master = SeededRng(config.seed)
    warmup_rng = master.split("warmup")
    order_rng = master.split("order")
    rollout_rng = master.split("rollout")
    tensors = _ExampleTensors(dataset, embeddings, config.n)

    result = TrainResult(params=params)
    if not config.no_sw and config.warmup_epochs > 0:
        warmup_opt = AdamW(lr=config.warmup_lr)
        for _ in range(config.warmup_epochs):
            result.warmup_losses.append(
                warmup_epoch(
                    params, dataset, embeddings, config,
                    optimizer=warmup_opt, rng=warmup_rng, tensors=tensors,
                )
            )

    optimizer = AdamW(lr=config.lr)
    baseline: float | None = None
    for epoch in range(config.epochs):
        tick = time.perf_counter()
        epoch_examples = curriculum_order(
            dataset, embeddings, epoch, config.epochs, config, order_rng
        )
        rewards_epoch: list[float] = []
        losses_epoch: list[float] = []
        entropies: list[float] = []
        clip_events = 0
        ratio_evals = 0
        for start in range(0, len(epoch_examples), config.batch_size):
            batch = epoch_examples[start : start + config.batch_size]
            rows = np.array([tensors.index_of[ex.id] for ex in batch])
            q_batch = tensors.queries[rows]
            d_batch = tensors.docs[rows]
            scores, _ = score_forward_batch(params, q_batch, d_batch)
            transitions: list[Transition] = []
            raw: list[float] = []
            for j, ex in enumerate(batch):
                action, log_prob = sample_topk(scores[j], config.k, rollout_rng)
                selected = [ex.candidate_doc_ids[i] for i in action.indices]
                if config.no_rs:
                    reward_value = reward_engine.sparse(ex, selected)
                else:
                    reward_value = reward_engine.dense(ex, selected)
                h, _ = entropy_grad(scores[j])
                entropies.append(h)
                transitions.append(
                    Transition(
                        example_id=ex.id,
                        candidate_doc_ids=ex.candidate_doc_ids,
                        action=action,
                        old_log_prob=log_prob,
                        raw_reward=reward_value,
                    )
                )
                raw.append(reward_value)
            advantages, baseline = compute_advantage(
                raw, baseline, config.baseline_ema_decay
            )
            for tr, adv in zip(transitions, advantages):
                tr.advantage = float(adv)
            rewards_epoch.extend(raw)

            for _ in range(config.ppo_inner_epochs):
                scores, tanh_acts = score_forward_batch(params, q_batch, d_batch)
                upstream = np.zeros_like(scores)
                batch_loss = 0.0
                for j, tr in enumerate(transitions):
                    new_log_prob, dlp_ds = logprob_grad(scores[j], tr.action)
                    loss, dloss_dnew = _ppo_loss_grad(
                        tr.old_log_prob, new_log_prob, tr.advantage, config.clip_eps
                    )
                    ratio_evals += 1
                    if abs(math.exp(new_log_prob - tr.old_log_prob) - 1.0) > config.clip_eps:
                        clip_events += 1
                    row_grad = dloss_dnew * dlp_ds
                    if config.entropy_coef != 0.0:
                        h, dh_ds = entropy_grad(scores[j])
                        loss -= config.entropy_coef * h
                        row_grad = row_grad - config.entropy_coef * dh_ds
                    upstream[j] = row_grad / len(batch)
                    batch_loss += loss / len(batch)
                if not math.isfinite(batch_loss):
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch}, batch starting {start}"
                    )
                grads = score_gradients_batch(params, q_batch, d_batch, tanh_acts, upstream)
                optimizer.step(params.tensors(), grads.tensors())
                losses_epoch.append(batch_loss)
        stats = EpochStats(
            epoch=epoch,
            mean_reward=float(np.mean(rewards_epoch)),
            mean_loss=float(np.mean(losses_epoch)),
            clip_fraction=clip_events / ratio_evals if ratio_evals else 0.0,
            entropy=float(np.mean(entropies)),
            seconds=time.perf_counter() - tick,
        )
        result.log.append(stats)
        if on_epoch is not None:
            on_epoch(epoch, params, stats)
    return result


def ablation_config(base: TrainConfig, variant: str) -> TrainConfig:
    """Config for one ablation variant: full, no_sw, no_rs, or no_cl."""
    if variant not in ("full", "no_sw", "no_rs", "no_cl"):
        raise ValueError(f"unknown ablation variant '{variant}'")
    flags = {"no_sw": False, "no_rs": False, "no_cl": False}
    if variant != "full":
        flags[variant] = True
    return replace(base, **flags)
