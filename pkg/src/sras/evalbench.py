"""Baselines, batch evaluation reports, and latency/size micro-benchmarks.

Latency here covers the selector only: embedding lookup, scoring, and
top-k extraction for a single query on one thread. Any downstream reader
or generator time is out of scope, so these numbers are not comparable to
end-to-end pipeline latencies; the budget enforced by the benchmark is
1 ms per query.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .dataio import EmbeddingStore, QAExample
from .errors import DataError
from .numcore import SeededRng
from .policy import TopKAction, argmax_topk
from .reward import RewardEngine
from .scorer import SelectorParams, model_bytes, score_candidates

SELECTOR_NAMES = ("sras", "cosine", "random", "supervised")


def cosine_topk(query_embedding, candidate_embeddings, k: int) -> TopKAction:
    """Top-k candidates by cosine similarity, descending, ties to the lower
    index. A zero-norm vector is defined to have cosine 0 with everything."""
    q = np.asarray(query_embedding, dtype=np.float64)
    c = np.asarray(candidate_embeddings, dtype=np.float64)
    if c.ndim != 2 or q.ndim != 1 or c.shape[1] != q.shape[0]:
        raise DataError(f"dim mismatch: query {q.shape}, candidates {c.shape}")
    q_norm = np.linalg.norm(q)
    c_norms = np.linalg.norm(c, axis=1)
    denom = c_norms * q_norm
    sims = np.where(denom > 0.0, (c @ q) / np.where(denom > 0.0, denom, 1.0), 0.0)
    return argmax_topk(sims, k)


def random_topk(n: int, k: int, rng: SeededRng) -> TopKAction:
    """Uniform ordered k-subset without replacement."""
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    return TopKAction(tuple(int(i) for i in rng.choice(n, size=k, replace=False)))


class ParamsSelector:
    """Greedy argmax-k selection with a trained scorer; used for both the
    policy-trained and the cross-entropy-trained variants."""

    def __init__(self, params: SelectorParams, name: str = "sras"):
        if name not in ("sras", "supervised"):
            raise ValueError(f"params selector name must be sras or supervised, got '{name}'")
        self.params = params
        self.name = name

    def select(self, query_embedding, candidate_embeddings, k: int) -> TopKAction:
        scores = score_candidates(self.params, query_embedding, candidate_embeddings)
        return argmax_topk(scores, k)


class CosineSelector:
    name = "cosine"

    def select(self, query_embedding, candidate_embeddings, k: int) -> TopKAction:
        return cosine_topk(query_embedding, candidate_embeddings, k)


class RandomSelector:
    name = "random"

    def __init__(self, rng: SeededRng):
        self.rng = rng

    def select(self, query_embedding, candidate_embeddings, k: int) -> TopKAction:
        return random_topk(len(candidate_embeddings), k, self.rng)


@dataclass
class ExampleResult:
    example_id: str
    selected_doc_ids: tuple[str, ...]
    relaxed_f1: float
    semantic: float
    gold_selected: bool


@dataclass
class LatencyStats:
    mean_us: float
    p50_us: float
    p95_us: float
    iterations: int


@dataclass
class EvalReport:
    selector: str
    k: int
    per_example: list[ExampleResult] = field(default_factory=list)
    mean_relaxed_f1: float = 0.0
    mean_semantic: float = 0.0
    gold_recall: float = 0.0
    latency: LatencyStats | None = None
    model_size_bytes: int = 0

    def recompute_check(self, tol: float = 1e-9) -> bool:
        """Aggregates must equal recomputation from the per-example rows."""
        f1 = float(np.mean([r.relaxed_f1 for r in self.per_example]))
        sem = float(np.mean([r.semantic for r in self.per_example]))
        rec = float(np.mean([r.gold_selected for r in self.per_example]))
        return (
            abs(f1 - self.mean_relaxed_f1) <= tol
            and abs(sem - self.mean_semantic) <= tol
            and abs(rec - self.gold_recall) <= tol
        )

    def to_dict(self) -> dict:
        return {
            "selector": self.selector,
            "k": self.k,
            "mean_relaxed_f1": self.mean_relaxed_f1,
            "mean_semantic": self.mean_semantic,
            "gold_recall": self.gold_recall,
            "model_size_bytes": self.model_size_bytes,
            "latency_us": None
            if self.latency is None
            else {
                "mean": self.latency.mean_us,
                "p50": self.latency.p50_us,
                "p95": self.latency.p95_us,
                "iterations": self.latency.iterations,
            },
            "per_example": [
                {
                    "example_id": r.example_id,
                    "selected_doc_ids": list(r.selected_doc_ids),
                    "relaxed_f1": r.relaxed_f1,
                    "semantic": r.semantic,
                    "gold_selected": r.gold_selected,
                }
                for r in self.per_example
            ],
        }

    def write_json(self, path) -> None:
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")
        os.replace(tmp, path)

    def write_csv(self, path) -> None:
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "w", encoding="utf-8") as f:
            f.write("example_id,selected_doc_ids,relaxed_f1,semantic,gold_selected\n")
            for r in self.per_example:
                joined = "|".join(r.selected_doc_ids)
                f.write(
                    f"{r.example_id},{joined},{r.relaxed_f1!r},{r.semantic!r},"
                    f"{int(r.gold_selected)}\n"
                )
        os.replace(tmp, path)

    def table(self) -> str:
        lat = "-" if self.latency is None else f"{self.latency.mean_us:9.1f}"
        lines = [
            f"{'selector':<12}{'relaxed_f1':>12}{'semantic':>10}{'recall':>8}"
            f"{'lat_us':>10}{'size_b':>10}",
            f"{self.selector:<12}{self.mean_relaxed_f1:>12.4f}{self.mean_semantic:>10.4f}"
            f"{self.gold_recall:>8.3f}{lat:>10}{self.model_size_bytes:>10}",
        ]
        return "\n".join(lines)


def evaluate(
    selector,
    dataset: list[QAExample],
    store: EmbeddingStore,
    reward_engine: RewardEngine,
    k: int = 3,
    measure_latency: bool = True,
) -> EvalReport:
    """Deterministic batch evaluation of one selector over a dataset."""
    if selector.name not in SELECTOR_NAMES:
        raise ValueError(f"unknown selector '{selector.name}'")
    if not dataset:
        raise DataError("cannot evaluate on an empty dataset")
    report = EvalReport(selector=selector.name, k=k)
    for ex in dataset:
        query = store.vector(ex.id).astype(np.float64)
        candidates = store.vectors(ex.candidate_doc_ids).astype(np.float64)
        action = selector.select(query, candidates, k)
        selected = tuple(ex.candidate_doc_ids[i] for i in action.indices)
        f1, semantic = reward_engine.components(ex, selected)
        report.per_example.append(
            ExampleResult(
                example_id=ex.id,
                selected_doc_ids=selected,
                relaxed_f1=f1,
                semantic=semantic,
                gold_selected=ex.gold_doc_id in selected,
            )
        )
    report.mean_relaxed_f1 = float(np.mean([r.relaxed_f1 for r in report.per_example]))
    report.mean_semantic = float(np.mean([r.semantic for r in report.per_example]))
    report.gold_recall = float(np.mean([r.gold_selected for r in report.per_example]))
    if isinstance(selector, ParamsSelector):
        report.model_size_bytes = bench_model_size(selector.params)
    if measure_latency:
        report.latency = bench_latency(selector, dataset, store, k)
    return report


def bench_model_size(params: SelectorParams) -> int:
    """Exact serialized model size in bytes (header + float32 weights)."""
    return len(model_bytes(params))


def bench_latency(
    selector,
    dataset: list[QAExample],
    store: EmbeddingStore,
    k: int = 3,
    warmup_iters: int = 100,
    timed_iters: int = 1000,
) -> LatencyStats:
    """Single-threaded per-query selection latency: embedding lookup plus
    scoring plus top-k, batch size 1, cycling through the dataset."""
    if not dataset:
        raise DataError("cannot benchmark on an empty dataset")

    def one_query(ex: QAExample) -> None:
        query = store.vector(ex.id)
        candidates = store.vectors(ex.candidate_doc_ids)
        selector.select(query, candidates, k)

    n = len(dataset)
    for i in range(warmup_iters):
        one_query(dataset[i % n])
    samples = np.empty(timed_iters)
    for i in range(timed_iters):
        ex = dataset[i % n]
        start = time.perf_counter_ns()
        one_query(ex)
        samples[i] = time.perf_counter_ns() - start
    samples /= 1000.0  # ns -> us
    return LatencyStats(
        mean_us=float(samples.mean()),
        p50_us=float(np.percentile(samples, 50)),
        p95_us=float(np.percentile(samples, 95)),
        iterations=timed_iters,
    )
