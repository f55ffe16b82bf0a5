"""Command-line entry point.

Subcommands: synth, warmup, train, eval, ablate, bench. Every flag can
also be supplied through ``--config FILE`` where FILE holds ``key = value``
lines (``#`` comments allowed); explicit flags win over config values, and
unknown keys are rejected. All randomness flows from ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import evalbench, synthenv, trainer
from .dataio import (
    EmbeddingStore,
    load_qa_jsonl,
    read_embedding_store,
    write_embedding_store,
    write_qa_jsonl,
)
from .errors import SrasError
from .numcore import AdamW, SeededRng
from .reward import RewardConfig, RewardEngine, load_reward_cache
from .scorer import init_params, load_params, save_params
from .trainer import TrainConfig, ablation_config, trainlog_to_csv

ABLATION_VARIANTS = ("full", "no_sw", "no_rs", "no_cl")


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got '{stripped}'")
            key, _, value = stripped.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config_file(parser: argparse.ArgumentParser, args: list[str]) -> list[str]:
    """Merge ``--config`` values as parser defaults; flags still override.

    Keys are validated against the chosen subcommand's flags; unknown keys
    are rejected. Subparsers leave namespace entries set here untouched
    unless the flag is given explicitly, which is exactly the precedence we
    want (flag > config file > built-in default).
    """
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, rest = probe.parse_known_args(args)
    if not known.config:
        return args
    command = next((a for a in rest if not a.startswith("-")), None)
    sub_action = next(
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    )
    if command is None or command not in sub_action.choices:
        raise ValueError("--config requires a valid subcommand")
    sub = sub_action.choices[command]
    values = _read_config_file(known.config)
    valid = {a.dest: a for a in sub._actions}
    overrides = {}
    for key, raw in values.items():
        if key not in valid or key in ("config", "help"):
            raise ValueError(f"unknown config key '{key}' for subcommand '{command}'")
        action = valid[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            overrides[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            overrides[key] = action.type(raw)
        else:
            overrides[key] = raw
    parser.set_defaults(**overrides)
    sub.set_defaults(**overrides)
    return args


def _require_files(*paths: str | None) -> None:
    for p in paths:
        if p is not None and not os.path.exists(p):
            raise FileNotFoundError(f"input file not found: {p}")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file; flags override it")
    parser.add_argument("--seed", type=int, default=42, help="master random seed")


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    cfg = TrainConfig()
    parser.add_argument("--epochs", type=int, default=cfg.epochs, help="policy-gradient epochs")
    parser.add_argument("--batch-size", type=int, default=cfg.batch_size, help="examples per batch")
    parser.add_argument("--k", type=int, default=cfg.k, help="documents selected per query")
    parser.add_argument("--n", type=int, default=cfg.n, help="candidate pool size per example")
    parser.add_argument("--lr", type=float, default=cfg.lr, help="policy-gradient learning rate")
    parser.add_argument(
        "--warmup-lr", type=float, default=cfg.warmup_lr, help="cross-entropy warmup learning rate"
    )
    parser.add_argument("--gamma", type=float, default=cfg.gamma, help="discount factor")
    parser.add_argument("--clip-eps", type=float, default=cfg.clip_eps, help="ratio clip width")
    parser.add_argument(
        "--warmup-epochs", type=int, default=cfg.warmup_epochs, help="supervised warmup epochs"
    )
    parser.add_argument(
        "--ppo-inner-epochs",
        type=int,
        default=cfg.ppo_inner_epochs,
        help="gradient passes per collected batch",
    )
    parser.add_argument(
        "--baseline-ema-decay",
        type=float,
        default=cfg.baseline_ema_decay,
        help="decay of the reward-baseline moving average",
    )
    parser.add_argument(
        "--entropy-coef", type=float, default=cfg.entropy_coef, help="entropy bonus coefficient"
    )


def _add_reward_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=float, default=0.6, help="lexical/semantic mix weight")
    parser.add_argument(
        "--semantic-source",
        choices=("precomputed-cache", "embedding-cosine", "synthetic-oracle", "constant-zero"),
        default="synthetic-oracle",
        help="where semantic scores come from",
    )
    parser.add_argument("--cache", help="reward cache JSONL (for precomputed-cache)")
    parser.add_argument("--token-table", help="token embedding store (for embedding-cosine)")


def _train_config(args: argparse.Namespace, **flags) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        k=args.k,
        n=args.n,
        lr=args.lr,
        warmup_lr=args.warmup_lr,
        gamma=args.gamma,
        clip_eps=args.clip_eps,
        warmup_epochs=args.warmup_epochs,
        ppo_inner_epochs=args.ppo_inner_epochs,
        baseline_ema_decay=args.baseline_ema_decay,
        entropy_coef=args.entropy_coef,
        seed=args.seed,
        **flags,
    )


def _reward_engine(args: argparse.Namespace, store: EmbeddingStore) -> RewardEngine:
    config = RewardConfig(alpha=args.alpha, semantic_source=args.semantic_source)
    cache = None
    token_table = None
    if args.semantic_source == "precomputed-cache":
        if not args.cache:
            raise ValueError("--cache is required with --semantic-source precomputed-cache")
        _require_files(args.cache)
        cache = load_reward_cache(args.cache)
    if args.semantic_source == "embedding-cosine":
        if not args.token_table:
            raise ValueError("--token-table is required with --semantic-source embedding-cosine")
        _require_files(args.token_table)
        token_table = read_embedding_store(args.token_table)
    return RewardEngine(config, store=store, token_table=token_table, cache=cache)


def cmd_synth(args: argparse.Namespace) -> int:
    total = args.train_examples + args.test_examples
    config = synthenv.SynthConfig(
        num_examples=total,
        n=args.n,
        d=args.dim,
        sigma=args.sigma,
        corpus_size=args.corpus_size,
        seed=args.seed,
    )
    store, examples = synthenv.generate_task(config)
    write_embedding_store(store, args.out_store)
    write_qa_jsonl(examples[: args.train_examples], args.out_train)
    write_qa_jsonl(examples[args.train_examples :], args.out_test)
    print(
        f"synth: {len(store)} embeddings (d={store.dim}) -> {args.out_store}; "
        f"{args.train_examples} train -> {args.out_train}; "
        f"{args.test_examples} test -> {args.out_test}"
    )
    return 0


def cmd_warmup(args: argparse.Namespace) -> int:
    _require_files(args.store, args.qa)
    store = read_embedding_store(args.store)
    dataset = load_qa_jsonl(args.qa)
    config = _train_config(args)
    master = SeededRng(args.seed)
    params = init_params(args.dim, args.hidden, master.split("init"))
    optimizer = AdamW(lr=config.warmup_lr)
    rng = master.split("warmup")
    losses = []
    for epoch in range(args.epochs):
        loss = trainer.warmup_epoch(params, dataset, store, config, optimizer=optimizer, rng=rng)
        losses.append(loss)
        print(f"warmup epoch {epoch}: cross-entropy {loss:.6f}")
    save_params(params, args.model_out)
    if args.log_out:
        tmp = f"{args.log_out}.tmp.{os.getpid()}"
        with open(tmp, "w", encoding="utf-8") as f:
            f.write("epoch,cross_entropy\n")
            for i, loss in enumerate(losses):
                f.write(f"{i},{loss!r}\n")
        os.replace(tmp, args.log_out)
    print(f"warmup: model -> {args.model_out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    _require_files(args.store, args.qa)
    store = read_embedding_store(args.store)
    dataset = load_qa_jsonl(args.qa)
    config = _train_config(args, no_sw=args.no_sw, no_rs=args.no_rs, no_cl=args.no_cl)
    engine = _reward_engine(args, store)
    master = SeededRng(args.seed)
    params = init_params(args.dim, args.hidden, master.split("init"))
    on_epoch = None
    if args.checkpoint_every > 0:
        ckpt_dir = args.checkpoint_dir or os.path.dirname(os.path.abspath(args.model_out))
        os.makedirs(ckpt_dir, exist_ok=True)

        def on_epoch(epoch, current_params, _stats):
            if (epoch + 1) % args.checkpoint_every == 0:
                save_params(
                    current_params, os.path.join(ckpt_dir, f"checkpoint_{epoch:04d}.srsm")
                )

    result = trainer.train(params, dataset, store, engine, config, on_epoch=on_epoch)
    save_params(result.params, args.model_out)
    if args.log_out:
        trainlog_to_csv(result.log, args.log_out)
    final = result.log[-1].mean_reward if result.log else float("nan")
    print(
        f"train: {config.epochs} epochs, final mean reward {final:.4f}, "
        f"model -> {args.model_out}"
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    _require_files(args.store, args.qa)
    store = read_embedding_store(args.store)
    dataset = load_qa_jsonl(args.qa)
    engine = _reward_engine(args, store)
    if args.selector in ("sras", "supervised"):
        if not args.model:
            raise ValueError(f"--model is required for selector '{args.selector}'")
        _require_files(args.model)
        selector = evalbench.ParamsSelector(load_params(args.model), name=args.selector)
    elif args.selector == "cosine":
        selector = evalbench.CosineSelector()
    else:
        selector = evalbench.RandomSelector(SeededRng(args.seed).split("random-eval"))
    report = evalbench.evaluate(
        selector, dataset, store, engine, k=args.k, measure_latency=not args.no_latency
    )
    if args.report_json:
        report.write_json(args.report_json)
    if args.report_csv:
        report.write_csv(args.report_csv)
    print(report.table())
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    _require_files(args.store, args.qa, args.test_qa)
    store = read_embedding_store(args.store)
    dataset = load_qa_jsonl(args.qa)
    test_set = load_qa_jsonl(args.test_qa) if args.test_qa else None
    engine = _reward_engine(args, store)
    os.makedirs(args.out_dir, exist_ok=True)
    base = _train_config(args)
    master = SeededRng(args.seed)
    init_rng_seed = master.split("init")
    rows = []
    for variant in ABLATION_VARIANTS:
        params = init_params(args.dim, args.hidden, SeededRng(init_rng_seed.seed))
        config = ablation_config(base, variant)
        result = trainer.train(params, dataset, store, engine, config)
        trainlog_to_csv(result.log, os.path.join(args.out_dir, f"trainlog_{variant}.csv"))
        save_params(result.params, os.path.join(args.out_dir, f"model_{variant}.srsm"))
        rewards = [e.mean_reward for e in result.log]
        row = {
            "variant": variant,
            "final_mean_reward": rewards[-1] if rewards else float("nan"),
            "first5_reward_std": float(np.std(rewards[:5])) if rewards else float("nan"),
            "mean_reward_auc": float(np.mean(rewards)) if rewards else float("nan"),
        }
        if test_set is not None:
            selector = evalbench.ParamsSelector(result.params, name="sras")
            report = evalbench.evaluate(
                selector, test_set, store, engine, k=args.k, measure_latency=False
            )
            row["test_gold_recall"] = report.gold_recall
        rows.append(row)
        print(f"ablate {variant}: final reward {row['final_mean_reward']:.4f}")
    summary_path = os.path.join(args.out_dir, "ablation_summary.json")
    tmp = f"{summary_path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(rows, f, indent=2)
        f.write("\n")
    os.replace(tmp, summary_path)
    csv_path = os.path.join(args.out_dir, "ablation_summary.csv")
    tmp = f"{csv_path}.tmp.{os.getpid()}"
    keys = list(rows[0].keys())
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(",".join(keys) + "\n")
        for row in rows:
            f.write(",".join(str(row[key]) for key in keys) + "\n")
    os.replace(tmp, csv_path)
    print(f"ablate: summary -> {summary_path}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    if args.model:
        _require_files(args.model)
        params = load_params(args.model)
    else:
        params = init_params(args.dim, args.hidden, SeededRng(args.seed).split("init"))
    if args.store and args.qa:
        _require_files(args.store, args.qa)
        store = read_embedding_store(args.store)
        dataset = load_qa_jsonl(args.qa)
    else:
        config = synthenv.SynthConfig(
            num_examples=32, n=args.n, d=params.d, corpus_size=max(args.n, 32), seed=args.seed
        )
        store, dataset = synthenv.generate_task(config)
    selector = evalbench.ParamsSelector(params, name="sras")
    size = evalbench.bench_model_size(params)
    latency = evalbench.bench_latency(
        selector, dataset, store, k=args.k, warmup_iters=args.warmup_iters,
        timed_iters=args.timed_iters,
    )
    payload = {
        "model_size_bytes": size,
        "model_size_mb": size / (1024 * 1024),
        "param_count": 2 * params.h * params.d + params.h,
        "latency_us": {
            "mean": latency.mean_us,
            "p50": latency.p50_us,
            "p95": latency.p95_us,
            "iterations": latency.iterations,
        },
    }
    payload["latency_budget_us"] = args.latency_budget_us
    payload["within_budget"] = latency.mean_us < args.latency_budget_us
    if args.report_json:
        tmp = f"{args.report_json}.tmp.{os.getpid()}"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2)
            f.write("\n")
        os.replace(tmp, args.report_json)
    print(
        f"bench: {payload['param_count']} params, {size} bytes "
        f"({payload['model_size_mb']:.3f} MB), latency mean {latency.mean_us:.1f} us "
        f"(p50 {latency.p50_us:.1f}, p95 {latency.p95_us:.1f})"
    )
    if not payload["within_budget"]:
        print(
            f"error: mean latency {latency.mean_us:.1f} us exceeds budget "
            f"{args.latency_budget_us:.0f} us",
            file=sys.stderr,
        )
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sras",
        description="Compact learned document selector: train, evaluate, benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("synth", help="generate a synthetic planted-gold task", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--train-examples", type=int, default=500)
    p.add_argument("--test-examples", type=int, default=200)
    p.add_argument("--corpus-size", type=int, default=100)
    p.add_argument("--sigma", type=float, default=0.3, help="gold embedding noise scale")
    p.add_argument("--dim", type=int, default=384, help="embedding dimension")
    p.add_argument("--n", type=int, default=8, help="candidate pool size")
    p.add_argument("--out-store", required=True)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser(
        "warmup", help="cross-entropy training only (supervised baseline)", formatter_class=fmt
    )
    _add_common(p)
    _add_train_flags(p)
    p.add_argument("--dim", type=int, default=384)
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--store", required=True)
    p.add_argument("--qa", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--log-out")
    p.set_defaults(func=cmd_warmup)

    p = sub.add_parser("train", help="full policy-gradient training", formatter_class=fmt)
    _add_common(p)
    _add_train_flags(p)
    _add_reward_flags(p)
    p.add_argument("--dim", type=int, default=384)
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--no-sw", action="store_true", help="disable supervised warmup")
    p.add_argument("--no-rs", action="store_true", help="sparse exact-match reward")
    p.add_argument("--no-cl", action="store_true", help="disable curriculum ordering")
    p.add_argument("--store", required=True)
    p.add_argument("--qa", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--log-out")
    p.add_argument(
        "--checkpoint-every", type=int, default=0,
        help="write a checkpoint every N epochs (0 = final model only)",
    )
    p.add_argument("--checkpoint-dir", help="checkpoint directory (default: model-out's)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate one selector", formatter_class=fmt)
    _add_common(p)
    _add_reward_flags(p)
    p.add_argument("--selector", choices=evalbench.SELECTOR_NAMES, required=True)
    p.add_argument("--model", help="model file for sras/supervised selectors")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--store", required=True)
    p.add_argument("--qa", required=True)
    p.add_argument("--report-json")
    p.add_argument("--report-csv")
    p.add_argument("--no-latency", action="store_true", help="skip the latency benchmark")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "ablate", help="train full/no_sw/no_rs/no_cl at a shared seed", formatter_class=fmt
    )
    _add_common(p)
    _add_train_flags(p)
    _add_reward_flags(p)
    p.add_argument("--dim", type=int, default=384)
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--store", required=True)
    p.add_argument("--qa", required=True)
    p.add_argument("--test-qa", help="held-out set for per-variant recall")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench", help="latency and model-size benchmark", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--model", help="model file; a fresh init is used when omitted")
    p.add_argument("--dim", type=int, default=384)
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--warmup-iters", type=int, default=100)
    p.add_argument("--timed-iters", type=int, default=1000)
    p.add_argument(
        "--latency-budget-us", type=float, default=1000.0,
        help="fail (exit 1) when mean latency exceeds this many microseconds",
    )
    p.add_argument("--store")
    p.add_argument("--qa")
    p.add_argument("--report-json")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    args_list = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args_list = _apply_config_file(parser, args_list)
        args = parser.parse_args(args_list)
        return args.func(args)
    except (SrasError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
