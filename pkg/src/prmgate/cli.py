"""Command-line entry point: gen | train | filter | eval | cost | report.

stdout carries data (tables, metrics, series); stderr carries logs and
warnings. Exit codes: 0 success, 2 configuration error, 3 data error,
4 annotator error, 5 numeric divergence. Every artifact-producing run
writes a manifest (config, seed, input hashes, git description) capturing
what is needed to reproduce it.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import subprocess
import sys
from dataclasses import asdict
from functools import partial

import numpy as np

from . import active, annotate, costs, datagen, evaluation
from .core import Config, ConfigError, DatasetError, load_config, load_dataset, save_dataset
from .ensemble import (
    CheckpointError,
    DivergenceError,
    init_model,
    load_checkpoint,
    save_checkpoint,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ANNOTATOR = 4
EXIT_DIVERGENCE = 5


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=10,
        )
        return out.stdout.strip() or "unknown"
    except OSError:
        return "unknown"


def _write_manifest(out_dir: str, command: str, config: dict, seed: int | None,
                    inputs: list[str], outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {p: _sha256(p) for p in inputs if p and os.path.exists(p)},
        "outputs": sorted(os.path.basename(p) for p in outputs),
        "git": _git_describe(),
    }
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _build_config(args: argparse.Namespace, feature_dim: int | None) -> Config:
    overrides = {}
    for field_name, attr in (
        ("n_heads", "n_heads"), ("trunk_dim", "trunk_dim"), ("lam", "lam"),
        ("lr", "lr"), ("batch_size", "batch_size"), ("delta", "delta"),
        ("delta_pred", "delta_pred"), ("delta_std", "delta_std"), ("seed", "seed"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[field_name] = value
    if feature_dim is not None:
        overrides["feature_dim"] = feature_dim
    if getattr(args, "config", None):
        return load_config(args.config, **overrides)
    base = dict(n_heads=4, feature_dim=feature_dim if feature_dim else 1)
    base.update(overrides)
    return Config(**base)


def _make_annotator(args: argparse.Namespace):
    if args.annotator == "oracle":
        return annotate.oracle_annotate
    client = annotate.RemoteJudgeClient(
        endpoint=getattr(args, "endpoint", None),
        cache_dir=getattr(args, "cache_dir", None),
    )
    return partial(annotate.judge_annotate, client)


def cmd_gen(args: argparse.Namespace) -> int:
    spec = datagen.GenSpec(
        count=args.count,
        feature_dim=args.feature_dim,
        max_steps=args.max_steps,
        temperature=args.temperature,
        error_rate=args.error_rate,
        seed=args.seed if args.seed is not None else 0,
    )
    dataset = datagen.generate(spec)
    out = args.out
    outputs = []
    if args.eval_fraction > 0.0:
        train, eval_set = datagen.split(dataset, (1.0 - args.eval_fraction, args.eval_fraction))
        stem, ext = os.path.splitext(out)
        train_path, eval_path = f"{stem}.train{ext}", f"{stem}.eval{ext}"
        save_dataset(train, train_path)
        save_dataset(eval_set, eval_path)
        outputs += [train_path, eval_path]
        _log(f"wrote {len(train)} train -> {train_path}, {len(eval_set)} eval -> {eval_path}")
    else:
        save_dataset(dataset, out)
        outputs.append(out)
        _log(f"wrote {len(dataset)} trajectories -> {out}")
    spec_path = f"{out}.genspec.json"
    datagen.save_genspec(spec, spec_path)
    outputs.append(spec_path)
    out_dir = os.path.dirname(os.path.abspath(out)) or "."
    _write_manifest(out_dir, "gen", asdict(spec), spec.seed, [], outputs)
    for path in outputs:
        print(path)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.dataset)
    if not dataset:
        raise DatasetError(f"dataset {args.dataset} is empty")
    config = _build_config(args, feature_dim=dataset[0].feature_dim)
    os.makedirs(args.out_dir, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    model = init_model(config, rng) if args.checkpoint is None else load_checkpoint(args.checkpoint)
    annotator = _make_annotator(args)
    ledger = active.BudgetLedger()
    ckpt_path = os.path.join(args.out_dir, "checkpoint.bin")
    ledger_path = os.path.join(args.out_dir, "ledger.csv")

    aborted = False
    try:
        if args.mode == "active":
            active.run_pool_based(model, dataset, annotator, config, ledger,
                                  workers=args.workers, epochs=args.epochs)
        elif args.mode == "random":
            if args.budget_fraction is None:
                raise ConfigError("--budget-fraction is required for mode=random")
            active.run_random_baseline(model, dataset, annotator, config,
                                       args.budget_fraction, ledger,
                                       workers=args.workers, epochs=args.epochs)
        else:
            active.run_full(model, dataset, annotator, config, ledger,
                            workers=args.workers, epochs=args.epochs)
    except annotate.AnnotatorUnavailable as exc:
        _log(f"annotator unavailable, saving resumable state: {exc}")
        aborted = True
    save_checkpoint(model, ckpt_path)
    ledger.save_csv(ledger_path)
    _write_manifest(
        args.out_dir, f"train:{args.mode}", config.as_dict(), config.seed,
        [args.dataset] + ([args.config] if args.config else []),
        [ckpt_path, ledger_path],
    )
    if ledger.annotated == 0:
        _log("warning: no trajectories were annotated; the model is unchanged")
    print(f"annotated={ledger.annotated} seen={ledger.seen} "
          f"tokens_spent={ledger.tokens_spent!r}")
    print(ckpt_path)
    print(ledger_path)
    return EXIT_ANNOTATOR if aborted else EXIT_OK


def cmd_filter(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.dataset)
    if not dataset:
        raise DatasetError(f"dataset {args.dataset} is empty")
    model = load_checkpoint(args.checkpoint)
    config = _build_config(args, feature_dim=dataset[0].feature_dim)
    if config.n_heads != model.n_heads or config.feature_dim != model.feature_dim:
        config = config.with_overrides(n_heads=model.n_heads, feature_dim=model.feature_dim)
    result = active.run_one_shot_filter(model, dataset, config)
    os.makedirs(args.out_dir, exist_ok=True)
    ids_path = os.path.join(args.out_dir, "retained_ids.txt")
    with open(ids_path, "w", encoding="utf-8") as f:
        for tid in result.retained:
            f.write(tid + "\n")
    _write_manifest(args.out_dir, "filter", config.as_dict(), config.seed,
                    [args.dataset, args.checkpoint], [ids_path])
    print(f"retained={len(result.retained)} skipped={len(result.skipped)} "
          f"fraction={result.retained_fraction:.6f}")
    print(ids_path)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.dataset)
    if not dataset:
        raise DatasetError(f"dataset {args.dataset} is empty")
    model = load_checkpoint(args.checkpoint)
    try:
        outcome = evaluation.evaluate(model, dataset, args.delta)
    except ValueError as exc:
        raise DatasetError(str(exc)) from exc
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        rows_path = os.path.join(args.out_dir, "eval.csv")
        evaluation.write_rows_csv(outcome, rows_path)
        _write_manifest(args.out_dir, "eval", {"delta": args.delta}, None,
                        [args.dataset, args.checkpoint], [rows_path])
        _log(f"wrote per-trajectory rows -> {rows_path}")
    print(f"acc_error={outcome.acc_error:.6f} acc_correct={outcome.acc_correct:.6f} "
          f"f1={outcome.f1:.6f}")
    return EXIT_OK


def cmd_cost(args: argparse.Namespace) -> int:
    rows = costs.cost_table()
    if args.format == "csv":
        print("strategy,N,tokens,log2_tokens")
        for name, n, tokens, log2_tokens in rows:
            print(f"{name},{n},{tokens!r},{log2_tokens:.4f}")
    else:
        print(f"{'strategy':<18} {'N':>10} {'tokens':>16} {'log2':>8}")
        for name, n, tokens, log2_tokens in rows:
            print(f"{name:<18} {n:>10} {tokens:>16.3e} {log2_tokens:>8.2f}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    ledger = active.BudgetLedger.load_csv(args.ledger)
    f1 = None
    if args.f1 is not None:
        f1 = args.f1
    print("batch,budget,annotated,tokens_spent,loss,f1")
    total_seen = ledger.history[-1].seen if ledger.history else 0
    for row in ledger.history:
        budget = row.annotated / total_seen if total_seen else 0.0
        loss_field = "" if math.isnan(row.loss) else repr(row.loss)
        f1_field = "" if f1 is None else repr(f1)
        print(f"{row.batch},{budget:.6f},{row.annotated},{row.tokens_spent!r},"
              f"{loss_field},{f1_field}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prmgate",
        description="Uncertainty-gated active learning for step-level reward models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic labeled dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--feature-dim", type=int, default=8)
    p.add_argument("--max-steps", type=int, default=6)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--error-rate", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-fraction", type=float, default=0.0)
    p.add_argument("--out", default="dataset.jsonl")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a scorer on a dataset")
    p.add_argument("--mode", choices=["active", "random", "full"], default="active")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--checkpoint", default=None, help="resume from this checkpoint")
    p.add_argument("--annotator", choices=["oracle", "judge"], default="oracle")
    p.add_argument("--endpoint", default=None)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-heads", type=int, default=None)
    p.add_argument("--trunk-dim", type=int, default=None)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--delta-pred", type=float, default=None)
    p.add_argument("--delta-std", type=float, default=None)
    p.add_argument("--budget-fraction", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("filter", help="one-shot uncertainty filtering pass")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--delta-pred", type=float, default=None)
    p.add_argument("--delta-std", type=float, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("eval", help="score a labeled eval set")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cost", help="annotation-cost table for the four strategies")
    p.add_argument("--format", choices=["table", "csv"], default="table")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("report", help="budget-vs-score series from a ledger")
    p.add_argument("--ledger", required=True)
    p.add_argument("--f1", type=float, default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except (DatasetError, CheckpointError) as exc:
        _log(f"data error: {exc}")
        return EXIT_DATA
    except FileNotFoundError as exc:
        _log(f"data error: {exc}")
        return EXIT_DATA
    except annotate.AnnotationError as exc:
        _log(f"annotator error: {exc}")
        return EXIT_ANNOTATOR
    except DivergenceError as exc:
        _log(f"numeric divergence: {exc}")
        return EXIT_DIVERGENCE
    except ValueError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
