"""Uncertainty-gated active training loop, one-shot filtering, the random
baseline, threshold grid search, and the annotation-budget ledger.

The pool loop makes a single pass (more epochs are opt-in) over a seeded
shuffle of the dataset in batches of ``config.batch_size``. Each batch is
gate-partitioned; retained trajectories are sent to the annotator (failures
are dropped from the batch, not counted as annotated); the SGD step uses the
mean loss over the successfully labeled subset only. The random baseline
runs the identical loop with gate selection replaced by an independent
seeded coin, drawn from a separate RNG stream so both arms shuffle the pool
identically under the same seed.

Ledger rows carry cumulative (seen, retained, annotated, tokens_spent) plus
the batch's pre-update training loss; tokens_spent is annotated times the
per-label judge-critique token constant.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .annotate import Annotation, AnnotationError, AnnotatorUnavailable
from .core import Config, GoldLabel, Trajectory
from .costs import CostConstants
from .ensemble import EnsembleModel, forward, grad, loss, sgd_step
from .evaluation import evaluate
from .uncertainty import UncertaintyReport, ensemble_stats, gates, is_uncertain

__all__ = [
    "BudgetLedger",
    "GridRow",
    "LedgerRow",
    "SelectionResult",
    "grid_search",
    "run_one_shot_filter",
    "run_full",
    "run_pool_based",
    "run_random_baseline",
    "save_grid_csv",
    "select_batch",
]

Annotator = Callable[[Trajectory], Annotation]


@dataclass(frozen=True)
class LedgerRow:
    """Cumulative counters after one batch plus that batch's training loss."""

    batch: int
    seen: int
    retained: int
    annotated: int
    tokens_spent: float
    loss: float  # nan when the batch had no labeled data


@dataclass
class BudgetLedger:
    """Append-only account of what the loop looked at and paid for."""

    cost_per_label: float = CostConstants().C
    seen: int = 0
    retained: int = 0
    annotated: int = 0
    history: list[LedgerRow] = field(default_factory=list)

    @property
    def tokens_spent(self) -> float:
        return self.annotated * self.cost_per_label

    def record_batch(self, seen: int, retained: int, annotated: int, batch_loss: float) -> None:
        if not (annotated <= retained <= seen):
            raise ValueError(f"bad batch counts: annotated={annotated} retained={retained} seen={seen}")
        self.seen += seen
        self.retained += retained
        self.annotated += annotated
        self.history.append(
            LedgerRow(
                batch=len(self.history),
                seen=self.seen,
                retained=self.retained,
                annotated=self.annotated,
                tokens_spent=self.tokens_spent,
                loss=batch_loss,
            )
        )

    def save_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["batch", "seen", "retained", "annotated", "tokens_spent", "loss"])
            for row in self.history:
                w.writerow(
                    [row.batch, row.seen, row.retained, row.annotated,
                     repr(row.tokens_spent), repr(row.loss)]
                )

    @classmethod
    def load_csv(cls, path: str, cost_per_label: float | None = None) -> "BudgetLedger":
        ledger = cls() if cost_per_label is None else cls(cost_per_label=cost_per_label)
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        for r in rows:
            ledger.history.append(
                LedgerRow(
                    batch=int(r["batch"]),
                    seen=int(r["seen"]),
                    retained=int(r["retained"]),
                    annotated=int(r["annotated"]),
                    tokens_spent=float(r["tokens_spent"]),
                    loss=float(r["loss"]),
                )
            )
        if ledger.history:
            last = ledger.history[-1]
            ledger.seen, ledger.retained, ledger.annotated = last.seen, last.retained, last.annotated
        return ledger


@dataclass(frozen=True)
class SelectionResult:
    """Gate partition of one batch; retained ids all fired a gate."""

    retained: tuple[str, ...]
    skipped: tuple[str, ...]
    reports: dict[str, UncertaintyReport]

    @property
    def retained_fraction(self) -> float:
        total = len(self.retained) + len(self.skipped)
        return len(self.retained) / total if total else 0.0


def select_batch(model: EnsembleModel, batch: list[Trajectory], config: Config) -> SelectionResult:
    """Partition the batch by the dual uncertainty gates."""
    if not batch:
        raise ValueError("select_batch requires a nonempty batch")
    retained: list[str] = []
    skipped: list[str] = []
    reports: dict[str, UncertaintyReport] = {}
    for traj in batch:
        mu, sigma = ensemble_stats(forward(model, traj))
        report = gates(mu, sigma, config)
        reports[traj.id] = report
        (retained if is_uncertain(report) else skipped).append(traj.id)
    return SelectionResult(retained=tuple(retained), skipped=tuple(skipped), reports=reports)


def _rng_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    shuffle_ss, coin_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(shuffle_ss), np.random.default_rng(coin_ss)


def _annotate_many(
    annotator: Annotator, trajs: list[Trajectory], workers: int
) -> list[Annotation | None]:
    """Annotate in input order; None marks a dropped (failed) trajectory.

    Results are gathered in submission order, so worker count never changes
    the outcome, only the wall time. AnnotatorUnavailable aborts the batch.
    """

    def one(traj: Trajectory) -> Annotation | None:
        try:
            return annotator(traj)
        except AnnotatorUnavailable:
            raise
        except AnnotationError:
            return None

    if workers <= 1 or len(trajs) <= 1:
        return [one(t) for t in trajs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, trajs))


def _train_on_batch(
    model: EnsembleModel,
    batch: list[Trajectory],
    keep_ids: set[str],
    annotator: Annotator,
    config: Config,
    ledger: BudgetLedger,
    workers: int,
) -> None:
    """Annotate the retained subset, log the batch, and apply one SGD step."""
    kept = [t for t in batch if t.id in keep_ids]
    annotations = _annotate_many(annotator, kept, workers)
    labeled: list[tuple[Trajectory, GoldLabel]] = []
    for traj, ann in zip(kept, annotations):
        if ann is not None:
            labeled.append((traj, GoldLabel(first_error=ann.first_error)))
    if labeled:
        batch_loss = float(
            np.mean([loss(model, t, lab, lam=config.lam) for t, lab in labeled])
        )
        g = grad(model, labeled, lam=config.lam)
        sgd_step(model, g, config.lr)
    else:
        batch_loss = math.nan
    ledger.record_batch(
        seen=len(batch), retained=len(kept), annotated=len(labeled), batch_loss=batch_loss
    )


def _batches(order: np.ndarray, dataset: list[Trajectory], size: int):
    for start in range(0, len(order), size):
        yield [dataset[int(i)] for i in order[start : start + size]]


def run_pool_based(
    model: EnsembleModel,
    dataset: list[Trajectory],
    annotator: Annotator,
    config: Config,
    ledger: BudgetLedger | None = None,
    workers: int = 1,
    epochs: int = 1,
) -> tuple[EnsembleModel, BudgetLedger]:
    """Gate-selected annotate-and-train pass(es) over a seeded pool shuffle."""
    if not dataset:
        raise ValueError("run_pool_based requires a nonempty dataset")
    if ledger is None:
        ledger = BudgetLedger()
    shuffle_rng, _ = _rng_streams(config.seed)
    for _ in range(epochs):
        order = shuffle_rng.permutation(len(dataset))
        for batch in _batches(order, dataset, config.batch_size):
            selection = select_batch(model, batch, config)
            _train_on_batch(
                model, batch, set(selection.retained), annotator, config, ledger, workers
            )
    return model, ledger


def run_random_baseline(
    model: EnsembleModel,
    dataset: list[Trajectory],
    annotator: Annotator,
    config: Config,
    budget_fraction: float,
    ledger: BudgetLedger | None = None,
    workers: int = 1,
    epochs: int = 1,
) -> tuple[EnsembleModel, BudgetLedger]:
    """Control arm: same loop, retention by an independent seeded coin."""
    if not dataset:
        raise ValueError("run_random_baseline requires a nonempty dataset")
    if not (0.0 <= budget_fraction <= 1.0):
        raise ValueError(f"budget_fraction must be in [0, 1], got {budget_fraction}")
    if ledger is None:
        ledger = BudgetLedger()
    shuffle_rng, coin_rng = _rng_streams(config.seed)
    for _ in range(epochs):
        order = shuffle_rng.permutation(len(dataset))
        for batch in _batches(order, dataset, config.batch_size):
            coins = coin_rng.random(len(batch))
            keep = {t.id for t, c in zip(batch, coins) if c < budget_fraction}
            _train_on_batch(model, batch, keep, annotator, config, ledger, workers)
    return model, ledger


def run_full(
    model: EnsembleModel,
    dataset: list[Trajectory],
    annotator: Annotator,
    config: Config,
    ledger: BudgetLedger | None = None,
    workers: int = 1,
    epochs: int = 1,
) -> tuple[EnsembleModel, BudgetLedger]:
    """Full-data tuning: every trajectory is retained and annotated."""
    if not dataset:
        raise ValueError("run_full requires a nonempty dataset")
    if ledger is None:
        ledger = BudgetLedger()
    shuffle_rng, _ = _rng_streams(config.seed)
    for _ in range(epochs):
        order = shuffle_rng.permutation(len(dataset))
        for batch in _batches(order, dataset, config.batch_size):
            _train_on_batch(model, batch, {t.id for t in batch}, annotator, config, ledger, workers)
    return model, ledger


def run_one_shot_filter(
    model: EnsembleModel, dataset: list[Trajectory], config: Config
) -> SelectionResult:
    """Pure selection pass over the whole pool; no weight updates."""
    if not dataset:
        raise ValueError("run_one_shot_filter requires a nonempty dataset")
    return select_batch(model, dataset, config)


@dataclass(frozen=True)
class GridRow:
    """One grid cell: thresholds, normalized budget, and eval f1."""

    delta_pred: float
    delta_std: float
    budget: float
    f1: float


def grid_search(
    dataset: list[Trajectory],
    annotator: Annotator,
    config: Config,
    grid: list[tuple[float, float]],
    eval_set: list[Trajectory],
    init: EnsembleModel | None = None,
    workers: int = 1,
) -> list[GridRow]:
    """run_pool_based per (delta_pred, delta_std) cell from one shared init.

    Budget is normalized by the pool size, the count full-data tuning would
    annotate. Requires an eval set with gold labels for the f1 column.
    """
    if not grid:
        raise ValueError("grid_search requires at least one (delta_pred, delta_std) cell")
    if init is None:
        from .ensemble import init_model

        init = init_model(config, np.random.default_rng(np.random.SeedSequence(config.seed)))
    rows = []
    for delta_pred, delta_std in grid:
        cell_config = config.with_overrides(delta_pred=delta_pred, delta_std=delta_std)
        model = init.copy()
        _, ledger = run_pool_based(model, dataset, annotator, cell_config, workers=workers)
        outcome = evaluate(model, eval_set, cell_config.delta)
        rows.append(
            GridRow(
                delta_pred=delta_pred,
                delta_std=delta_std,
                budget=ledger.annotated / len(dataset),
                f1=outcome.f1,
            )
        )
    return rows


def save_grid_csv(rows: list[GridRow], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["delta_pred", "delta_std", "budget", "f1"])
        for r in rows:
            w.writerow([repr(r.delta_pred), repr(r.delta_std), repr(r.budget), repr(r.f1)])
