"""First-error prediction and the two-sided F1 evaluation harness.

Erroneous trajectories score a hit only on an exact first-error index match;
error-free trajectories score a hit when no error is predicted. The reported
f1 is the harmonic mean of the two subset accuracies, 0 when both are 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .core import Trajectory
from .ensemble import EnsembleModel, forward
from .uncertainty import ensemble_stats, first_error_index

__all__ = [
    "EvalOutcome",
    "EvalRow",
    "harmonic_f1",
    "evaluate",
    "predict_first_error",
    "write_rows_csv",
]


@dataclass(frozen=True)
class EvalRow:
    """One trajectory's gold label, prediction, and hit flag."""

    id: str
    gold: int | None
    predicted: int | None
    hit: bool


@dataclass(frozen=True)
class EvalOutcome:
    """Subset accuracies, their harmonic mean, and the per-trajectory rows."""

    acc_error: float
    acc_correct: float
    f1: float
    rows: tuple[EvalRow, ...]


def harmonic_f1(acc_error: float, acc_correct: float) -> float:
    """Harmonic mean 2ab/(a+b), defined 0 when a + b = 0."""
    s = acc_error + acc_correct
    if s == 0.0:
        return 0.0
    return 2.0 * acc_error * acc_correct / s


def predict_first_error(model: EnsembleModel, traj: Trajectory, delta: float = 0.5) -> int | None:
    """Earliest step whose ensemble-mean score falls strictly below delta."""
    mu, _ = ensemble_stats(forward(model, traj))
    return first_error_index(mu, delta)


def evaluate(model: EnsembleModel, eval_set: list[Trajectory], delta: float = 0.5) -> EvalOutcome:
    """Score eval_set; requires gold labels and both kinds of trajectory."""
    rows = []
    err_hits = err_total = ok_hits = ok_total = 0
    for traj in eval_set:
        if traj.gold is None:
            raise ValueError(f"trajectory {traj.id!r} has no gold label")
        pred = predict_first_error(model, traj, delta)
        gold = traj.gold.first_error
        hit = pred == gold
        if gold is None:
            ok_total += 1
            ok_hits += hit
        else:
            err_total += 1
            err_hits += hit
        rows.append(EvalRow(id=traj.id, gold=gold, predicted=pred, hit=hit))
    if err_total == 0 or ok_total == 0:
        raise ValueError(
            f"eval set needs both erroneous and error-free trajectories, "
            f"got {err_total} erroneous and {ok_total} error-free"
        )
    acc_error = err_hits / err_total
    acc_correct = ok_hits / ok_total
    return EvalOutcome(
        acc_error=acc_error,
        acc_correct=acc_correct,
        f1=harmonic_f1(acc_error, acc_correct),
        rows=tuple(rows),
    )


def write_rows_csv(outcome: EvalOutcome, path: str) -> None:
    """Per-trajectory rows followed by one aggregate row."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["id", "gold", "predicted", "hit"])
        for row in outcome.rows:
            w.writerow(
                [
                    row.id,
                    "" if row.gold is None else row.gold,
                    "" if row.predicted is None else row.predicted,
                    int(row.hit),
                ]
            )
        w.writerow([])
        w.writerow(["acc_error", "acc_correct", "f1", ""])
        w.writerow([f"{outcome.acc_error:.6f}", f"{outcome.acc_correct:.6f}", f"{outcome.f1:.6f}", ""])
