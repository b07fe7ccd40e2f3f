"""Ensemble statistics and the dual uncertainty gates.

Given per-head step probabilities, the ensemble mean mu_i scores step i and
the population std sigma_i measures head disagreement. The predicted first
error is the earliest step with mu_i < delta (strict). Gates scan steps 0
through the predicted first error (or the last step when none is predicted):

  aleatoric: some scanned step has max(mu_i, 1 - mu_i) < delta_pred (strict)
  epistemic: some scanned step has sigma_i > delta_std (strict)

A trajectory is uncertain when either gate fires. Setting delta_pred = 0.5
disables the aleatoric gate (the max is always >= 0.5) and delta_std = inf
disables the epistemic gate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Config
from .ensemble import ForwardOutput

__all__ = [
    "UncertaintyReport",
    "aleatoric_raw",
    "aleatoric_score",
    "ensemble_stats",
    "first_error_index",
    "gates",
    "is_uncertain",
]


@dataclass(frozen=True)
class UncertaintyReport:
    """Gate outcome for one trajectory."""

    mu: np.ndarray
    sigma: np.ndarray
    predicted_first_error: int | None
    scan_end: int
    aleatoric: bool
    epistemic: bool


def ensemble_stats(out: ForwardOutput) -> tuple[np.ndarray, np.ndarray]:
    """Per-step ensemble mean and population std (ddof=0) over heads."""
    probs = out.probs
    mu = np.mean(probs, axis=0)
    sigma = np.std(probs, axis=0)
    return mu, sigma


def first_error_index(mu: np.ndarray, delta: float = 0.5) -> int | None:
    """Earliest step with mu strictly below delta, or None."""
    below = np.flatnonzero(mu < delta)
    return int(below[0]) if below.size else None


def aleatoric_raw(mu: np.ndarray) -> np.ndarray:
    """Per-step p*log(p) diagnostic (0 at p=0); gating uses the thresholded form."""
    mu = np.asarray(mu, dtype=np.float64)
    out = np.zeros_like(mu)
    nz = mu > 0
    out[nz] = mu[nz] * np.log(mu[nz])
    return out


def aleatoric_score(mu: np.ndarray, scan_end: int) -> float:
    """Worst-case decision confidence over the scanned prefix (lower is vaguer)."""
    prefix = mu[: scan_end + 1]
    return float(np.min(np.maximum(prefix, 1.0 - prefix)))


def gates(mu: np.ndarray, sigma: np.ndarray, config: Config) -> UncertaintyReport:
    """Evaluate both gates over the prefix ending at the predicted first error."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if mu.shape != sigma.shape or mu.ndim != 1 or mu.size == 0:
        raise ValueError("mu and sigma must be equal-length non-empty 1-D arrays")
    pred = first_error_index(mu, config.delta)
    scan_end = pred if pred is not None else mu.size - 1
    conf = np.maximum(mu[: scan_end + 1], 1.0 - mu[: scan_end + 1])
    aleatoric = bool(np.any(conf < config.delta_pred))
    epistemic = bool(np.any(sigma[: scan_end + 1] > config.delta_std))
    return UncertaintyReport(
        mu=mu,
        sigma=sigma,
        predicted_first_error=pred,
        scan_end=scan_end,
        aleatoric=aleatoric,
        epistemic=epistemic,
    )


def is_uncertain(report: UncertaintyReport) -> bool:
    """True when either gate fired; such trajectories are routed to annotation."""
    return report.aleatoric or report.epistemic
