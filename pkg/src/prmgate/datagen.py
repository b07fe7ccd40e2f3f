"""Seeded synthetic trajectory generator with planted ground truth.

A hidden unit-norm teacher vector w* defines per-step correctness: step
features x are standard normal and the step is correct with probability
sigmoid((w* . x + b) / tau). The temperature tau is the ambiguity knob
(tau -> 0 gives a deterministic halfspace, large tau makes steps coin-like).
An intended length L is drawn uniformly from {1..max_steps} and the
trajectory is truncated at the first sampled error, so gold labels are
always valid prefix labels and no steps exist past the first error.

The bias b defaults to 0, which by symmetry of the feature law gives
per-step error probability exactly 0.5. When ``error_rate`` is set, b is
solved numerically so the expected fraction of erroneous trajectories
equals the target: first invert 1 - mean_L q^L = error_rate for the
marginal per-step correctness q, then invert E_z[sigmoid((z + b)/tau)] = q
for b using Gauss-Hermite quadrature.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import Trajectory, make_trajectory

__all__ = [
    "GenSpec",
    "expected_error_fraction",
    "generate",
    "load_genspec",
    "save_genspec",
    "split",
]

_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite.hermgauss(96)


@dataclass(frozen=True)
class GenSpec:
    """Parameters of one synthetic dataset."""

    count: int
    feature_dim: int = 8
    max_steps: int = 6
    temperature: float = 1.0
    error_rate: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if self.feature_dim < 1:
            raise ValueError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if not (math.isfinite(self.temperature) and self.temperature > 0):
            raise ValueError(f"temperature must be finite positive, got {self.temperature}")
        if self.error_rate is not None and not (0.0 <= self.error_rate <= 1.0):
            raise ValueError(f"error_rate must be in [0, 1], got {self.error_rate}")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _marginal_correct_prob(bias: float, tau: float) -> float:
    """E over z ~ N(0,1) of sigmoid((z + bias) / tau) by Gauss-Hermite."""
    z = math.sqrt(2.0) * _GH_NODES
    vals = _sigmoid((z + bias) / tau)
    return float(np.dot(_GH_WEIGHTS, vals) / math.sqrt(math.pi))


def expected_error_fraction(q_correct: float, max_steps: int) -> float:
    """P(some step errs) for L ~ uniform{1..max_steps} and iid step draws."""
    total = sum(q_correct**length for length in range(1, max_steps + 1))
    return 1.0 - total / max_steps


def _solve_bias(error_rate: float, tau: float, max_steps: int) -> float:
    # invert the trajectory-level error fraction for the per-step q ...
    lo_q, hi_q = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo_q + hi_q)
        if expected_error_fraction(mid, max_steps) > error_rate:
            lo_q = mid
        else:
            hi_q = mid
    q = 0.5 * (lo_q + hi_q)
    # ... then the bias matching that q
    lo, hi = -1.0, 1.0
    while _marginal_correct_prob(lo, tau) > q:
        lo *= 2.0
    while _marginal_correct_prob(hi, tau) < q:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _marginal_correct_prob(mid, tau) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate(spec: GenSpec) -> list[Trajectory]:
    """Draw spec.count trajectories; the same spec always yields the same data."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    teacher = rng.standard_normal(spec.feature_dim)
    teacher /= np.linalg.norm(teacher)
    if spec.error_rate is None:
        bias = 0.0
    elif spec.error_rate <= 0.0:
        bias = math.inf
    elif spec.error_rate >= 1.0:
        bias = -math.inf
    else:
        bias = _solve_bias(spec.error_rate, spec.temperature, spec.max_steps)

    width = max(6, len(str(spec.count - 1)))
    dataset = []
    for t in range(spec.count):
        length = int(rng.integers(1, spec.max_steps + 1))
        feats = rng.standard_normal((length, spec.feature_dim))
        coins = rng.random(length)
        if math.isinf(bias):
            p_correct = np.full(length, 1.0 if bias > 0 else 0.0)
        else:
            p_correct = _sigmoid((feats @ teacher + bias) / spec.temperature)
        wrong = np.flatnonzero(coins >= p_correct)
        if wrong.size:
            first_error = int(wrong[0])
            feats = feats[: first_error + 1]
            length = first_error + 1
        else:
            first_error = None
        tid = f"traj-{t:0{width}d}"
        dataset.append(
            make_trajectory(
                id=tid,
                question=f"synthetic problem {t}",
                step_features=feats,
                step_texts=[f"step {j + 1} of problem {t}" for j in range(length)],
                gold_first_error=first_error,
            )
        )
    return dataset


def split(
    dataset: list[Trajectory],
    fractions: tuple[float, float],
    seed: int | None = None,
) -> tuple[list[Trajectory], list[Trajectory]]:
    """Disjoint (train, eval) split; remainder goes to train.

    Both parts preserve the dataset's original order. With a seed, membership
    is chosen by a seeded permutation; without one, eval is the tail block.
    """
    if len(fractions) != 2:
        raise ValueError("fractions must be a (train, eval) pair")
    train_frac, eval_frac = float(fractions[0]), float(fractions[1])
    if train_frac < 0 or eval_frac < 0 or abs(train_frac + eval_frac - 1.0) > 1e-9:
        raise ValueError(f"fractions must be non-negative and sum to 1, got {fractions}")
    n = len(dataset)
    n_eval = int(math.floor(n * eval_frac))
    if seed is None:
        eval_idx = set(range(n - n_eval, n))
    else:
        perm = np.random.default_rng(np.random.SeedSequence(seed)).permutation(n)
        eval_idx = set(int(i) for i in perm[:n_eval])
    train = [t for i, t in enumerate(dataset) if i not in eval_idx]
    eval_set = [t for i, t in enumerate(dataset) if i in eval_idx]
    return train, eval_set


def save_genspec(spec: GenSpec, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(asdict(spec), f, indent=2, sort_keys=True)
        f.write("\n")


def load_genspec(path: str) -> GenSpec:
    with open(path, encoding="utf-8") as f:
        return GenSpec(**json.load(f))
