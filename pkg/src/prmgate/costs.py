"""Annotation-cost calculator for four step-labeling strategies.

Costs are measured in generated tokens and built from three measured
per-trajectory statistics: S (mean reasoning steps), R (mean tokens per
Monte Carlo rollout), and C (mean tokens per judge critique). With N labeled
trajectories the strategies cost:

  judge-only        N * C                    one critique per trajectory
  mc-rollout        N * S * 8 * R / 2        8 rollouts per step; later steps
                                             need shorter completions, so the
                                             expected rollout length is R / 2
  consensus-filter  N * S * 8 * R / 2 + N * C   rollouts plus a judge pass
  ensemble-prompt   N * C * 4 + N * S        4 judge prompts per trajectory
                                             plus S tokens for step splitting

The default constants and per-strategy reference dataset sizes are frozen
from measurements on a 1M-trajectory math corpus; both are overridable so
the calculator can model other corpora.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

__all__ = [
    "CostConstants",
    "CostQuery",
    "REFERENCE_N",
    "Strategy",
    "budget_ratio",
    "cost_table",
    "estimate_cost",
]


class Strategy(str, enum.Enum):
    """How step labels are produced."""

    JUDGE_ONLY = "judge-only"
    MC_ROLLOUT = "mc-rollout"
    CONSENSUS_FILTER = "consensus-filter"
    ENSEMBLE_PROMPT = "ensemble-prompt"


# Dataset sizes the strategies were originally run at.
REFERENCE_N: dict[Strategy, int] = {
    Strategy.JUDGE_ONLY: 624_000,
    Strategy.MC_ROLLOUT: 860_000,
    Strategy.CONSENSUS_FILTER: 860_000,
    Strategy.ENSEMBLE_PROMPT: 690_000,
}


@dataclass(frozen=True)
class CostConstants:
    """Measured corpus statistics; all strictly positive."""

    S: float = 8.845
    R: float = 625.098
    C: float = 1919.860
    rollouts_per_step: int = 8
    ensemble_prompts: int = 4

    def __post_init__(self) -> None:
        for name in ("S", "R", "C", "rollouts_per_step", "ensemble_prompts"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ValueError(f"cost constant {name} must be strictly positive, got {v}")


@dataclass(frozen=True)
class CostQuery:
    """A strategy applied to N trajectories."""

    strategy: Strategy
    N: int

    def __post_init__(self) -> None:
        if not isinstance(self.strategy, Strategy):
            object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.N < 0:
            raise ValueError(f"N must be non-negative, got {self.N}")


def estimate_cost(query: CostQuery, k: CostConstants = CostConstants()) -> float:
    """Total generated tokens for the query under constants k."""
    n = float(query.N)
    rollout_tokens = k.S * k.rollouts_per_step * k.R / 2.0
    if query.strategy is Strategy.JUDGE_ONLY:
        return n * k.C
    if query.strategy is Strategy.MC_ROLLOUT:
        return n * rollout_tokens
    if query.strategy is Strategy.CONSENSUS_FILTER:
        return n * rollout_tokens + n * k.C
    if query.strategy is Strategy.ENSEMBLE_PROMPT:
        return n * k.C * k.ensemble_prompts + n * k.S
    raise ValueError(f"unknown strategy {query.strategy!r}")


def budget_ratio(a: CostQuery, b: CostQuery, k: CostConstants = CostConstants()) -> float:
    """Cost of a divided by cost of b; b must have positive cost."""
    denom = estimate_cost(b, k)
    if denom <= 0.0:
        raise ZeroDivisionError("budget_ratio denominator strategy has zero cost")
    return estimate_cost(a, k) / denom


def cost_table(
    k: CostConstants = CostConstants(),
    ns: dict[Strategy, int] | None = None,
) -> list[tuple[str, int, float, float]]:
    """Rows (strategy, N, tokens, log2 tokens) at the reference dataset sizes."""
    ns = dict(REFERENCE_N) if ns is None else ns
    rows = []
    for strategy in Strategy:
        if strategy not in ns:
            continue
        n = ns[strategy]
        tokens = estimate_cost(CostQuery(strategy, n), k)
        log2_tokens = math.log2(tokens) if tokens > 0 else float("-inf")
        rows.append((strategy.value, n, tokens, log2_tokens))
    return rows
