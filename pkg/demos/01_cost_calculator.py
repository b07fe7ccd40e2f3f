"""
Counting the tokens each labeling strategy burns
================================================

Four ways to label step-level reasoning data, priced in generated tokens
from three measured corpus statistics: S steps per trajectory, R tokens
per Monte Carlo rollout, and C tokens per judge critique.
"""

import math

from prmgate.costs import (
    REFERENCE_N,
    CostConstants,
    CostQuery,
    Strategy,
    budget_ratio,
    cost_table,
    estimate_cost,
)

k = CostConstants()
print(f"constants: S={k.S} steps, R={k.R} rollout tokens, C={k.C} critique tokens")
print(f"           {k.rollouts_per_step} rollouts per step, {k.ensemble_prompts} ensemble prompts\n")

# the full bill at each strategy's reference dataset size
print(f"{'strategy':<18}{'N':>10}{'tokens':>16}{'log2':>8}")
for name, n, tokens, log2_tokens in cost_table():
    print(f"{name:<18}{n:>10,}{tokens:>16.3e}{log2_tokens:>8.2f}")

# the gated pipeline pays one judge critique per retained trajectory,
# so its bill is the judge-only row at the retained count
gated = CostQuery(Strategy.JUDGE_ONLY, REFERENCE_N[Strategy.JUDGE_ONLY])
consensus = CostQuery(Strategy.CONSENSUS_FILTER, REFERENCE_N[Strategy.CONSENSUS_FILTER])
ensemble = CostQuery(Strategy.ENSEMBLE_PROMPT, REFERENCE_N[Strategy.ENSEMBLE_PROMPT])

print(f"\ngated judge bill:    {estimate_cost(gated):.3e} tokens")
print(f"vs consensus filter: {budget_ratio(gated, consensus):.1%} of the budget")
print(f"vs ensemble prompts: {budget_ratio(gated, ensemble):.1%} of the budget")

# what-if: critiques twice as long, rollouts half as many
cheap = CostConstants(S=k.S, R=k.R, C=2 * k.C, rollouts_per_step=4,
                      ensemble_prompts=k.ensemble_prompts)
ratio = budget_ratio(gated, consensus, cheap)
print(f"\nwith 2x critiques and 4 rollouts per step the ratio becomes {ratio:.1%}")

# sanity: doubling N doubles every bill exactly
double = CostQuery(Strategy.MC_ROLLOUT, 2 * REFERENCE_N[Strategy.MC_ROLLOUT])
single = CostQuery(Strategy.MC_ROLLOUT, REFERENCE_N[Strategy.MC_ROLLOUT])
assert math.isclose(estimate_cost(double), 2 * estimate_cost(single))
print("cost is linear in N, as it should be")
