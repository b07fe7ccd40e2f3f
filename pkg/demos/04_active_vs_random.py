"""
Gated annotation against a random-coin baseline
===============================================

Three training arms on one pool: keep what the gates flag, keep a matched
random fraction, or annotate everything. The gated arm reads the budget it
actually spent off its ledger, and the random arm is pinned to that budget
so the comparison is fair.
"""

import tempfile
from pathlib import Path

import numpy as np

from prmgate.active import run_full, run_pool_based, run_random_baseline
from prmgate.annotate import oracle_annotate
from prmgate.core import Config
from prmgate.datagen import GenSpec, generate, split
from prmgate.ensemble import init_model
from prmgate.evaluation import evaluate

SEED = 5

pool = generate(GenSpec(count=6000, feature_dim=8, max_steps=6,
                        temperature=0.12, error_rate=0.5, seed=SEED))
train, eval_set = split(pool, (5 / 6, 1 / 6))


def fresh(config):
    return init_model(config, np.random.default_rng(np.random.SeedSequence(SEED)))


def base(**kw):
    cfg = dict(n_heads=4, feature_dim=8, lam=0.01, lr=1.0, batch_size=256, seed=SEED)
    cfg.update(kw)
    return Config(**cfg)


# arm 1: dual-gate selection, cold start, single pass
gated_config = base(delta_pred=0.57, delta_std=0.1)
gated = fresh(gated_config)
_, ledger = run_pool_based(gated, train, oracle_annotate, gated_config)
budget = ledger.annotated / len(train)
gated_out = evaluate(gated, eval_set)

# arm 2: a coin keeps the same fraction, no look at the model
rand = fresh(base())
run_random_baseline(rand, train, oracle_annotate, base(), budget_fraction=budget)
rand_out = evaluate(rand, eval_set)

# arm 3: annotate the whole pool
full = fresh(base())
run_full(full, train, oracle_annotate, base())
full_out = evaluate(full, eval_set)

print(f"pool {len(train)} train / {len(eval_set)} eval, gated budget {budget:.1%}\n")
print(f"{'arm':<8}{'annotated':>10}{'acc_error':>11}{'acc_correct':>13}{'f1':>8}")
for name, fraction, out in (("gated", budget, gated_out),
                            ("random", budget, rand_out),
                            ("full", 1.0, full_out)):
    print(f"{name:<8}{fraction:>10.1%}{out.acc_error:>11.4f}"
          f"{out.acc_correct:>13.4f}{out.f1:>8.4f}")

print(f"\ngated beats random by {gated_out.f1 - rand_out.f1:+.4f} f1 "
      f"at {budget:.1%} of the annotation bill")

# the ledger is the learning curve: cumulative counts plus per-batch loss
out = Path(tempfile.mkdtemp(prefix="prmgate_demo_")) / "ledger.csv"
ledger.save_csv(out)
lines = out.read_text().splitlines()
print(f"\nledger written to {out}")
for line in lines[:4] + ["..."] + lines[-2:]:
    print(f"  {line}")
