"""
Reading the two uncertainty gates
=================================

An ensemble scores every step with a mean mu and a spread sigma. Scanning
stops at the first step whose mu drops below delta. Low confidence anywhere
in that prefix fires the aleatoric gate; high head disagreement fires the
epistemic gate. Either gate routes the trajectory to annotation.
"""

import numpy as np

from prmgate.active import run_full, select_batch
from prmgate.annotate import oracle_annotate
from prmgate.core import Config
from prmgate.datagen import GenSpec, generate, split
from prmgate.ensemble import forward, init_model
from prmgate.uncertainty import ensemble_stats, gates, is_uncertain

pool = generate(GenSpec(count=2400, feature_dim=8, max_steps=6,
                        temperature=0.12, error_rate=0.5, seed=3))
train, probe = split(pool, (0.9, 0.1))

config = Config(n_heads=4, feature_dim=8, lam=0.01, lr=1.0, batch_size=256,
                seed=3, delta_pred=0.57, delta_std=0.1)
model = init_model(config, np.random.default_rng(np.random.SeedSequence(3)))
run_full(model, train, oracle_annotate, config)

# per-step scores for a few probe trajectories
for t in probe[:3]:
    mu, sigma = ensemble_stats(forward(model, t))
    report = gates(mu, sigma, config)
    print(f"trajectory {t.id}: gold={t.gold.first_error} "
          f"predicted={report.predicted_first_error} scan_end={report.scan_end}")
    for i in range(t.n_steps):
        marker = " <- scan stops here" if i == report.scan_end else ""
        print(f"  step {i}: mu={mu[i]:.3f} sigma={sigma[i]:.3f}{marker}")
    print(f"  aleatoric={report.aleatoric} epistemic={report.epistemic} "
          f"-> annotate: {is_uncertain(report)}\n")

# tightening delta_std retains more of the pool; loosening drops it
print(f"{'delta_std':>10}{'retained':>10}")
for delta_std in (0.02, 0.05, 0.1, 0.2, np.inf):
    c = Config(n_heads=4, feature_dim=8, seed=3, delta_pred=0.5, delta_std=delta_std)
    result = select_batch(model, probe, c)
    print(f"{delta_std:>10.3g}{result.retained_fraction:>10.1%}")
print("delta_std=inf disables the epistemic gate entirely")
