"""
A synthetic pool of step-scored trajectories
============================================

A hidden linear teacher decides whether each reasoning step is correct;
the first incorrect step (if any) becomes the trajectory's gold label.
The generator solves for a feature bias that hits a requested error rate.
"""

import tempfile
from pathlib import Path

import numpy as np

from prmgate.core import load_dataset, save_dataset
from prmgate.datagen import GenSpec, expected_error_fraction, generate, split

spec = GenSpec(count=4000, feature_dim=8, max_steps=6,
               temperature=0.4, error_rate=0.5, seed=11)
data = generate(spec)

# how close did the bias solver land to the requested error rate?
errors = sum(1 for t in data if t.gold.first_error is not None)
print(f"requested error rate {spec.error_rate:.2f}, "
      f"realized {errors / len(data):.4f} over {len(data)} trajectories")

# one erroneous trajectory up close
t = next(t for t in data if t.n_steps >= 4 and t.gold.first_error is not None)
print(f"\ntrajectory {t.id}: {t.n_steps} steps, gold first_error = {t.gold.first_error}")
for step in t.steps:
    head = np.array2string(step.features[:3], precision=2)
    print(f"  step {step.index}: features {head} ...")

# step counts follow the error process: error trajectories stop where they fail
lengths = np.array([t.n_steps for t in data])
print(f"\nstep count: mean {lengths.mean():.2f}, min {lengths.min()}, max {lengths.max()}")

q_correct = 1 - expected_error_fraction(0.9, spec.max_steps)
print(f"a per-step correctness of 0.9 over {spec.max_steps} steps keeps "
      f"{q_correct:.3f} of trajectories error-free")

# seeded splits are disjoint and reproducible
train, eval_set = split(data, (0.8, 0.2))
again_train, again_eval = split(generate(spec), (0.8, 0.2))
assert [t.id for t in train] == [t.id for t in again_train]
print(f"\nsplit {len(train)} train / {len(eval_set)} eval, stable across reruns")

# the JSONL round trip preserves everything, including gold labels
out = Path(tempfile.mkdtemp(prefix="prmgate_demo_")) / "pool.jsonl"
save_dataset(data, out)
back = load_dataset(out)
assert back == data
print(f"saved and reloaded {len(back)} trajectories from {out}")
