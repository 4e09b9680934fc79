"""Train only the goal-conditioned lower level in an open arena and test it on fresh goals."""

import time

import numpy as np

from hiro import HiroConfig, HiroTrainer, make_env
from hiro.hrl import lower_reach_distances

STEPS = 20_000  # the acceptance test uses 50,000

env = make_env("open")
trainer = HiroTrainer(HiroConfig(ablation="pretrain_low"), env, seed=0)
t0 = time.perf_counter()
trainer.pretrain_lower(STEPS)
print(f"{STEPS} steps in {time.perf_counter() - t0:.0f} s; lower level frozen: {trainer.low_frozen}")

goals = np.clip(np.random.default_rng(123).normal(size=(50, 2)) * 5, -9, 9)
for horizon in (10, 20):
    d = lower_reach_distances(trainer, env, goals, horizon)
    print(f"horizon {horizon}: {np.mean(d < 1.0):.0%} within 1.0, median miss {np.median(d):.2f}")
