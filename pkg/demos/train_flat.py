"""A one-minute taste of training on flat ground.

Runs a deliberately short PPO session (8k strides) against the flat
course and prints the learning curve as it forms, then compares the
young policy against a random one. Expect clear movement, not mastery:
the acceptance-grade runs train for 100k strides. For full, resumable,
on-disk runs use the command-line interface instead:

    quadloco train --terrain flat --timesteps 100000

Run:  python demos/train_flat.py
"""

import numpy as np

from quadloco.rl import TrainerConfig, evaluate, random_baseline, train
from quadloco.rl.envs import StrideEnv
from quadloco.sim import make_terrain


def main():
    factory = lambda task: StrideEnv(make_terrain("flat"))
    cfg = TrainerConfig(total_timesteps=8_192, seed=0)

    print(f"training on flat ground: {cfg.total_timesteps} strides, "
          f"{cfg.worker_count} workers, seed {cfg.seed}\n")
    print(f"{'update':>6s} {'strides':>8s} {'mean ep reward':>15s} {'fall rate':>10s}")

    def progress(row):
        print(f"{row['update_idx']:6d} {row['timesteps']:8d} "
              f"{row['mean_ep_reward']:15.3f} {row['fall_rate']:10.2f}")

    result = train(factory, None, cfg, progress=progress)

    env = factory(None)
    learned = evaluate(env, result.params, result.normalizer, episodes=20, seed=42)
    random = random_baseline(factory(None), episodes=20, seed=42)
    print("\nafter training (20 evaluation episodes each):")
    print(f"  {'':10s} {'success':>8s} {'falls':>6s} {'mean reward':>12s}")
    print(f"  {'learned':10s} {learned.success_rate:8.2f} "
          f"{learned.fall_rate:6.2f} {learned.mean_reward:12.3f}")
    print(f"  {'random':10s} {random.success_rate:8.2f} "
          f"{random.fall_rate:6.2f} {random.mean_reward:12.3f}")


if __name__ == "__main__":
    main()
