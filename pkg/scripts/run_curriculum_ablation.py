#!/usr/bin/env python3
"""Curriculum vs no-curriculum training comparison on the stand expert.

Runs PPO twice per seed (staged curriculum vs full difficulty from the
start) and reports the steps each needed to reach the reward threshold.
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from quadmimic.datagen import RobotState
from quadmimic.imitation import ImitationVecEnv, default_curriculum, final_stage_schedule
from quadmimic.kinematics import QuadrupedModel
from quadmimic.ppo import PpoConfig, train


def run_variant(name, schedule, seed, total_steps, threshold, n_envs):
    model = QuadrupedModel.default()
    env = ImitationVecEnv(model, n_envs, state=RobotState.STAND, seed=seed, schedule=schedule)
    hit = {}

    def stop(row):
        print(f"{name} seed={seed} it={row.iteration} steps={row.steps} R={row.mean_reward:.4f} stage={row.stage}")
        if row.mean_reward > threshold and "steps" not in hit:
            hit["steps"] = row.steps
        return "steps" in hit

    train(env, schedule, PpoConfig(seed=seed), total_steps=total_steps, stop_fn=stop)
    return hit.get("steps")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--total-steps", type=int, default=2_000_000)
    ap.add_argument("--threshold", type=float, default=0.7)
    ap.add_argument("--n-envs", type=int, default=32)
    args = ap.parse_args()
    for seed in args.seeds:
        cur = run_variant("curriculum", default_curriculum(RobotState.STAND), seed, args.total_steps, args.threshold, args.n_envs)
        no_cur = run_variant("no-curriculum", final_stage_schedule(RobotState.STAND), seed, args.total_steps, args.threshold, args.n_envs)
        print(f"seed {seed}: curriculum reached {args.threshold} at {cur}; no-curriculum at {no_cur}")


if __name__ == "__main__":
    main()
