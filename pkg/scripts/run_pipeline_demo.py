#!/usr/bin/env python3
"""End-to-end desk demo: dataset -> expert networks -> retargeted stream.

Writes everything under the output directory and prints the retargeting
report. Small budgets by default; raise them for better mappers.
"""

import argparse
import pathlib
import subprocess
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent


def run(*cmd):
    print("+", " ".join(map(str, cmd)))
    subprocess.run([sys.executable, "-m", "quadmimic", *map(str, cmd)], check=True, cwd=ROOT)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/demo")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--train-steps", type=int, default=1500)
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cfg = out / "data.cfg"
    cfg.write_text(
        "tasks = tilt_at_stand,manip_at_stand,tilt_at_sit,manip_at_sit,walk_forward,turn_left\n"
        "difficulty = 0.8\nclips_per_task = 8\nstyle_seed = 1\npairs_per_task = 450\n"
    )
    run("gen-data", "--config", cfg, "--seed", args.seed, "--out", out / "data")
    for state in ("stand", "sit", "walk"):
        run("train-retarget", "--dataset", out / "data/dataset.jsonl", "--state", state,
            "--out", out / "bundle", "--max-steps", args.train_steps, "--seed", args.seed)
        run("train-contact", "--dataset", out / "data/dataset.jsonl", "--state", state,
            "--out", out / "bundle", "--max-steps", args.train_steps, "--seed", args.seed)

    # synthesize a fresh human stream and retarget it
    sys.path.insert(0, str(ROOT / "src"))
    import numpy as np
    from quadmimic.datagen import Task, TaskSpec, gen_human_clip, gen_robot_clip
    from quadmimic.kinematics import QuadrupedModel
    from quadmimic.motion import save_human_clip

    model = QuadrupedModel.default()
    clip = gen_robot_clip(TaskSpec(Task.MANIP_AT_STAND, 0.7), 8.0, np.random.default_rng(args.seed + 99), model)
    save_human_clip(gen_human_clip(clip, 1, model=model), out / "human.jsonl")
    run("retarget", "--bundle", out / "bundle", "--input", out / "human.jsonl", "--out", out / "motion.jsonl")


if __name__ == "__main__":
    main()
