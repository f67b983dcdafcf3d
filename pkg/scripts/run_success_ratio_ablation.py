#!/usr/bin/env python3
"""Success-time-ratio ablation over retargeting pipeline variants.

Needs a trained expert bundle (see run_pipeline_demo.py). Desk-scale
default is 128 episodes; raise --episodes toward 5120 for tighter means.
"""

import argparse
import pathlib
import subprocess
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--bundle", default="out/demo/bundle")
    ap.add_argument("--out", default="out/ablation")
    ap.add_argument("--episodes", type=int, default=128)
    ap.add_argument("--state", default="stand")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    subprocess.run(
        [sys.executable, "-m", "quadmimic", "ablate", "--bundle", args.bundle, "--state", args.state,
         "--episodes", str(args.episodes), "--seed", str(args.seed), "--out", args.out],
        check=True,
        cwd=ROOT,
    )


if __name__ == "__main__":
    main()
