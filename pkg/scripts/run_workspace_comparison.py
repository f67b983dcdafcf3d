#!/usr/bin/env python3
"""Reachable-workspace comparison: fixed base vs tilting base."""

import argparse
import pathlib
import subprocess
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/workspace")
    ap.add_argument("--tilt-deg", type=float, default=40.0)
    args = ap.parse_args()
    subprocess.run(
        [sys.executable, "-m", "quadmimic", "workspace", "--tilt-deg", str(args.tilt_deg), "--out", args.out],
        check=True,
        cwd=ROOT,
    )


if __name__ == "__main__":
    main()
