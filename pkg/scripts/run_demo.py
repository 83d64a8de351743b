#!/usr/bin/env python3
"""End-to-end demo on a synthetic grid: render, train briefly, fuse, report.

Writes everything under ./demo_out (override with --out). A short training
run is enough to see the pipeline work; raise --epochs for better fusion.
"""

import argparse
import json
import sys
from pathlib import Path

from edof.cli import main as edof_main


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo_out")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--canvas", type=int, default=256)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--pairs", type=int, default=60)
    args = ap.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "seed": args.seed,
        "output_dir": str(out),
        "input": {
            "synth": {
                "n_depths": 3,
                "canvas": [args.canvas, args.canvas],
                "max_shift": 8.0,
                "noise_sigma": 0.005,
            }
        },
        "benchmark_view": 4,
        "fusion": {
            "network_file": "network.edfn",
            "train": {
                "learning_rate": 0.01,
                "epochs": args.epochs,
                "batch_size": 10,
                "pairs": args.pairs,
                "patch_size": 48,
                "grids": 2,
            },
        },
    }
    cfg_path = out / "config.json"
    cfg_path.write_text(json.dumps(config, indent=2))

    for step in (
        ["synth", "--config", str(cfg_path)],
        ["train", "--config", str(cfg_path)],
        ["run", "--config", str(cfg_path)],
    ):
        print(f"== edof {' '.join(step)}", file=sys.stderr)
        code = edof_main(step)
        if code != 0:
            return code
    print(f"\nDemo artifacts in {out}/ (result.png, report.json)", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(run())
