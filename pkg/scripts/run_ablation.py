#!/usr/bin/env python3
"""Run the modes, patch and lHiF sweeps on a simulated dataset and print one table.

    python scripts/run_ablation.py --work runs/ablation

Reuses ``<work>/train`` and ``<work>/test`` when they already exist. Each sweep
value trains a fresh model at the desk configuration, so the full set takes hours.
"""

import argparse
import csv
import sys
from pathlib import Path

from dualct.cli import main as dualct

HERE = Path(__file__).resolve().parent
SWEEPS = {"modes": ["8", "16", "32"], "patch": ["8", "16", "32"], "lhif": ["on", "off"]}


def run(*argv):
    code = dualct([str(a) for a in argv])
    if code:
        sys.exit(f"dualct {argv[0]} failed with exit code {code}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--work", type=Path, default=Path("runs/ablation"))
    ap.add_argument("--geometry", type=Path, default=HERE / "desk_geometry.json")
    ap.add_argument("--config", type=Path, default=HERE / "desk_train.json")
    ap.add_argument("--sweeps", nargs="+", choices=sorted(SWEEPS), default=list(SWEEPS))
    ap.add_argument("--epochs", type=int, default=None)
    args = ap.parse_args()

    train_dir, test_dir = args.work / "train", args.work / "test"
    if not train_dir.exists():
        run("simulate", "--geometry", args.geometry, "--count", 8, "--seed", 0, "--out", train_dir)
    if not test_dir.exists():
        run("simulate", "--geometry", args.geometry, "--count", 2, "--seed", 1000, "--out", test_dir)

    rows = []
    for sweep in args.sweeps:
        out = args.work / f"ablation_{sweep}.csv"
        cmd = ["ablate", "--config", args.config, "--sweep", sweep, "--values", *SWEEPS[sweep],
               "--data", train_dir, "--test", test_dir, "--out", out]
        if args.epochs is not None:
            cmd += ["--epochs", args.epochs]
        run(*cmd)
        with open(out, newline="") as fh:
            rows += list(csv.DictReader(fh))

    print(f"{'sweep':<7}{'value':<7}{'effective':<11}{'params':>9}{'PSNR dB':>9}{'SSIM %':>8}"
          f"{'W-PSNR':>8}{'W-SSIM':>8}")
    for r in rows:
        print(f"{r['sweep']:<7}{r['value']:<7}{r['effective'] or '-':<11}{int(r['num_parameters']):>9}"
              f"{float(r['psnr_db']):>9.2f}{float(r['ssim_pct']):>8.2f}"
              f"{float(r['w_psnr_db']):>8.2f}{float(r['w_ssim_pct']):>8.2f}")


if __name__ == "__main__":
    main()
