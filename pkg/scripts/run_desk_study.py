#!/usr/bin/env python3
"""Desk-scale study: simulate data, train the model, compare against SART on held-out cases.

    python scripts/run_desk_study.py --work runs/desk

Everything goes through the ``dualct`` command line, so each stage can be rerun by hand.
"""

import argparse
import csv
import sys
from pathlib import Path

from dualct.cli import main as dualct

HERE = Path(__file__).resolve().parent


def run(*argv):
    code = dualct([str(a) for a in argv])
    if code:
        sys.exit(f"dualct {argv[0]} failed with exit code {code}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--work", type=Path, default=Path("runs/desk"))
    ap.add_argument("--geometry", type=Path, default=HERE / "desk_geometry.json")
    ap.add_argument("--config", type=Path, default=HERE / "desk_train.json")
    ap.add_argument("--train-cases", type=int, default=8)
    ap.add_argument("--test-cases", type=int, default=2)
    ap.add_argument("--epochs", type=int, default=None, help="override the config's epoch count")
    args = ap.parse_args()

    work = args.work
    train_dir, test_dir = work / "train", work / "test"
    run("simulate", "--geometry", args.geometry, "--count", args.train_cases, "--seed", 0, "--out", train_dir)
    run("simulate", "--geometry", args.geometry, "--count", args.test_cases, "--seed", 1000, "--out", test_dir)

    train_args = ["train", "--config", args.config, "--data", train_dir, "--out", work / "model"]
    if args.epochs is not None:
        train_args += ["--epochs", args.epochs]
    run(*train_args)
    run("plot", "--metrics", work / "model" / "loss.csv", "--out", work / "loss.png")

    rows = []
    for proj in sorted(test_dir.glob("*_proj.raw")):
        case = proj.name[: -len("_proj.raw")]
        gt = test_dir / f"{case}_vol.raw"
        ours, sart = work / "recon" / f"{case}_model.raw", work / "recon" / f"{case}_sart.raw"
        run("reconstruct", "--ckpt", work / "model" / "checkpoint.json", "--proj", proj, "--out", ours)
        run("baseline-sart", "--proj", proj, "--iters", 30, "--lambda", 0.5, "--out", sart)
        for method, pred in (("model", ours), ("sart", sart)):
            out = work / "metrics" / f"{case}_{method}.csv"
            run("evaluate", "--pred", pred, "--gt", gt, "--case-id", case, "--out", out)
            with open(out, newline="") as fh:
                for row in csv.DictReader(fh):
                    rows.append(dict(row, method=method))

    print(f"{'case':<12}{'method':<8}{'PSNR dB':>10}{'SSIM %':>10}")
    for row in rows:
        print(f"{row['case_id']:<12}{row['method']:<8}{float(row['psnr_db']):>10.2f}{float(row['ssim_pct']):>10.2f}")


if __name__ == "__main__":
    main()
