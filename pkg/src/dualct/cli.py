"""Command-line entry point: ``dualct <command> ...``.

Exit codes: 0 success, 2 usage or validation error, 1 runtime failure.

CSV outputs
  loss log     step,epoch,lr,loss
  metrics      case_id,psnr_db,ssim_pct,w_psnr_db,w_ssim_pct   (``inf`` marks an exact match)
  ablation     sweep,value,num_parameters,effective,final_loss,psnr_db,ssim_pct,w_psnr_db,w_ssim_pct
  count-params layer,c_in,c_out,m1,m2,full,scf,ratio
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .model import ConfigError, ModelConfig, build_model, spectral_layer_table
from .spectral import count_params_full, count_params_scf, saving_ratio


class UsageError(Exception):
    """Bad arguments or input files; maps to exit code 2."""


VALIDATION_ERRORS = (UsageError, ConfigError, KeyError, ValueError, FileNotFoundError, json.JSONDecodeError)


# ---------------------------------------------------------------------------
# run manifests
# ---------------------------------------------------------------------------


def _atomic_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def manifest_path(out: Path) -> Path:
    out = Path(out)
    return out / "manifest.json" if out.is_dir() else out.with_name(out.name + ".manifest.json")


def config_hash(payload) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


def write_run_manifest(command: str, args: argparse.Namespace, config, inputs, outputs, out: Path,
                       started: float, extra: dict | None = None) -> Path:
    record = {
        "command": command,
        "config_hash": config_hash({"args": {k: v for k, v in vars(args).items() if k != "func"},
                                    "config": config}),
        "seed": getattr(args, "seed", None),
        "tool_version": __version__,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "wall_time_s": round(time.perf_counter() - started, 6),
    }
    if extra:
        record.update(extra)
    path = manifest_path(out)
    _atomic_text(path, json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return json.loads(path.read_text())


def _load_train_config(path) -> "TrainConfig":
    from .train import TrainConfig

    return TrainConfig.from_json(_read_json(path))


def _load_model_config(path) -> ModelConfig:
    d = _read_json(path)
    return ModelConfig.from_json(d["model"] if "model" in d else d)


def _write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    _atomic_text(path, buf.getvalue())


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    from .dataset import simulate_dataset
    from .geometry import load_geometry

    started = time.perf_counter()
    geometry = load_geometry(args.geometry)
    if args.views is not None and args.views < 1:
        raise UsageError("--views must be >= 1")
    out = Path(args.out)
    ids = simulate_dataset(out, geometry, args.phantom, args.size, args.views, args.count, args.seed)
    outputs = [out / f"{c}_{kind}.raw" for c in ids for kind in ("proj", "vol")]
    write_run_manifest("simulate", args, geometry.to_json(), [args.geometry], outputs, out, started)
    print(f"wrote {len(ids)} case(s) to {out}")
    return 0


def cmd_train(args) -> int:
    from .train import train

    started = time.perf_counter()
    config = _load_train_config(args.config)
    changes = {}
    if args.epochs is not None:
        changes["epochs"] = args.epochs
    if args.seed is not None:
        changes["seed"] = args.seed
    config = replace(config, **changes)
    out = Path(args.out)
    summary = train(args.data, config, out, log=None if args.quiet else _log)
    outputs = [out / "checkpoint.json", out / "checkpoint.bin", out / "loss.csv"]
    write_run_manifest("train", args, config.to_json(), [args.config, args.data], outputs, out, started,
                       {"steps": summary["steps"], "num_parameters": summary["num_parameters"]})
    print(f"trained {summary['steps']} step(s); checkpoint {summary['checkpoint']}")
    return 0


def _output_volume_path(out) -> Path:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def cmd_reconstruct(args) -> int:
    from .geometry import load_projections, save_volume
    from .train import model_from_checkpoint

    started = time.perf_counter()
    if args.chunk < 1:
        raise UsageError("--chunk must be >= 1")
    model = model_from_checkpoint(args.ckpt)
    proj = load_projections(args.proj)
    det = proj.geometry.det_pixels
    if det[0] != det[1] or det[0] % model.size:
        raise ConfigError(f"projections {det} incompatible with model input size {model.size}", "det_pixels")
    vol = model.reconstruct(proj.images, proj.geometry, chunk=args.chunk)
    out = _output_volume_path(args.out)
    save_volume(vol, out)
    write_run_manifest("reconstruct", args, model.config.to_json(), [args.ckpt, args.proj],
                       [out, out.with_suffix(".json")], out, started)
    print(f"wrote {out}")
    return 0


def cmd_baseline_sart(args) -> int:
    from .geometry import load_projections, save_volume
    from .sart import sart_reconstruct

    started = time.perf_counter()
    if not 0 < args.lam < 2:
        raise UsageError("--lambda must lie in (0, 2)")
    if args.iters < 0:
        raise UsageError("--iters must be >= 0")
    proj = load_projections(args.proj)
    vol = sart_reconstruct(proj, args.iters, args.lam)
    out = _output_volume_path(args.out)
    save_volume(vol, out)
    write_run_manifest("baseline-sart", args, {"iters": args.iters, "lambda": args.lam}, [args.proj],
                       [out, out.with_suffix(".json")], out, started)
    print(f"wrote {out}")
    return 0


def cmd_evaluate(args) -> int:
    from .geometry import load_volume
    from .metrics import METRIC_COLUMNS, MetricsReport

    started = time.perf_counter()
    pred, gt = load_volume(args.pred), load_volume(args.gt)
    if pred.shape != gt.shape:
        raise UsageError(f"prediction shape {pred.shape} != ground truth shape {gt.shape}")
    roi = load_volume(args.roi) if args.roi else None
    report = MetricsReport()
    row = report.add(args.case_id or Path(args.pred).stem, pred, gt, roi)
    out = _output_volume_path(args.out)
    _write_csv(out, METRIC_COLUMNS, report.rows)
    inputs = [args.pred, args.gt] + ([args.roi] if args.roi else [])
    write_run_manifest("evaluate", args, {}, inputs, [out], out, started)
    print(", ".join(f"{k}={row[k]}" for k in METRIC_COLUMNS))
    return 0


def count_params_rows(config: ModelConfig, size: int) -> list:
    rows = []
    for r in spectral_layer_table(config, size):
        ratio = saving_ratio(r["c_in"], r["c_out"], r["m1"], r["m2"])
        rows.append(dict(r, ratio=f"{float(ratio) * 100:.2f}%"))
    return rows


def cmd_count_params(args) -> int:
    started = time.perf_counter()
    out_rows = []
    if args.layer:
        c_in, c_out, m1, m2 = args.layer
        full, scf = count_params_full(c_in, c_out, m1, m2), count_params_scf(c_in, c_out, m1, m2)
        ratio = Fraction(scf, full)
        out_rows.append({"layer": "layer", "c_in": c_in, "c_out": c_out, "m1": m1, "m2": m2, "full": full,
                         "scf": scf, "ratio": f"{float(ratio) * 100:.2f}%"})
        config_payload = {"layer": list(args.layer)}
        inputs = []
    else:
        if not args.config:
            raise UsageError("count-params needs --config or --layer")
        config = _load_model_config(args.config)
        size = args.size or config.input_size or 64
        config.check_size(size)
        out_rows = count_params_rows(config, size)
        config_payload = config.to_json()
        inputs = [args.config]
    total_full = sum(r["full"] for r in out_rows)
    total_scf = sum(r["scf"] for r in out_rows)
    columns = ("layer", "c_in", "c_out", "m1", "m2", "full", "scf", "ratio")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in out_rows:
        w.writerow([r[c] for c in columns])
    total_ratio = f"{total_scf / total_full * 100:.2f}%" if total_full else "n/a"
    w.writerow(["total", "", "", "", "", total_full, total_scf, total_ratio])
    if not args.layer:
        model = build_model(config, size, 0)
        n_model = model.num_parameters()
        w.writerow(["model_total", "", "", "", "", n_model - total_scf + total_full, n_model,
                    f"{n_model / (n_model - total_scf + total_full) * 100:.2f}%"])
    text = buf.getvalue()
    print(text, end="")
    if args.out:
        out = _output_volume_path(args.out)
        _atomic_text(out, text)
        write_run_manifest("count-params", args, config_payload, inputs, [out], out, started)
    return 0


def cmd_ablate(args) -> int:
    from .ablation import ABLATION_COLUMNS, run_ablation

    started = time.perf_counter()
    config = _load_train_config(args.config)
    changes = {}
    if args.epochs is not None:
        changes["epochs"] = args.epochs
    if args.seed is not None:
        changes["seed"] = args.seed
    config = replace(config, **changes)
    out = Path(args.out)
    work = out.with_name(out.name + ".runs")
    rows = run_ablation(config, args.sweep, args.data, args.test or args.data, work, args.values,
                        log=None if args.quiet else _log)
    out = _output_volume_path(out)
    _write_csv(out, ABLATION_COLUMNS, rows)
    write_run_manifest("ablate", args, config.to_json(), [args.config, args.data], [out], out, started)
    print(f"wrote {len(rows)} row(s) to {out}")
    return 0


def _read_csv_rows(path) -> list:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise UsageError(f"{path} has no data rows")
    return rows


def plot_series(rows: list) -> tuple:
    """Pick what to draw from a CSV: a loss curve or a quality curve. Returns (x_name, series, log_y)."""
    cols = rows[0].keys()
    if "loss" in cols:
        x = np.array([float(r["step"]) for r in rows])
        return "step", [("loss", x, np.array([float(r["loss"]) for r in rows]))], True
    if "psnr_db" in cols:
        x_name = "views" if "views" in cols else "index"
        x = np.array([float(r[x_name]) if x_name == "views" else i for i, r in enumerate(rows)])
        series = [(k, x, np.array([float(r[k]) for r in rows])) for k in ("psnr_db", "ssim_pct") if k in cols]
        return x_name, series, False
    raise UsageError("CSV needs a 'loss' column (loss log) or a 'psnr_db' column (metrics)")


def cmd_plot(args) -> int:
    from .png import line_plot, resample, write_png

    started = time.perf_counter()
    rows = _read_csv_rows(args.metrics)
    x_name, series, log_y = plot_series(rows)
    out = _output_volume_path(args.out)
    png_path = out if out.suffix == ".png" else out.with_suffix(".png")
    csv_path = png_path.with_suffix(".csv")
    sampled = [(name,) + resample(x, y, args.points) for name, x, y in series]
    write_png(png_path, line_plot([(x, y) for _, x, y in sampled], log_y=log_y))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", x_name, "value"])
    for name, x, y in sampled:
        for a, b in zip(x, y):
            w.writerow([name, repr(float(a)), repr(float(b))])
    _atomic_text(csv_path, buf.getvalue())
    write_run_manifest("plot", args, {}, [args.metrics], [png_path, csv_path], png_path, started)
    print(f"wrote {png_path} and {csv_path}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dualct", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"dualct {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="render phantoms and their cone-beam projections")
    s.add_argument("--phantom", default="random_ellipsoids", choices=("shepp3d", "random_ellipsoids"))
    s.add_argument("--size", type=int, default=None, help="phantom edge length (defaults to the geometry)")
    s.add_argument("--views", type=int, default=None, help="replace angles with K views over 180 degrees")
    s.add_argument("--geometry", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("train", help="train the field model (loss log: step,epoch,lr,loss)")
    s.add_argument("--config", required=True, help="train config JSON with a nested 'model' object")
    s.add_argument("--data", required=True)
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("reconstruct", help="evaluate a trained field on the voxel grid")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--proj", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--chunk", type=int, default=8192)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("baseline-sart", help="SART reconstruction")
    s.add_argument("--proj", required=True)
    s.add_argument("--iters", type=int, default=30)
    s.add_argument("--lambda", dest="lam", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_baseline_sart)

    s = sub.add_parser("evaluate", help="PSNR/SSIM (+ROI-weighted) of a volume against ground truth")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--roi", default=None)
    s.add_argument("--case-id", default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("count-params", help="full vs factorized spectral parameter counts")
    s.add_argument("--config", default=None)
    s.add_argument("--size", type=int, default=None)
    s.add_argument("--layer", type=int, nargs=4, metavar=("C_IN", "C_OUT", "M1", "M2"))
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_count_params)

    s = sub.add_parser("ablate", help="train/evaluate one model per sweep value")
    s.add_argument("--config", required=True)
    s.add_argument("--sweep", required=True, choices=("lhif", "fusion", "qkv", "modes", "patch"))
    s.add_argument("--values", nargs="+", default=None)
    s.add_argument("--data", required=True, help="training dataset directory")
    s.add_argument("--test", default=None, help="held-out dataset directory (defaults to --data)")
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("plot", help="loss curve or quality curve as PNG plus resampled CSV")
    s.add_argument("--metrics", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--points", type=int, default=200)
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
