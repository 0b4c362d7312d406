"""Configuration sweeps: train and evaluate one model per variant."""

from __future__ import annotations

import math
import time
from dataclasses import replace
from pathlib import Path

from .fusion import QKV_ROLES, VARIANTS
from .metrics import MetricsReport
from .model import ConfigError, ModelConfig, build_model
from .train import TrainConfig, load_cases, model_from_checkpoint, train

SWEEPS = {
    "lhif": (True, False),
    "fusion": VARIANTS,
    "qkv": QKV_ROLES,
    "modes": (8, 16, 32),
    "patch": (8, 16, 32),
}
ABLATION_COLUMNS = ("sweep", "value", "num_parameters", "effective", "final_loss", "psnr_db", "ssim_pct",
                    "w_psnr_db", "w_ssim_pct")


def variant_config(model: ModelConfig, sweep: str, value) -> ModelConfig:
    if sweep == "lhif":
        return model.replace(enable_lhif=bool(value))
    if sweep == "fusion":
        return model.replace(fusion_variant=str(value))
    if sweep == "qkv":
        return model.replace(qkv_roles=str(value))
    if sweep == "modes":
        return model.replace(modes1=int(value), modes2=int(value))
    if sweep == "patch":
        return model.replace(patch=int(value))
    raise ConfigError(f"unknown sweep {sweep!r}; choose from {sorted(SWEEPS)}", "sweep")


def _parse_value(sweep: str, text: str):
    if sweep == "lhif":
        if text.lower() in ("1", "true", "on"):
            return True
        if text.lower() in ("0", "false", "off"):
            return False
        raise ConfigError(f"lhif sweep values must be on/off, got {text!r}", "values")
    if sweep in ("modes", "patch"):
        return int(text)
    return text


def effective_setting(config: ModelConfig, size: int, sweep: str) -> str:
    """Per-level values actually used after clamping to each stage's size."""
    from .freq_encoder import stage_modes, stage_patch

    sizes = config.stage_sizes(size)
    if sweep == "modes":
        return "/".join(str(stage_modes(config.modes1, s)) for s in sizes)
    if sweep == "patch":
        return "/".join(str(stage_patch(config.patch, s)) for s in sizes)
    return ""


def run_ablation(base: TrainConfig, sweep: str, train_dir, test_dir, out_dir, values=None, log=None) -> list:
    if sweep not in SWEEPS:
        raise ConfigError(f"unknown sweep {sweep!r}; choose from {sorted(SWEEPS)}", "sweep")
    values = SWEEPS[sweep] if values is None else tuple(_parse_value(sweep, str(v)) for v in values)
    out_dir = Path(out_dir)
    test_cases = load_cases(test_dir)
    det = test_cases[0].proj.geometry.det_pixels[0]
    configs = []
    for v in values:
        cfg = variant_config(base.model, sweep, v)
        size = cfg.input_size or det
        cfg.check_size(size)
        configs.append((v, cfg, size))
    rows = []
    for v, cfg, size in configs:
        tag = f"{sweep}_{v}"
        t0 = time.perf_counter()
        summary = train(train_dir, replace(base, model=cfg), out_dir / tag, log=log)
        elapsed = time.perf_counter() - t0
        model = model_from_checkpoint(Path(summary["checkpoint"]))
        report = MetricsReport()
        for case in test_cases:
            rec = model.reconstruct(case.proj.images, case.proj.geometry)
            report.add(case.case_id, rec, case.volume)
        losses = summary["epoch_losses"]
        rows.append({
            "sweep": sweep,
            "value": str(v),
            "num_parameters": build_model(cfg, det, 0).num_parameters(),
            "effective": effective_setting(cfg, size, sweep),
            "final_loss": losses[-1] if losses else math.nan,
            "psnr_db": report.psnr_db,
            "ssim_pct": report.ssim_pct,
            "w_psnr_db": report.w_psnr_db,
            "w_ssim_pct": report.w_ssim_pct,
        })
        if log:
            log(f"{tag}: {elapsed:.1f}s, psnr {report.psnr_db:.3f} dB")
    return rows
