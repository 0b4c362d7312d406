"""PSNR / SSIM and their ROI-weighted forms for volumes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

WINDOW = 7
C1 = (0.01 * 1.0) ** 2
C2 = (0.03 * 1.0) ** 2
METRIC_COLUMNS = ("case_id", "psnr_db", "ssim_pct", "w_psnr_db", "w_ssim_pct")


def _arrays(pred, gt):
    a = np.asarray(getattr(pred, "data", pred), dtype=np.float64)
    b = np.asarray(getattr(gt, "data", gt), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def _psnr_from_mse(mse: float, max_val: float) -> float:
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(max_val ** 2 / mse)


def psnr(pred, gt, max_val: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` when the volumes are identical."""
    a, b = _arrays(pred, gt)
    return _psnr_from_mse(float(np.mean((a - b) ** 2)), max_val)


def _box_mean(x: np.ndarray, k: int) -> np.ndarray:
    """Mean over every valid k^3 window, as three separable 1D window sums."""
    for axis in range(3):
        x = sliding_window_view(x, k, axis=axis).sum(axis=-1)
    return x / k ** 3


def ssim_map(pred, gt, window: int = WINDOW) -> np.ndarray:
    """SSIM per valid window position (uniform ``window``^3 box, population moments)."""
    a, b = _arrays(pred, gt)
    if a.ndim != 3 or min(a.shape) < window:
        raise ValueError(f"need a 3D volume of at least {window}^3, got {a.shape}")
    mu_a, mu_b = _box_mean(a, window), _box_mean(b, window)
    var_a = _box_mean(a * a, window) - mu_a * mu_a
    var_b = _box_mean(b * b, window) - mu_b * mu_b
    cov = _box_mean(a * b, window) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * cov + C2)
    den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2)
    return num / den


def ssim(pred, gt) -> float:
    """Mean SSIM over valid windows, as a percentage."""
    return float(ssim_map(pred, gt).mean() * 100.0)


def _weights(mask, shape) -> np.ndarray:
    w = np.asarray(getattr(mask, "data", mask), dtype=np.float64)
    if w.shape != shape:
        raise ValueError(f"ROI mask shape {w.shape} != volume shape {shape}")
    if (w < 0).any():
        raise ValueError("ROI weights must be non-negative")
    if w.sum() <= 0:
        raise ValueError("ROI mask has zero total weight")
    return w


def w_psnr(pred, gt, roi_mask, max_val: float = 1.0) -> float:
    a, b = _arrays(pred, gt)
    w = _weights(roi_mask, a.shape)
    return _psnr_from_mse(float(np.sum(w * (a - b) ** 2) / np.sum(w)), max_val)


def w_ssim(pred, gt, roi_mask) -> float:
    """SSIM map averaged with weights taken as the mean ROI weight of each window."""
    a, b = _arrays(pred, gt)
    raw = _weights(roi_mask, a.shape)
    m = ssim_map(a, b)
    if np.all(raw == raw.flat[0]):
        return float(m.mean() * 100.0)
    w = _box_mean(raw, WINDOW)
    if w.sum() <= 0:
        raise ValueError("ROI mask has zero weight on every SSIM window")
    return float(np.sum(w * m) / np.sum(w) * 100.0)


@dataclass
class MetricsReport:
    rows: list = field(default_factory=list)

    def add(self, case_id: str, pred, gt, roi_mask=None) -> dict:
        roi = np.ones(np.shape(getattr(gt, "data", gt))) if roi_mask is None else roi_mask
        row = {
            "case_id": case_id,
            "psnr_db": psnr(pred, gt),
            "ssim_pct": ssim(pred, gt),
            "w_psnr_db": w_psnr(pred, gt, roi),
            "w_ssim_pct": w_ssim(pred, gt, roi),
        }
        self.rows.append(row)
        return row

    def _mean(self, key):
        return float(np.mean([r[key] for r in self.rows])) if self.rows else math.nan

    @property
    def psnr_db(self):
        return self._mean("psnr_db")

    @property
    def ssim_pct(self):
        return self._mean("ssim_pct")

    @property
    def w_psnr_db(self):
        return self._mean("w_psnr_db")

    @property
    def w_ssim_pct(self):
        return self._mean("w_ssim_pct")

    def to_csv(self) -> str:
        lines = [",".join(METRIC_COLUMNS)]
        for r in self.rows:
            lines.append(",".join([r["case_id"]] + [repr(float(r[k])) for k in METRIC_COLUMNS[1:]]))
        return "\n".join(lines) + "\n"
