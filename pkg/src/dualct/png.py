"""Tiny PNG encoder and line-plot rasterizer (no fonts, no external plotting stack)."""

from __future__ import annotations

import struct
import zlib
from pathlib import Path
from typing import Sequence

import numpy as np

PALETTE = ((31, 119, 180), (214, 39, 40), (44, 160, 44), (148, 103, 189), (255, 127, 14))


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return struct.pack(">I", len(payload)) + tag + payload + struct.pack(">I", zlib.crc32(tag + payload))


def encode_png(rgb: np.ndarray) -> bytes:
    """8-bit RGB image [H, W, 3] -> PNG bytes (filter type 0 on every row)."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected [H, W, 3], got {rgb.shape}")
    img = np.clip(rgb, 0, 255).astype(np.uint8)
    h, w, _ = img.shape
    raw = np.concatenate([np.zeros((h, 1), np.uint8), img.reshape(h, w * 3)], axis=1).tobytes()
    header = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + _chunk(b"IHDR", header) + _chunk(b"IDAT", zlib.compress(raw, 9))
            + _chunk(b"IEND", b""))


def write_png(path, rgb: np.ndarray) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_png(rgb))
    tmp.replace(path)


def _draw_line(img, x0, y0, x1, y1, color):
    n = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
    xs = np.rint(np.linspace(x0, x1, n)).astype(int)
    ys = np.rint(np.linspace(y0, y1, n)).astype(int)
    ok = (xs >= 0) & (xs < img.shape[1]) & (ys >= 0) & (ys < img.shape[0])
    img[ys[ok], xs[ok]] = color


def line_plot(series: Sequence[tuple], width: int = 480, height: int = 320, margin: int = 24,
              log_y: bool = False) -> np.ndarray:
    """Rasterize ``[(x, y), ...]`` series onto a white canvas with a plain axis frame."""
    img = np.full((height, width, 3), 255, np.uint8)
    xs = [np.asarray(x, float) for x, _ in series]
    ys = [np.asarray(y, float) for _, y in series]
    if log_y:
        ys = [np.log10(np.maximum(y, 1e-30)) for y in ys]
    finite = np.concatenate([y[np.isfinite(y)] for y in ys] + [np.zeros(0)])
    allx = np.concatenate(xs)
    if allx.size == 0 or finite.size == 0:
        raise ValueError("nothing to plot")
    x_lo, x_hi = allx.min(), allx.max()
    y_lo, y_hi = finite.min(), finite.max()
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1, y_hi + 1
    px0, px1, py0, py1 = margin, width - margin, height - margin, margin
    black = (0, 0, 0)
    _draw_line(img, px0, py0, px1, py0, black)
    _draw_line(img, px0, py0, px0, py1, black)
    for t in np.linspace(0, 1, 5):
        tx = px0 + t * (px1 - px0)
        ty = py0 + t * (py1 - py0)
        _draw_line(img, tx, py0, tx, py0 + 4, black)
        _draw_line(img, px0 - 4, ty, px0, ty, black)
    for i, (x, y) in enumerate(zip(xs, ys)):
        ok = np.isfinite(y)
        cx = px0 + (x[ok] - x_lo) / (x_hi - x_lo) * (px1 - px0)
        cy = py0 + (y[ok] - y_lo) / (y_hi - y_lo) * (py1 - py0)
        color = PALETTE[i % len(PALETTE)]
        for j in range(len(cx) - 1):
            _draw_line(img, cx[j], cy[j], cx[j + 1], cy[j + 1], color)
        for a, b in zip(cx, cy):
            img[max(0, int(round(b)) - 1):int(round(b)) + 2, max(0, int(round(a)) - 1):int(round(a)) + 2] = color
    return img


def resample(x, y, n: int) -> tuple:
    """Linear resampling of a series onto ``n`` evenly spaced x positions (or fewer if shorter)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) <= n:
        return x, y
    order = np.argsort(x, kind="stable")
    grid = np.linspace(x[order][0], x[order][-1], n)
    return grid, np.interp(grid, x[order], y[order])
