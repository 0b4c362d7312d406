"""Intensity-field decoding: project, sample, fuse across views, decode with an MLP."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .geometry import ConeBeamGeometry, Volume, bilinear_sample, project_point
from .nn import Linear, Module
from .tensor import Tensor, no_grad


@dataclass
class QueryBatch:
    points: np.ndarray  # [N, 3] world mm
    targets: Optional[np.ndarray] = None  # [N]

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if self.points.shape[0] < 1 or self.points.shape[1] != 3:
            raise ValueError(f"points must be [N, 3] with N >= 1, got {self.points.shape}")
        if self.targets is not None and len(self.targets) != len(self.points):
            raise ValueError("targets and points differ in length")


class FieldDecoder(Module):
    """Four-layer MLP psi: C -> C -> C -> C/2 -> 1 with ReLU between layers."""

    def __init__(self, c: int, rng: np.random.Generator, fusion_mode: str = "max", hidden=None,
                 dtype=np.float64):
        if fusion_mode not in ("max", "mean"):
            raise ValueError(f"fusion_mode must be 'max' or 'mean', got {fusion_mode!r}")
        hidden = tuple(hidden) if hidden is not None else (c, c, max(1, c // 2))
        widths = (c,) + hidden + (1,)
        self.layers = [Linear(a, b, rng, dtype=dtype) for a, b in zip(widths[:-1], widths[1:])]
        self.fusion_mode = fusion_mode
        self.feature_width = c


def fuse_views(per_view: Sequence[Tensor], mode: str = "max") -> Tensor:
    """Permutation-invariant set fusion over views (elementwise max or mean)."""
    per_view = list(per_view)
    if not per_view:
        raise ValueError("need at least one view")
    width = per_view[0].shape
    for t in per_view:
        if t.shape != width:
            raise ValueError(f"view feature shapes differ: {t.shape} vs {width}")
    if len(per_view) == 1:
        return per_view[0]
    stacked = T.stack(per_view, axis=0)
    if mode == "max":
        return T.amax(stacked, axis=0)
    if mode == "mean":
        return _ordered_mean(stacked)
    raise ValueError(f"unknown fusion mode {mode!r}")


def _ordered_mean(stacked: Tensor) -> Tensor:
    # summing in sorted order makes the mean exactly independent of view order
    k = stacked.shape[0]
    out = np.sort(stacked.data, axis=0).sum(axis=0) / k
    return T._make(out, (stacked,), lambda g: (np.broadcast_to(g / k, stacked.shape).copy(),))


def _decode_rowwise(x: np.ndarray, decoder: FieldDecoder) -> np.ndarray:
    # einsum's own loops give each row the same arithmetic whatever the batch size,
    # which BLAS does not; used whenever no graph is recorded
    n_layers = len(decoder.layers)
    for i, layer in enumerate(decoder.layers):
        x = np.einsum("nc,oc->no", x, layer.weight.data)
        if layer.bias is not None:
            x = x + layer.bias.data
        if i + 1 < n_layers:
            x = np.maximum(x, 0).astype(x.dtype, copy=False)
    return x


def mlp_decode(r: Tensor, decoder: FieldDecoder) -> Tensor:
    """Decode fused features [N, C] (or [C]) to intensities [N] (or a scalar)."""
    if not T.grad_enabled():
        x = _decode_rowwise(r.data if r.ndim == 2 else r.data.reshape(1, -1), decoder)
        return Tensor(x.reshape(x.shape[0]) if r.ndim == 2 else x.reshape(()))
    x = r if r.ndim == 2 else T.reshape(r, (1, -1))
    n_layers = len(decoder.layers)
    for i, layer in enumerate(decoder.layers):
        x = layer(x)
        if i + 1 < n_layers:
            x = T.relu(x)
    return T.reshape(x, (x.shape[0],)) if r.ndim == 2 else T.reshape(x, ())


def feature_coords(points: np.ndarray, angle_deg: float, geometry: ConeBeamGeometry,
                   feature_hw: tuple) -> np.ndarray:
    """Detector projection of ``points`` mapped onto a feature grid of size ``feature_hw``.

    The feature grid covers the detector with a uniform scale; pixel centres
    are aligned the way block averaging aligns them.
    """
    u, v = project_point(points, angle_deg, geometry)
    rows, cols = geometry.det_pixels
    fh, fw = feature_hw
    sx, sy = cols / fw, rows / fh
    return np.stack([(u + 0.5) / sx - 0.5, (v + 0.5) / sy - 0.5], axis=1)


def predict_points(points, features: Sequence[Tensor], geometry: ConeBeamGeometry,
                   decoder: FieldDecoder) -> Tensor:
    pts = points.points if isinstance(points, QueryBatch) else np.atleast_2d(np.asarray(points, float))
    if len(features) != geometry.num_views:
        raise ValueError(f"{len(features)} feature maps for {geometry.num_views} views")
    per_view = []
    for feat, angle in zip(features, geometry.angles_deg):
        xy = feature_coords(pts, angle, geometry, feat.shape[1:])
        per_view.append(bilinear_sample(feat, xy))
    return mlp_decode(fuse_views(per_view, decoder.fusion_mode), decoder)


def grid_points(out_shape: tuple, spacing_mm: tuple) -> np.ndarray:
    """Voxel-centre world coordinates of a centred grid; ``out_shape`` is (H, W, D)."""
    h, w, d = out_shape
    return Volume(np.zeros((d, h, w)), spacing_mm).voxel_centers()


def reconstruct_volume(features: Sequence[Tensor], geometry: ConeBeamGeometry, decoder: FieldDecoder,
                       out_shape: Optional[tuple] = None, out_spacing: Optional[tuple] = None,
                       chunk: int = 8192) -> Volume:
    """Evaluate the field on every voxel centre of an (H, W, D) grid, ``chunk`` points at a time."""
    out_shape = tuple(out_shape or geometry.vol_shape)
    out_spacing = tuple(out_spacing or geometry.vol_spacing_mm)
    if chunk < 1:
        raise ValueError("chunk must be positive")
    feats = [Tensor(f.data) for f in features]
    pts = grid_points(out_shape, out_spacing)
    values = np.empty(len(pts))
    with no_grad():
        for start in range(0, len(pts), chunk):
            sl = slice(start, start + chunk)
            values[sl] = predict_points(pts[sl], feats, geometry, decoder).data
    h, w, d = out_shape
    return Volume(values.reshape(d, h, w), out_spacing)
