"""Circular cone-beam geometry, ray-driven projector, phantoms and samplers.

Conventions
-----------
World axes (x, y, z) in mm; z is the rotation axis. Volume data is stored
depth-major as [D, H, W] with W along x, H along y and D along z, centred on
the isocenter by default. The source sits at (dso cos a, dso sin a, 0); the
flat detector is perpendicular to the source-isocenter ray at distance dsd
from the source. Detector column u runs along (-sin a, cos a, 0), row v
along +z, and pixel (0, 0) is the first corner with pixel centres at integer
coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

from .tensor import Tensor, _make

GEOMETRY_FIELDS = ("dso_mm", "dsd_mm", "det_pixels", "det_spacing_mm", "vol_shape", "vol_spacing_mm",
                   "angles_deg")


@dataclass
class ConeBeamGeometry:
    dso_mm: float
    dsd_mm: float
    det_pixels: tuple  # (rows H_I, cols W_I)
    det_spacing_mm: tuple  # (row, col)
    vol_shape: tuple  # (H, W, D)
    vol_spacing_mm: tuple  # (s_h, s_w, s_d)
    angles_deg: tuple = field(default=(0.0,))

    def __post_init__(self):
        self.det_pixels = tuple(int(v) for v in self.det_pixels)
        self.det_spacing_mm = tuple(float(v) for v in self.det_spacing_mm)
        self.vol_shape = tuple(int(v) for v in self.vol_shape)
        self.vol_spacing_mm = tuple(float(v) for v in self.vol_spacing_mm)
        self.angles_deg = tuple(float(a) for a in self.angles_deg)
        self.validate()

    def validate(self) -> None:
        if not self.dsd_mm > self.dso_mm > 0:
            raise ValueError(f"need dsd_mm > dso_mm > 0, got dsd={self.dsd_mm}, dso={self.dso_mm}")
        if len(self.det_pixels) != 2 or min(self.det_pixels) < 1:
            raise ValueError(f"det_pixels must be two positive ints, got {self.det_pixels}")
        if len(self.det_spacing_mm) != 2 or min(self.det_spacing_mm) <= 0:
            raise ValueError(f"det_spacing_mm must be two positive numbers, got {self.det_spacing_mm}")
        if len(self.vol_shape) != 3 or min(self.vol_shape) < 1:
            raise ValueError(f"vol_shape must be three positive ints, got {self.vol_shape}")
        if len(self.vol_spacing_mm) != 3 or min(self.vol_spacing_mm) <= 0:
            raise ValueError(f"vol_spacing_mm must be three positive numbers, got {self.vol_spacing_mm}")
        if len(self.angles_deg) < 1:
            raise ValueError("at least one angle is required")

    @property
    def num_views(self) -> int:
        return len(self.angles_deg)

    @property
    def magnification(self) -> float:
        return self.dsd_mm / self.dso_mm

    def with_angles(self, angles) -> "ConeBeamGeometry":
        d = asdict(self)
        d["angles_deg"] = tuple(angles)
        return ConeBeamGeometry(**d)

    def to_json(self) -> dict:
        return {
            "dso_mm": self.dso_mm,
            "dsd_mm": self.dsd_mm,
            "det_pixels": list(self.det_pixels),
            "det_spacing_mm": list(self.det_spacing_mm),
            "vol_shape": list(self.vol_shape),
            "vol_spacing_mm": list(self.vol_spacing_mm),
            "angles_deg": list(self.angles_deg),
        }

    @classmethod
    def from_json(cls, d: dict) -> "ConeBeamGeometry":
        missing = [k for k in GEOMETRY_FIELDS if k not in d]
        if missing:
            raise KeyError(f"geometry is missing field(s): {', '.join(missing)}")
        for k in GEOMETRY_FIELDS:
            vals = d[k] if isinstance(d[k], list) else [d[k]]
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
                raise ValueError(f"geometry field {k!r} must be numeric")
        return cls(**{k: d[k] for k in GEOMETRY_FIELDS})


def uniform_angles(k: int, span_deg: float = 180.0) -> tuple:
    """``k`` gantry angles spaced evenly over ``span_deg``, starting at 0."""
    if k < 1:
        raise ValueError("need at least one view")
    return tuple(span_deg * i / k for i in range(k))


def load_geometry(path) -> ConeBeamGeometry:
    return ConeBeamGeometry.from_json(json.loads(Path(path).read_text()))


def save_geometry(geometry: ConeBeamGeometry, path) -> None:
    Path(path).write_text(json.dumps(geometry.to_json(), indent=2))


# ---------------------------------------------------------------------------
# volumes
# ---------------------------------------------------------------------------


@dataclass
class Volume:
    data: np.ndarray  # [D, H, W]
    spacing_mm: tuple = (1.0, 1.0, 1.0)  # (s_h, s_w, s_d)
    origin: Optional[tuple] = None  # world (x, y, z) of voxel (0, 0, 0) centre

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError(f"volume data must be [D, H, W], got shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise ValueError("volume contains non-finite values")
        self.spacing_mm = tuple(float(s) for s in self.spacing_mm)
        if self.origin is None:
            d, h, w = self.data.shape
            sh, sw, sd = self.spacing_mm
            self.origin = (-(w - 1) / 2 * sw, -(h - 1) / 2 * sh, -(d - 1) / 2 * sd)
        self.origin = tuple(float(o) for o in self.origin)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def voxel_size_xyz(self) -> np.ndarray:
        sh, sw, sd = self.spacing_mm
        return np.array([sw, sh, sd])

    @property
    def dims_xyz(self) -> np.ndarray:
        d, h, w = self.data.shape
        return np.array([w, h, d])

    def bbox(self) -> tuple:
        """Outer voxel-edge bounding box (lo, hi) in world mm."""
        lo = np.asarray(self.origin) - self.voxel_size_xyz / 2
        return lo, lo + self.dims_xyz * self.voxel_size_xyz

    def world_to_index(self, x: np.ndarray) -> np.ndarray:
        """World (x, y, z) -> continuous index coordinates (iw, ih, id)."""
        return (np.asarray(x, dtype=np.float64) - np.asarray(self.origin)) / self.voxel_size_xyz

    def voxel_centers(self) -> np.ndarray:
        """World coordinates of all voxel centres in [D, H, W] order, shape [D*H*W, 3]."""
        d, h, w = self.data.shape
        iz, iy, ix = np.meshgrid(np.arange(d), np.arange(h), np.arange(w), indexing="ij")
        idx = np.stack([ix.ravel(), iy.ravel(), iz.ravel()], axis=1).astype(np.float64)
        return np.asarray(self.origin) + idx * self.voxel_size_xyz


def volume_for_geometry(data: np.ndarray, geometry: ConeBeamGeometry) -> Volume:
    h, w, d = geometry.vol_shape
    if data.shape != (d, h, w):
        raise ValueError(f"volume shape {data.shape} does not match geometry [D,H,W]=({d},{h},{w})")
    return Volume(data, geometry.vol_spacing_mm)


def _trilinear_weights(vol_dims_xyz: np.ndarray, idx: np.ndarray):
    """Corner flat indices [8, N] and weights [8, N]; points outside [0, dim-1] get zero weight."""
    dims = vol_dims_xyz
    valid = np.all((idx >= 0) & (idx <= dims - 1), axis=1)
    i0 = np.clip(np.floor(idx), 0, np.maximum(dims - 2, 0)).astype(np.int64)
    frac = idx - i0
    i1 = np.minimum(i0 + 1, dims - 1)
    w_, h_, _ = dims
    flats, weights = [], []
    for cz in (0, 1):
        for cy in (0, 1):
            for cx in (0, 1):
                ix = i1[:, 0] if cx else i0[:, 0]
                iy = i1[:, 1] if cy else i0[:, 1]
                iz = i1[:, 2] if cz else i0[:, 2]
                wt = ((frac[:, 0] if cx else 1 - frac[:, 0])
                      * (frac[:, 1] if cy else 1 - frac[:, 1])
                      * (frac[:, 2] if cz else 1 - frac[:, 2]))
                flats.append((iz * h_ + iy) * w_ + ix)
                weights.append(np.where(valid, wt, 0.0))
    return np.stack(flats), np.stack(weights)


def trilinear_sample(volume: Volume, x) -> np.ndarray:
    """Trilinear interpolation at world points ``x`` ([3] or [N, 3]); zero outside the voxel-centre span."""
    pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
    flats, weights = _trilinear_weights(volume.dims_xyz, volume.world_to_index(pts))
    vals = (volume.data.reshape(-1)[flats] * weights).sum(axis=0)
    return vals[0] if np.ndim(x) == 1 else vals


# ---------------------------------------------------------------------------
# point projection
# ---------------------------------------------------------------------------


def _frame(angle_deg: float, geometry: ConeBeamGeometry):
    a = math.radians(angle_deg)
    src = np.array([geometry.dso_mm * math.cos(a), geometry.dso_mm * math.sin(a), 0.0])
    n_hat = -src / geometry.dso_mm
    u_hat = np.array([-math.sin(a), math.cos(a), 0.0])
    v_hat = np.array([0.0, 0.0, 1.0])
    return src, n_hat, u_hat, v_hat


def detector_center_px(geometry: ConeBeamGeometry) -> tuple:
    rows, cols = geometry.det_pixels
    return (cols - 1) / 2.0, (rows - 1) / 2.0


def project_point(x, angle_deg: float, geometry: ConeBeamGeometry):
    """Continuous detector pixel coordinates (u column, v row) of world point(s) ``x``."""
    pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
    src, n_hat, u_hat, v_hat = _frame(angle_deg, geometry)
    d = pts - src
    depth = d @ n_hat
    if np.any(depth <= 0):
        raise ValueError("point lies at or behind the source plane")
    t = geometry.dsd_mm / depth
    u_mm = t * (d @ u_hat)
    v_mm = t * (d @ v_hat)
    row_sp, col_sp = geometry.det_spacing_mm
    cu, cv = detector_center_px(geometry)
    u = u_mm / col_sp + cu
    v = v_mm / row_sp + cv
    if np.ndim(x) == 1:
        return float(u[0]), float(v[0])
    return u, v


# ---------------------------------------------------------------------------
# ray-driven forward projector
# ---------------------------------------------------------------------------


def _ray_box(src: np.ndarray, dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t_a = (lo - src) * inv
        t_b = (hi - src) * inv
    t_near = np.where(np.isfinite(t_a), np.minimum(t_a, t_b), -np.inf)
    t_far = np.where(np.isfinite(t_a), np.maximum(t_a, t_b), np.inf)
    # axis-parallel rays: inside the slab -> unbounded, outside -> empty
    parallel = ~np.isfinite(t_a)
    inside = (src >= lo) & (src <= hi)
    t_near = np.where(parallel & ~inside, np.inf, t_near)
    t0 = np.max(t_near, axis=1)
    t1 = np.min(t_far, axis=1)
    return np.maximum(t0, 0.0), t1


class RayProjector:
    """Sparse system matrices A_k (pixels x voxels), one per gantry angle.

    Each row integrates trilinear samples taken every ``step`` mm along the
    source-to-pixel-centre ray inside the volume bounding box.
    """

    def __init__(self, geometry: ConeBeamGeometry, volume_like: Optional[Volume] = None,
                 step: Optional[float] = None, chunk_rays: int = 1024, dtype=np.float64):
        geometry.validate()
        self.geometry = geometry
        h, w, d = geometry.vol_shape
        if volume_like is None:
            volume_like = Volume(np.zeros((d, h, w)), geometry.vol_spacing_mm)
        self.volume_like = volume_like
        self.step = float(step if step is not None else min(volume_like.spacing_mm) / 2.0)
        self.chunk_rays = chunk_rays
        self.dtype = dtype
        self.matrices = [self._build(a) for a in geometry.angles_deg]

    @property
    def num_voxels(self) -> int:
        return int(np.prod(self.volume_like.shape))

    def _build(self, angle_deg: float) -> sparse.csr_matrix:
        g = self.geometry
        vol = self.volume_like
        rows, cols = g.det_pixels
        row_sp, col_sp = g.det_spacing_mm
        src, n_hat, u_hat, v_hat = _frame(angle_deg, g)
        cu, cv = detector_center_px(g)
        rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
        u_mm = (cc.ravel() - cu) * col_sp
        v_mm = (rr.ravel() - cv) * row_sp
        targets = src + g.dsd_mm * n_hat + u_mm[:, None] * u_hat + v_mm[:, None] * v_hat
        dirs = targets - src
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        lo, hi = vol.bbox()
        t0, t1 = _ray_box(src, dirs, lo, hi)
        length = np.where(t1 > t0, t1 - t0, 0.0)
        nsteps = np.ceil(length / self.step).astype(np.int64)
        dims = vol.dims_xyz
        blocks = []
        for start in range(0, rows * cols, self.chunk_rays):
            sl = slice(start, min(start + self.chunk_rays, rows * cols))
            n_max = int(nsteps[sl].max(initial=0))
            if n_max == 0:
                continue
            j = np.arange(n_max)
            ray_ids = np.arange(sl.start, sl.stop)
            keep = j[None, :] < nsteps[sl, None]
            t = t0[sl, None] + (j[None, :] + 0.5) * self.step
            ray_ids = np.broadcast_to(ray_ids[:, None], t.shape)[keep]
            t = t[keep]
            pts = src + t[:, None] * dirs[ray_ids]
            flats, weights = _trilinear_weights(dims, vol.world_to_index(pts))
            nz = weights > 0
            blocks.append((np.broadcast_to(ray_ids, flats.shape)[nz], flats[nz], weights[nz] * self.step))
        if blocks:
            r = np.concatenate([b[0] for b in blocks])
            c = np.concatenate([b[1] for b in blocks])
            v = np.concatenate([b[2] for b in blocks])
        else:
            r = c = np.zeros(0, dtype=np.int64)
            v = np.zeros(0)
        mat = sparse.coo_matrix((v, (r, c)), shape=(rows * cols, self.num_voxels)).tocsr()
        mat.sum_duplicates()
        return mat.astype(self.dtype)

    def forward(self, data: np.ndarray) -> np.ndarray:
        """[D, H, W] volume -> [K, rows, cols] projections."""
        rows, cols = self.geometry.det_pixels
        flat = np.asarray(data, dtype=self.dtype).reshape(-1)
        if flat.size != self.num_voxels:
            raise ValueError(f"volume has {flat.size} voxels, projector expects {self.num_voxels}")
        return np.stack([(a @ flat).reshape(rows, cols) for a in self.matrices])

    def back(self, view: int, pixels: np.ndarray) -> np.ndarray:
        """Adjoint of view ``view``: [rows, cols] -> flat voxel array."""
        return self.matrices[view].T @ np.asarray(pixels, dtype=self.dtype).reshape(-1)


@dataclass
class ProjectionSet:
    images: np.ndarray  # [K, rows, cols]
    angles_deg: tuple
    geometry: ConeBeamGeometry

    def __post_init__(self):
        self.images = np.asarray(self.images)
        self.angles_deg = tuple(float(a) for a in self.angles_deg)
        if self.images.ndim != 3:
            raise ValueError(f"projection images must be [K, rows, cols], got {self.images.shape}")
        if self.images.shape[0] != len(self.angles_deg) or len(self.angles_deg) != self.geometry.num_views:
            raise ValueError("projection count does not match the number of angles")
        if self.images.shape[1:] != self.geometry.det_pixels:
            raise ValueError(f"image size {self.images.shape[1:]} != detector {self.geometry.det_pixels}")
        if not np.isfinite(self.images).all():
            raise ValueError("projection images contain non-finite values")


def forward_project(volume: Volume, geometry: ConeBeamGeometry,
                    projector: Optional[RayProjector] = None) -> ProjectionSet:
    if projector is None:
        projector = RayProjector(geometry, volume)
    return ProjectionSet(projector.forward(volume.data), geometry.angles_deg, geometry)


# ---------------------------------------------------------------------------
# phantoms
# ---------------------------------------------------------------------------

# modified 3D Shepp-Logan: value, semi-axes (a, b, c), centre (x0, y0, z0), Euler angles (phi, theta, psi) deg
SHEPP_LOGAN_3D = (
    (1.0, 0.6900, 0.920, 0.810, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.780, 0.0, -0.0184, 0.0, 0.0, 0.0, 0.0),
    (-0.2, 0.1100, 0.310, 0.220, 0.22, 0.0, 0.0, -18.0, 0.0, 10.0),
    (-0.2, 0.1600, 0.410, 0.280, -0.22, 0.0, 0.0, 18.0, 0.0, 10.0),
    (0.1, 0.2100, 0.250, 0.410, 0.0, 0.35, -0.15, 0.0, 0.0, 0.0),
    (0.1, 0.0460, 0.046, 0.050, 0.0, 0.1, 0.25, 0.0, 0.0, 0.0),
    (0.1, 0.0460, 0.046, 0.050, 0.0, -0.1, 0.25, 0.0, 0.0, 0.0),
    (0.1, 0.0460, 0.023, 0.050, -0.08, -0.605, 0.0, 0.0, 0.0, 0.0),
    (0.1, 0.0230, 0.023, 0.020, 0.0, -0.606, 0.0, 0.0, 0.0, 0.0),
    (0.1, 0.0230, 0.046, 0.020, 0.06, -0.605, 0.0, 0.0, 0.0, 0.0),
)


def euler_rotation(phi: float, theta: float, psi: float) -> np.ndarray:
    """Z-X-Z rotation used to orient phantom ellipsoids (angles in degrees)."""
    p, t, s = np.radians([phi, theta, psi])
    cp, sp, ct, st, cs, ss = np.cos(p), np.sin(p), np.cos(t), np.sin(t), np.cos(s), np.sin(s)
    return np.array([
        [cs * cp - ct * sp * ss, cs * sp + ct * cp * ss, ss * st],
        [-ss * cp - ct * sp * cs, -ss * sp + ct * cp * cs, cs * st],
        [st * sp, -st * cp, ct],
    ])


def normalized_grid(size: int) -> np.ndarray:
    """Voxel-centre coordinates in [-1, 1] along one axis."""
    return (np.arange(size) + 0.5) * (2.0 / size) - 1.0


def render_ellipsoids(ellipsoids, size: int) -> np.ndarray:
    g = normalized_grid(size)
    z, y, x = np.meshgrid(g, g, g, indexing="ij")
    pts = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    out = np.zeros(pts.shape[0])
    for val, a, b, c, x0, y0, z0, phi, theta, psi in ellipsoids:
        rot = euler_rotation(phi, theta, psi)
        local = (pts - np.array([x0, y0, z0])) @ rot.T
        inside = ((local / np.array([a, b, c])) ** 2).sum(axis=1) <= 1.0
        out[inside] += val
    return out.reshape(size, size, size)


def random_ellipsoid_set(seed: int) -> list:
    rng = np.random.default_rng(seed)
    count = int(rng.integers(5, 13))
    ells = []
    for _ in range(count):
        val = rng.uniform(0.1, 1.0)
        axes = rng.uniform(0.1, 0.45, size=3)
        centre = rng.uniform(-0.45, 0.45, size=3)
        angles = rng.uniform(0.0, 180.0, size=3)
        ells.append((val, *axes, *centre, *angles))
    return ells


def make_phantom(kind: str, size: int, seed: int = 0, spacing_mm=(1.0, 1.0, 1.0)) -> Volume:
    if size < 1:
        raise ValueError("phantom size must be positive")
    if kind == "shepp3d":
        data = render_ellipsoids(SHEPP_LOGAN_3D, size)
    elif kind == "random_ellipsoids":
        data = render_ellipsoids(random_ellipsoid_set(seed), size)
    else:
        raise ValueError(f"unknown phantom kind {kind!r}")
    return Volume(np.clip(data, 0.0, 1.0), spacing_mm)


# ---------------------------------------------------------------------------
# bilinear sampling (differentiable)
# ---------------------------------------------------------------------------


def bilinear_sample(feature: Tensor, xy) -> Tensor:
    """Sample a [C, H, W] map at continuous (x=column, y=row) coordinates ``xy`` [N, 2].

    Returns [N, C]. Points outside [0, W-1] x [0, H-1] give zeros. The
    result is differentiable with respect to the feature map and, when ``xy``
    is a tensor, the coordinates.
    """
    xy_t = xy if isinstance(xy, Tensor) else Tensor(np.asarray(xy, dtype=feature.dtype))
    pts = np.atleast_2d(xy_t.data)
    c, h, w = feature.shape
    x, y = pts[:, 0], pts[:, 1]
    valid = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    x0 = np.clip(np.floor(x), 0, max(w - 2, 0)).astype(np.int64)
    y0 = np.clip(np.floor(y), 0, max(h - 2, 0)).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.where(valid, x - x0, 0.0)
    fy = np.where(valid, y - y0, 0.0)
    w00 = (1 - fx) * (1 - fy) * valid
    w01 = fx * (1 - fy) * valid
    w10 = (1 - fx) * fy * valid
    w11 = fx * fy * valid
    n = len(x)
    # sparse interpolation matrix [N, H*W]; one row per point, four corner entries
    interp = sparse.csr_matrix(
        (np.concatenate([w00, w01, w10, w11]),
         (np.tile(np.arange(n), 4),
          np.concatenate([y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1]))),
        shape=(n, h * w))
    flat = feature.data.reshape(c, h * w)
    out = np.asarray(interp @ flat.T).astype(feature.dtype)

    def backward(g):
        gf = None
        if feature.requires_grad:
            gf = np.asarray(interp.T @ g).T.reshape(c, h, w).astype(feature.dtype)
        gxy = None
        if xy_t.requires_grad:
            f = feature.data
            f00, f01 = f[:, y0, x0], f[:, y0, x1]
            f10, f11 = f[:, y1, x0], f[:, y1, x1]
            dx = (1 - fy) * (f01 - f00) + fy * (f11 - f10)
            dy = (1 - fx) * (f10 - f00) + fx * (f11 - f01)
            gx = (g.T * dx).sum(axis=0) * valid
            gy = (g.T * dy).sum(axis=0) * valid
            gxy = np.stack([gx, gy], axis=1).reshape(xy_t.shape).astype(xy_t.dtype)
        return gf, gxy

    return _make(out, (feature, xy_t), backward)


def downsample_mean(images: np.ndarray, factor: int) -> np.ndarray:
    """Block-average the last two axes by an integer factor."""
    if factor == 1:
        return images
    *lead, h, w = images.shape
    if h % factor or w % factor:
        raise ValueError(f"image {h}x{w} not divisible by {factor}")
    return images.reshape(*lead, h // factor, factor, w // factor, factor).mean(axis=(-3, -1))


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def _write_raw(path: Path, arr: np.ndarray, sidecar: dict) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    tmp.replace(path)
    side = path.with_suffix(".json")
    tmp = side.with_name(side.name + ".tmp")
    tmp.write_text(json.dumps(sidecar, indent=2))
    tmp.replace(side)


def _read_raw(path: Path, shape: Sequence[int]) -> np.ndarray:
    raw = Path(path).read_bytes()
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for shape {list(shape)}, got {len(raw)}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)


def save_volume(volume: Volume, path) -> None:
    """Raw little-endian float32 in [D, H, W] order plus a JSON sidecar next to it."""
    _write_raw(Path(path), volume.data, {
        "shape": list(volume.shape),
        "spacing_mm": list(volume.spacing_mm),
        "dtype": "f32le",
        "order": "DHW",
    })


def load_volume(path) -> Volume:
    path = Path(path)
    side = json.loads(path.with_suffix(".json").read_text())
    for k in ("shape", "spacing_mm", "dtype", "order"):
        if k not in side:
            raise KeyError(f"volume sidecar missing {k!r}")
    if side["dtype"] != "f32le" or side["order"] != "DHW":
        raise ValueError(f"unsupported volume encoding {side['dtype']}/{side['order']}")
    return Volume(_read_raw(path, side["shape"]), tuple(side["spacing_mm"]))


def save_projections(proj: ProjectionSet, path) -> None:
    _write_raw(Path(path), proj.images, {
        "shape": list(proj.images.shape),
        "dtype": "f32le",
        "order": "KHW",
        "angles_deg": list(proj.angles_deg),
        "geometry": proj.geometry.to_json(),
    })


def load_projections(path) -> ProjectionSet:
    path = Path(path)
    side = json.loads(path.with_suffix(".json").read_text())
    for k in ("shape", "dtype", "order", "angles_deg", "geometry"):
        if k not in side:
            raise KeyError(f"projection sidecar missing {k!r}")
    geometry = ConeBeamGeometry.from_json(side["geometry"])
    return ProjectionSet(_read_raw(path, side["shape"]), tuple(side["angles_deg"]), geometry)
