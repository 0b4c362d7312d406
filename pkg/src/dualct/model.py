"""Dual-encoder projection model: frequency and spatial encoders, per-level fusion,
feature decoder, and the intensity-field MLP."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .field import FieldDecoder, predict_points, reconstruct_volume
from .freq_encoder import FreqEncoder, stage_modes, stage_patch
from .fusion import CAFF, FusionConfig
from .geometry import ConeBeamGeometry, Volume, downsample_mean
from .nn import Module
from .spatial import FeatureDecoder, SpatialEncoder
from .spectral import count_params_full, count_params_scf
from .tensor import Tensor

REQUIRED_MODEL_KEYS = ("levels", "channels", "modes1", "modes2", "patch", "heads", "fusion_variant",
                       "qkv_roles", "enable_lhif", "enable_caff", "feature_width")


class ConfigError(ValueError):
    """Invalid or incomplete configuration; ``key`` names the offending entry."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class ModelConfig:
    levels: int = 3
    channels: tuple = (8, 16, 32)
    modes1: int = 4
    modes2: int = 4
    patch: int = 8
    heads: int = 2
    fusion_variant: str = "caff"
    qkv_roles: str = "spatial_query"
    enable_lhif: bool = True
    enable_caff: bool = True
    feature_width: int = 16
    ga_heads: int = 1
    fusion_mode: str = "max"
    input_size: Optional[int] = None
    input_scale: float = 0.02
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if len(self.channels) != self.levels:
            raise ConfigError(f"channels has {len(self.channels)} entries for {self.levels} levels", "channels")
        if self.levels < 1:
            raise ConfigError("levels must be >= 1", "levels")
        if self.modes1 != self.modes2:
            raise ConfigError("only square mode blocks are supported (modes1 == modes2)", "modes2")
        for c in self.channels:
            if c % self.heads:
                raise ConfigError(f"heads {self.heads} must divide every level width, got {c}", "heads")
            if c % self.ga_heads:
                raise ConfigError(f"ga_heads {self.ga_heads} must divide every level width", "ga_heads")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype}", "dtype")
        FusionConfig(self.heads, self.fusion_variant, self.qkv_roles)

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def fusion(self) -> FusionConfig:
        return FusionConfig(self.heads, self.fusion_variant, self.qkv_roles)

    def stage_sizes(self, size: int) -> list:
        return [size >> l for l in range(self.levels)]

    def check_size(self, size: int) -> None:
        if size & (size - 1) or size < (1 << (self.levels - 1)) * 2:
            raise ConfigError(f"input size {size} must be a power of two >= {2 << (self.levels - 1)}",
                              "input_size")
        for s in self.stage_sizes(size):
            try:
                stage_patch(self.patch, s)
            except ValueError as exc:
                raise ConfigError(str(exc), "patch") from exc

    def to_json(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        for key in REQUIRED_MODEL_KEYS:
            if key not in d:
                raise ConfigError(f"model config is missing key {key!r}", key)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config key(s): {sorted(unknown)}", sorted(unknown)[0])
        return cls(**d)

    def replace(self, **changes) -> "ModelConfig":
        d = asdict(self)
        d.update(changes)
        return ModelConfig(**d)


class DualEncoderModel(Module):
    def __init__(self, config: ModelConfig, size: int, rng: np.random.Generator):
        config.check_size(size)
        dt = config.np_dtype
        self.config = config
        self.size = size
        ch = config.channels
        self.spatial = SpatialEncoder(1, ch, rng, dt)
        self.freq = None
        self.fusions = []
        if config.enable_caff:
            self.freq = FreqEncoder(1, ch, size, config.modes1, config.patch, rng, config.ga_heads,
                                    config.enable_lhif, dt)
            self.fusions = [CAFF(c, config.fusion(), rng, dt) for c in ch]
        self.decoder = FeatureDecoder(ch, config.feature_width, rng, dt)
        self.field = FieldDecoder(config.feature_width, rng, config.fusion_mode, dtype=dt)

    def prepare_images(self, images: np.ndarray) -> np.ndarray:
        """Block-average detector images to the model input size and apply the input scale."""
        images = np.asarray(images, dtype=np.float64)
        rows, cols = images.shape[-2:]
        if rows != cols or rows % self.size:
            raise ConfigError(f"detector {rows}x{cols} is not a square multiple of input size {self.size}",
                              "input_size")
        return (downsample_mean(images, rows // self.size) * self.config.input_scale).astype(
            self.config.np_dtype)

    def encode_view(self, image: Tensor) -> Tensor:
        """One prepared [1, S, S] image -> feature map E [C, S, S]."""
        s_levels = self.spatial(image)
        if self.freq is None:
            fused = s_levels
        else:
            f_levels = self.freq(image)
            fused = [fuse(s, f) for fuse, s, f in zip(self.fusions, s_levels, f_levels)]
        return self.decoder(fused)

    def encode(self, images: np.ndarray) -> list:
        prepared = self.prepare_images(images)
        return [self.encode_view(Tensor(img[None])) for img in prepared]

    def predict(self, points, features: Sequence[Tensor], geometry: ConeBeamGeometry) -> Tensor:
        return predict_points(points, features, geometry, self.field)

    def reconstruct(self, images: np.ndarray, geometry: ConeBeamGeometry, chunk: int = 8192,
                    out_shape=None, out_spacing=None) -> Volume:
        from .tensor import no_grad

        with no_grad():
            feats = self.encode(images)
        return reconstruct_volume(feats, geometry, self.field, out_shape, out_spacing, chunk)


def build_model(config: ModelConfig, det_size: int, seed: int) -> DualEncoderModel:
    size = config.input_size or det_size
    return DualEncoderModel(config, size, np.random.default_rng(seed))


def spectral_layer_table(config: ModelConfig, size: int) -> list:
    """Per spectral layer: name, channels, modes and parameter counts (full vs factorized)."""
    rows = []
    if not config.enable_caff:
        return rows
    c_prev = 1
    for level, (c, s) in enumerate(zip(config.channels, config.stage_sizes(size))):
        m = stage_modes(config.modes1, s)
        rows.append({"layer": f"freq.{level}.glob", "c_in": c_prev, "c_out": c, "m1": m, "m2": m,
                     "full": count_params_full(c_prev, c, m, m), "scf": count_params_scf(c_prev, c, m, m)})
        if config.enable_lhif:
            p = stage_patch(config.patch, s)
            rows.append({"layer": f"freq.{level}.local", "c_in": c_prev, "c_out": c, "m1": p, "m2": p,
                         "full": count_params_full(c_prev, c, p, p), "scf": count_params_scf(c_prev, c, p, p)})
        c_prev = c
    return rows
