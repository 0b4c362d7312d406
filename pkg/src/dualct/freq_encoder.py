"""Frequency encoder: a chain of HiLocFFNO blocks.

Each block sums a global high-frequency spectral branch, a local patch-wise
spectral branch and a channelwise linear bypass, applies GELU, and refines
the result with softmax-free Galerkin attention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .nn import LayerNorm, Linear, Module, avgpool_2x2, kaiming_uniform, linear
from .spectral import (
    ModeMask,
    SpectralWeightsSCF,
    fft2,
    ifft2,
    extract_modes,
    make_mode_mask,
    scatter_modes,
    spectral_apply_scf,
)
from .tensor import Parameter, Tensor


@dataclass(frozen=True)
class HiLocFfnoConfig:
    c_in: int
    c_out: int
    modes1: int
    modes2: int
    patch: int
    heads: int = 1
    enable_lhif: bool = True


def stage_modes(modes: int, size: int) -> int:
    """Modes retained at a stage of spatial size ``size``; capped at half the size."""
    return max(1, min(modes, size // 2))


def stage_patch(patch: int, size: int) -> int:
    p = min(patch, size)
    if size % p:
        raise ValueError(f"patch {p} does not divide stage size {size}")
    return p


def ghif_forward(f: Tensor, weights: SpectralWeightsSCF, mask: ModeMask) -> Tensor:
    spec = extract_modes(fft2(f), mask)
    return ifft2(scatter_modes(spectral_apply_scf(spec, weights), mask))


def partition_patches(f: Tensor, patch: int) -> Tensor:
    """[C, H, W] -> [Nh*Nw, C, p, p], patches in row-major grid order."""
    c, h, w = f.shape
    if h % patch or w % patch:
        raise ValueError(f"patch {patch} must divide spatial dims {h}x{w}")
    nh, nw = h // patch, w // patch
    x = T.reshape(f, (c, nh, patch, nw, patch))
    x = T.transpose(x, (1, 3, 0, 2, 4))
    return T.reshape(x, (nh * nw, c, patch, patch))


def assemble_patches(p: Tensor, h: int, w: int) -> Tensor:
    n, c, ph, pw = p.shape
    nh, nw = h // ph, w // pw
    if nh * nw != n:
        raise ValueError(f"{n} patches cannot tile {h}x{w}")
    x = T.reshape(p, (nh, nw, c, ph, pw))
    x = T.transpose(x, (2, 0, 3, 1, 4))
    return T.reshape(x, (c, h, w))


def lhif_forward(f: Tensor, weights: SpectralWeightsSCF, patch: int) -> Tensor:
    """Shared-weight spectral layer applied to every non-overlapping patch, all modes kept."""
    _, h, w = f.shape
    if weights.modes != (patch, patch):
        raise ValueError(f"local weights retain {weights.modes} modes, patch is {patch}")
    patches = partition_patches(f, patch)
    out = ifft2(spectral_apply_scf(fft2(patches), weights))
    return assemble_patches(out, h, w)


class GalerkinAttention(Module):
    """Linear attention Q (LN(K)^T LN(V)) / n with a residual connection."""

    def __init__(self, c: int, rng: np.random.Generator, heads: int = 1, dtype=np.float64):
        if c % heads:
            raise ValueError(f"heads {heads} must divide channels {c}")
        self.heads = heads
        self.q = Linear(c, c, rng, dtype=dtype)
        self.k = Linear(c, c, rng, dtype=dtype)
        self.v = Linear(c, c, rng, dtype=dtype)
        self.out = Linear(c, c, rng, dtype=dtype)
        self.norm_k = LayerNorm(c, dtype)
        self.norm_v = LayerNorm(c, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return galerkin_attention(x, self.q, self.k, self.v, self.out, self.norm_k, self.norm_v, self.heads)


def _split_heads(t: Tensor, heads: int) -> Tensor:
    n, c = t.shape
    return T.transpose(T.reshape(t, (n, heads, c // heads)), (1, 0, 2))


def _head_norm(t: Tensor, norm: LayerNorm, heads: int) -> Tensor:
    d = t.shape[-1]
    gain = T.reshape(norm.gain, (heads, 1, d))
    offset = T.reshape(norm.offset, (heads, 1, d))
    return T.layer_norm(t, gain, offset, norm.eps)


def galerkin_attention(x: Tensor, proj_q: Linear, proj_k: Linear, proj_v: Linear, proj_out: Linear,
                       norm_k: LayerNorm, norm_v: LayerNorm, heads: int = 1) -> Tensor:
    c, h, w = x.shape
    n = h * w
    tokens = T.transpose(T.reshape(x, (c, n)), (1, 0))
    q = _split_heads(proj_q(tokens), heads)
    k = _head_norm(_split_heads(proj_k(tokens), heads), norm_k, heads)
    v = _head_norm(_split_heads(proj_v(tokens), heads), norm_v, heads)
    kv = T.swap_last(k) @ v
    att = (q @ kv) * (1.0 / n)
    merged = T.reshape(T.transpose(att, (1, 0, 2)), (n, c))
    out = tokens + proj_out(merged)
    return T.reshape(T.transpose(out, (1, 0)), (c, h, w))


class HiLocFFNO(Module):
    def __init__(self, config: HiLocFfnoConfig, size: int, rng: np.random.Generator, dtype=np.float64):
        cfg = config
        self.config = cfg
        self.size = size
        m1, m2 = stage_modes(cfg.modes1, size), stage_modes(cfg.modes2, size)
        self.mask = make_mode_mask(size, size, m1, m2, "high")
        self.glob = SpectralWeightsSCF(cfg.c_in, cfg.c_out, m1, m2, rng, dtype)
        self.patch = stage_patch(cfg.patch, size)
        self.local: Optional[SpectralWeightsSCF] = None
        if cfg.enable_lhif:
            self.local = SpectralWeightsSCF(cfg.c_in, cfg.c_out, self.patch, self.patch, rng, dtype)
        self.bypass = Parameter(kaiming_uniform(rng, (cfg.c_out, cfg.c_in), cfg.c_in, dtype))
        self.attn = GalerkinAttention(cfg.c_out, rng, cfg.heads, dtype)

    def __call__(self, f: Tensor) -> Tensor:
        return hilocffno_forward(f, self)


def hilocffno_forward(f: Tensor, block: HiLocFFNO) -> Tensor:
    c, h, w = f.shape
    if (h, w) != block.mask.dims:
        raise ValueError(f"block built for {block.mask.dims}, input is {h}x{w}")
    tokens = T.transpose(T.reshape(f, (c, h * w)), (1, 0))
    bypass = T.reshape(T.transpose(linear(tokens, block.bypass), (1, 0)), (block.config.c_out, h, w))
    total = bypass + ghif_forward(f, block.glob, block.mask)
    if block.local is not None:
        total = total + lhif_forward(f, block.local, block.patch)
    return block.attn(T.gelu(total))


class FreqEncoder(Module):
    def __init__(self, in_channels: int, channels, size: int, modes: int, patch: int,
                 rng: np.random.Generator, ga_heads: int = 1, enable_lhif: bool = True,
                 dtype=np.float64):
        blocks = []
        c_prev = in_channels
        for level, c in enumerate(channels):
            cfg = HiLocFfnoConfig(c_prev, c, modes, modes, patch, ga_heads, enable_lhif)
            blocks.append(HiLocFFNO(cfg, size >> level, rng, dtype))
            c_prev = c
        self.blocks = blocks

    def __call__(self, image: Tensor) -> list:
        return freq_encoder_forward(image, self)


def freq_encoder_forward(image: Tensor, encoder: FreqEncoder) -> list:
    """Return the pyramid [f_1, ..., f_L]; each level is emitted before 2x2 average pooling."""
    levels = []
    x = image
    for i, block in enumerate(encoder.blocks):
        f = block(x)
        levels.append(f)
        if i + 1 < len(encoder.blocks):
            x = avgpool_2x2(f)
    return levels
