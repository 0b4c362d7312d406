"""Cross-attention frequency fusion of spatial and frequency feature maps.

Both maps pass through a 3x3 convolution and a 2D DFT. Softmax cross-attention
then runs separately on the real and imaginary coefficient maps, its output is
added to the spatial coefficients, and the inverse transform returns a real map.
The transform pair is scaled orthonormally (1/sqrt(HW) each way), which leaves
the residual path exact and keeps attention logits at feature scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import Conv2d, Linear, Module
from .spectral import ComplexSpectrum, fft2, ifft2
from .tensor import Tensor

VARIANTS = ("caff", "spatial_ca", "add", "concat")
QKV_ROLES = ("spatial_query", "frequency_query")


@dataclass(frozen=True)
class FusionConfig:
    heads: int = 4
    variant: str = "caff"
    qkv_roles: str = "spatial_query"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown fusion variant {self.variant!r}; choose from {VARIANTS}")
        if self.qkv_roles not in QKV_ROLES:
            raise ValueError(f"unknown qkv_roles {self.qkv_roles!r}; choose from {QKV_ROLES}")


class CrossAttention(Module):
    def __init__(self, c: int, heads: int, rng: np.random.Generator, dtype=np.float64):
        if c % heads:
            raise ValueError(f"heads {heads} must divide channels {c}")
        self.heads = heads
        self.q = Linear(c, c, rng, dtype=dtype)
        self.k = Linear(c, c, rng, dtype=dtype)
        self.v = Linear(c, c, rng, dtype=dtype)
        self.out = Linear(c, c, rng, dtype=dtype)

    def __call__(self, k: Tensor, v: Tensor, q: Tensor) -> Tensor:
        return cross_attention(k, v, q, self.heads, self)


def _tokens(x: Tensor) -> Tensor:
    c, h, w = x.shape
    return T.transpose(T.reshape(x, (c, h * w)), (1, 0))


def _heads(t: Tensor, heads: int) -> Tensor:
    n, c = t.shape
    return T.transpose(T.reshape(t, (n, heads, c // heads)), (1, 0, 2))


def cross_attention(k: Tensor, v: Tensor, q: Tensor, heads: int, proj: CrossAttention) -> Tensor:
    """Multi-head scaled dot-product attention over the H*W positions of [C, H, W] maps."""
    if not (k.shape == v.shape == q.shape):
        raise ValueError(f"k, v, q shapes differ: {k.shape}, {v.shape}, {q.shape}")
    c, h, w = q.shape
    if c % heads:
        raise ValueError(f"heads {heads} must divide channels {c}")
    d = c // heads
    qh = _heads(proj.q(_tokens(q)), heads) * (1.0 / np.sqrt(d))
    kh = _heads(proj.k(_tokens(k)), heads)
    vh = _heads(proj.v(_tokens(v)), heads)
    att = T.attention(qh, kh, vh)
    merged = T.reshape(T.transpose(att, (1, 0, 2)), (h * w, c))
    out = proj.out(merged)
    return T.reshape(T.transpose(out, (1, 0)), (c, h, w))


class CAFF(Module):
    def __init__(self, c: int, config: FusionConfig, rng: np.random.Generator, dtype=np.float64):
        self.config = config
        self.conv_s = Conv2d(c, c, 3, rng, dtype=dtype)
        self.conv_f = Conv2d(c, c, 3, rng, dtype=dtype)
        self.ca_re = self.ca_im = self.proj = None
        if config.variant in ("caff", "spatial_ca"):
            self.ca_re = CrossAttention(c, config.heads, rng, dtype)
        if config.variant == "caff":
            self.ca_im = CrossAttention(c, config.heads, rng, dtype)
        if config.variant == "concat":
            self.proj = Conv2d(2 * c, c, 1, rng, dtype=dtype)

    def __call__(self, s: Tensor, f: Tensor) -> Tensor:
        return caff_fuse(s, f, self)


def _attend(ca: CrossAttention, spatial: Tensor, freq: Tensor, roles: str) -> Tensor:
    if roles == "spatial_query":
        return ca(freq, freq, spatial)
    return ca(spatial, spatial, freq)


def caff_fuse(s: Tensor, f: Tensor, module: CAFF) -> Tensor:
    if s.shape != f.shape:
        raise ValueError(f"spatial {s.shape} and frequency {f.shape} features differ in shape")
    cfg = module.config
    cs, cf = module.conv_s(s), module.conv_f(f)
    if cfg.variant == "add":
        return cs + cf
    if cfg.variant == "concat":
        return module.proj(T.concat([cs, cf], axis=0))
    if cfg.variant == "spatial_ca":
        return cs + _attend(module.ca_re, cs, cf, cfg.qkv_roles)

    _, h, w = s.shape
    scale = 1.0 / np.sqrt(h * w)
    ss, fs = fft2(cs), fft2(cf)
    re_s, im_s = ss.re * scale, ss.im * scale
    re_f, im_f = fs.re * scale, fs.im * scale
    re_out = re_s + _attend(module.ca_re, re_s, re_f, cfg.qkv_roles)
    im_out = im_s + _attend(module.ca_im, im_s, im_f, cfg.qkv_roles)
    return ifft2(ComplexSpectrum(re_out, im_out, (h, w))) * np.sqrt(h * w)
