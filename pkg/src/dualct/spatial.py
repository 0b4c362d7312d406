"""UNet-style spatial encoder and the skip-connected feature decoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import Conv2d, ConvTranspose2x2, Module, maxpool_2x2
from .tensor import Tensor


@dataclass
class ProjectionFeature:
    tensor: Tensor
    view_index: int
    angle: float


class ConvBlock(Module):
    """Two same-padded 3x3 convolutions, each followed by ReLU."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, dtype=np.float64):
        self.conv1 = Conv2d(c_in, c_out, 3, rng, dtype=dtype)
        self.conv2 = Conv2d(c_out, c_out, 3, rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return T.relu(self.conv2(T.relu(self.conv1(x))))


class SpatialEncoder(Module):
    def __init__(self, in_channels: int, channels, rng: np.random.Generator, dtype=np.float64):
        blocks, c_prev = [], in_channels
        for c in channels:
            blocks.append(ConvBlock(c_prev, c, rng, dtype))
            c_prev = c
        self.blocks = blocks

    def __call__(self, image: Tensor) -> list:
        return spatial_encoder_forward(image, self)


def spatial_encoder_forward(image: Tensor, encoder: SpatialEncoder) -> list:
    levels = len(encoder.blocks)
    _, h, w = image.shape
    step = 1 << (levels - 1)
    if h % step or w % step:
        raise ValueError(f"input {h}x{w} cannot be halved {levels - 1} times")
    pyramid, x = [], image
    for i, block in enumerate(encoder.blocks):
        s = block(x)
        pyramid.append(s)
        if i + 1 < levels:
            x = maxpool_2x2(s)
    return pyramid


class FeatureDecoder(Module):
    def __init__(self, channels, out_channels: int, rng: np.random.Generator, dtype=np.float64):
        channels = list(channels)
        ups, blocks = [], []
        for l in range(len(channels) - 1, 0, -1):
            ups.append(ConvTranspose2x2(channels[l], channels[l - 1], rng, dtype))
            blocks.append(ConvBlock(2 * channels[l - 1], channels[l - 1], rng, dtype))
        self.ups = ups
        self.blocks = blocks
        self.head = Conv2d(channels[0], out_channels, 1, rng, dtype=dtype)

    def __call__(self, fused: list) -> Tensor:
        return feature_decoder_forward(fused, self)


def feature_decoder_forward(fused: list, decoder: FeatureDecoder) -> Tensor:
    if len(fused) != len(decoder.ups) + 1:
        raise ValueError(f"decoder expects {len(decoder.ups) + 1} levels, got {len(fused)}")
    d = fused[-1]
    for i, (up, block) in enumerate(zip(decoder.ups, decoder.blocks)):
        skip = fused[-2 - i]
        u = up(d)
        if u.shape != skip.shape:
            raise ValueError(f"skip shape {skip.shape} does not match upsampled {u.shape}")
        d = block(T.concat([u, skip], axis=0))
    return decoder.head(d)
