"""Layer primitives on top of :mod:`dualct.tensor` and a small module container."""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Parameter, Tensor, _make, layer_norm

__all__ = [
    "Module",
    "conv2d",
    "conv_transpose2d_2x2",
    "maxpool_2x2",
    "avgpool_2x2",
    "linear",
    "layer_norm",
    "kaiming_uniform",
    "Conv2d",
    "ConvTranspose2x2",
    "Linear",
    "LayerNorm",
]


class Module:
    """Parameter container; attributes that are parameters or modules are discovered in order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, val in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(val, Parameter):
                val.name = path
                yield path, val
            elif isinstance(val, Module):
                yield from val.named_parameters(path + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")
                    elif isinstance(item, Parameter):
                        item.name = f"{path}.{i}"
                        yield item.name, item

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=np.float64) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _check_chw(x: Tensor, what: str) -> None:
    if x.ndim != 3:
        raise ValueError(f"{what}: expected [C, H, W] input, got shape {x.shape}")


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, padding: int = 0) -> Tensor:
    """2D cross-correlation of a [C_in, H, W] map with a [C_out, C_in, k, k] kernel."""
    _check_chw(x, "conv2d")
    c_out, c_in, kh, kw = weight.shape
    if kh != kw or kh % 2 == 0:
        raise ValueError(f"conv2d: kernel must be square with odd size, got {kh}x{kw}")
    if x.shape[0] != c_in:
        raise ValueError(f"conv2d: channel axis mismatch, input has {x.shape[0]}, kernel expects {c_in}")
    if bias is not None and bias.shape != (c_out,):
        raise ValueError(f"conv2d: bias axis 0 has {bias.shape}, expected ({c_out},)")
    k, p = kh, padding
    _, h, w = x.shape
    if h + 2 * p < k:
        raise ValueError(f"conv2d: height axis {h} too small for kernel {k}")
    if w + 2 * p < k:
        raise ValueError(f"conv2d: width axis {w} too small for kernel {k}")
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p))) if p else x.data
    ho, wo = h + 2 * p - k + 1, w + 2 * p - k + 1
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # [C, Ho, Wo, k, k]
    cols = np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2)).reshape(c_in * k * k, ho * wo)
    w2 = weight.data.reshape(c_out, -1)
    out = w2 @ cols
    if bias is not None:
        out = out + bias.data[:, None]
    out = out.reshape(c_out, ho, wo)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(c_out, -1)
        gw = (g2 @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (w2.T @ g2).reshape(c_in, k, k, ho, wo)
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gxp[:, i:i + ho, j:j + wo] += gcols[:, i, j]
            gx = gxp[:, p:p + h, p:p + w] if p else gxp
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=1)

    return _make(out, parents, backward)


def conv_transpose2d_2x2(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Stride-2 transposed convolution with a [C_in, C_out, 2, 2] kernel; doubles H and W."""
    _check_chw(x, "conv_transpose2d_2x2")
    c_in, c_out, kh, kw = weight.shape
    if (kh, kw) != (2, 2):
        raise ValueError(f"conv_transpose2d_2x2: kernel spatial axes must be 2x2, got {kh}x{kw}")
    if x.shape[0] != c_in:
        raise ValueError(
            f"conv_transpose2d_2x2: channel axis mismatch, input has {x.shape[0]}, kernel expects {c_in}"
        )
    _, h, w = x.shape
    xm = x.data.reshape(c_in, h * w)
    wm = weight.data.reshape(c_in, c_out * 4)
    t = (wm.T @ xm).reshape(c_out, 2, 2, h, w)  # [o, i, j, h, w]
    out = t.transpose(0, 3, 1, 4, 2).reshape(c_out, 2 * h, 2 * w)
    if bias is not None:
        out = out + bias.data[:, None, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gt = g.reshape(c_out, h, 2, w, 2).transpose(0, 2, 4, 1, 3).reshape(c_out * 4, h * w)
        gx = (wm @ gt).reshape(c_in, h, w) if x.requires_grad else None
        gw = (xm @ gt.T).reshape(weight.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(1, 2))

    return _make(out, parents, backward)


def _windows_2x2(x: Tensor, what: str) -> np.ndarray:
    _check_chw(x, what)
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"{what}: spatial axes must be even, got {h}x{w}")
    return x.data.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)


def maxpool_2x2(x: Tensor) -> Tensor:
    """2x2 stride-2 max pooling; ties go to the first window entry in row-major order."""
    win = _windows_2x2(x, "maxpool_2x2")
    c, h2, w2, _ = win.shape
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gw = np.zeros_like(win)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        return (gw.reshape(c, h2, w2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(x.shape),)

    return _make(out, (x,), backward)


def avgpool_2x2(x: Tensor) -> Tensor:
    win = _windows_2x2(x, "avgpool_2x2")
    out = win.mean(axis=-1)

    def backward(g):
        c, h2, w2 = g.shape
        gw = np.broadcast_to((g * 0.25)[:, :, None, :, None], (c, h2, 2, w2, 2))
        return (gw.reshape(x.shape),)

    return _make(out, (x,), backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Contract the trailing axis of ``x`` with ``weight`` [C_out, C_in]."""
    c_out, c_in = weight.shape
    if x.shape[-1] != c_in:
        raise ValueError(f"linear: trailing axis has {x.shape[-1]}, weight expects {c_in}")
    lead = x.shape[:-1]
    xm = x.data.reshape(-1, c_in)
    out = xm @ weight.data.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(lead + (c_out,))
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gm = g.reshape(-1, c_out)
        gx = (gm @ weight.data).reshape(x.shape) if x.requires_grad else None
        gw = gm.T @ xm if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, gm.sum(axis=0)

    return _make(out, parents, backward)


# ---------------------------------------------------------------------------
# parameterized layers
# ---------------------------------------------------------------------------


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator,
                 padding: Optional[int] = None, dtype=np.float64):
        self.weight = Parameter(kaiming_uniform(rng, (c_out, c_in, k, k), c_in * k * k, dtype))
        self.bias = Parameter(np.zeros(c_out, dtype=dtype))
        self.padding = k // 2 if padding is None else padding

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.padding)


class ConvTranspose2x2(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, dtype=np.float64):
        self.weight = Parameter(kaiming_uniform(rng, (c_in, c_out, 2, 2), c_in, dtype))
        self.bias = Parameter(np.zeros(c_out, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return conv_transpose2d_2x2(x, self.weight, self.bias)


class Linear(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, bias: bool = True,
                 dtype=np.float64):
        self.weight = Parameter(kaiming_uniform(rng, (c_out, c_in), c_in, dtype))
        self.bias = Parameter(np.zeros(c_out, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, c: int, dtype=np.float64, eps: float = 1e-5):
        self.gain = Parameter(np.ones(c, dtype=dtype))
        self.offset = Parameter(np.zeros(c, dtype=dtype))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.offset, self.eps)

