"""2D Fourier transforms, mode selection and (factorized) spectral weighting.

Transforms are radix-2 and unnormalized in the forward direction; the
inverse carries the 1/(H*W) factor and keeps only the real part. Complex
quantities travel as pairs of real tensors so the autodiff core stays real.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import tensor as T
from .nn import Module
from .tensor import Parameter, Tensor, _make


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(m: int, inverse: bool, ctype) -> np.ndarray:
    sign = 1.0 if inverse else -1.0
    return np.exp(sign * 2j * np.pi * np.arange(m) / (2 * m)).astype(ctype)


def fft_last_axis(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unnormalized iterative radix-2 DFT along the last axis."""
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise ValueError(f"FFT length must be a power of two, got {n}")
    ctype = np.complex64 if x.dtype in (np.float32, np.complex64) else np.complex128
    lead = x.shape[:-1]
    z = np.asarray(x, dtype=ctype)[..., _bit_reversal(n)]
    m = 1
    while m < n:
        z = z.reshape(lead + (n // (2 * m), 2, m))
        even = z[..., 0, :]
        odd = z[..., 1, :] * _twiddles(m, inverse, ctype)
        z = np.concatenate([even + odd, even - odd], axis=-1)
        m *= 2
    return z.reshape(lead + (n,))


def fft2_array(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unnormalized 2D DFT over the last two axes (no 1/(HW) even when inverse)."""
    h, w = x.shape[-2:]
    if not (is_power_of_two(h) and is_power_of_two(w)):
        raise ValueError(f"spatial dims must be powers of two, got {h}x{w}")
    z = fft_last_axis(x, inverse)
    z = fft_last_axis(np.swapaxes(z, -1, -2), inverse)
    return np.swapaxes(z, -1, -2)


@dataclass
class ComplexSpectrum:
    re: Tensor
    im: Tensor
    source_dims: tuple

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ValueError(f"real/imag shapes differ: {self.re.shape} vs {self.im.shape}")

    @property
    def shape(self) -> tuple:
        return self.re.shape

    def to_complex(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data


def _fft2_op(x: Tensor) -> Tensor:
    z = fft2_array(x.data)
    out = np.stack([z.real, z.imag]).astype(x.dtype)

    def backward(g):
        gz = g[0] + 1j * g[1]
        return (fft2_array(gz, inverse=True).real.astype(x.dtype),)

    return _make(out, (x,), backward)


def _ifft2_op(stacked: Tensor) -> Tensor:
    h, w = stacked.shape[-2:]
    scale = 1.0 / (h * w)
    z = stacked.data[0] + 1j * stacked.data[1]
    out = (fft2_array(z, inverse=True).real * scale).astype(stacked.dtype)

    def backward(g):
        gz = fft2_array(g) * scale
        return (np.stack([gz.real, gz.imag]).astype(stacked.dtype),)

    return _make(out, (stacked,), backward)


def fft2(x: Tensor) -> ComplexSpectrum:
    """Forward 2D DFT of a real map over its last two axes."""
    stacked = _fft2_op(x)
    return ComplexSpectrum(stacked[0], stacked[1], tuple(x.shape[-2:]))


def ifft2(spec: ComplexSpectrum) -> Tensor:
    """Inverse 2D DFT scaled by 1/(H*W), projected to its real part."""
    if tuple(spec.shape[-2:]) != tuple(spec.source_dims):
        raise ValueError(f"spectrum dims {spec.shape[-2:]} do not match source dims {spec.source_dims}")
    return _ifft2_op(T.stack([spec.re, spec.im]))


# ---------------------------------------------------------------------------
# mode selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModeMask:
    height_indices: tuple
    width_indices: tuple
    variant: str
    dims: tuple

    @property
    def modes(self) -> tuple:
        return len(self.height_indices), len(self.width_indices)


def _high_block(n: int, m: int) -> tuple:
    start = n // 2 - (m + 1) // 2
    return tuple(range(start, start + m))


def _low_set(n: int, m: int) -> tuple:
    def signed(i):
        return i if i < n - i else i - n

    order = sorted(range(n), key=lambda i: (abs(signed(i)), signed(i) < 0))
    return tuple(sorted(order[:m]))


def make_mode_mask(h: int, w: int, m1: int, m2: int, variant: str = "high") -> ModeMask:
    """Retained FFT row/column indices.

    ``high`` keeps the block centred on the Nyquist index (largest |signed
    frequency|); ``low`` keeps the smallest |signed frequency| indices,
    positive before negative on ties.
    """
    if not (1 <= m1 <= h and 1 <= m2 <= w):
        raise ValueError(f"modes ({m1}, {m2}) out of range for {h}x{w}")
    if variant == "high":
        if m1 >= h or m2 >= w:
            raise ValueError(f"high-frequency mask needs modes < dims, got ({m1}, {m2}) for {h}x{w}")
        rows, cols = _high_block(h, m1), _high_block(w, m2)
    elif variant == "low":
        rows, cols = _low_set(h, m1), _low_set(w, m2)
    else:
        raise ValueError(f"unknown mask variant {variant!r}")
    return ModeMask(rows, cols, variant, (h, w))


def full_mask(h: int, w: int) -> ModeMask:
    return ModeMask(tuple(range(h)), tuple(range(w)), "low", (h, w))


def _check_mask(spec_dims, mask: ModeMask) -> None:
    if tuple(spec_dims) != tuple(mask.dims):
        raise ValueError(f"mask built for {mask.dims}, spectrum has {tuple(spec_dims)}")


def _gather2d(x: Tensor, rows, cols) -> Tensor:
    r, c = np.asarray(rows), np.asarray(cols)
    out = x.data[..., r[:, None], c[None, :]]

    def backward(g):
        full = np.zeros_like(x.data)
        full[..., r[:, None], c[None, :]] = g
        return (full,)

    return _make(np.ascontiguousarray(out), (x,), backward)


def _scatter2d(x: Tensor, rows, cols, h: int, w: int) -> Tensor:
    r, c = np.asarray(rows), np.asarray(cols)
    out = np.zeros(x.shape[:-2] + (h, w), dtype=x.dtype)
    out[..., r[:, None], c[None, :]] = x.data
    return _make(out, (x,), lambda g: (np.ascontiguousarray(g[..., r[:, None], c[None, :]]),))


def extract_modes(spec: ComplexSpectrum, mask: ModeMask) -> ComplexSpectrum:
    _check_mask(spec.shape[-2:], mask)
    rows, cols = mask.height_indices, mask.width_indices
    return ComplexSpectrum(_gather2d(spec.re, rows, cols), _gather2d(spec.im, rows, cols),
                           spec.source_dims)


def scatter_modes(spec: ComplexSpectrum, mask: ModeMask) -> ComplexSpectrum:
    """Place retained coefficients back into a zero full-size spectrum."""
    if spec.shape[-2:] != mask.modes:
        raise ValueError(f"spectrum has {spec.shape[-2:]} modes, mask retains {mask.modes}")
    h, w = mask.dims
    rows, cols = mask.height_indices, mask.width_indices
    return ComplexSpectrum(_scatter2d(spec.re, rows, cols, h, w), _scatter2d(spec.im, rows, cols, h, w),
                           (h, w))


# ---------------------------------------------------------------------------
# spectral weights
# ---------------------------------------------------------------------------


def _uniform(rng, shape, scale, dtype):
    return rng.uniform(-scale, scale, size=shape).astype(dtype)


class SpectralWeightsFull(Module):
    def __init__(self, c_in: int, c_out: int, m1: int, m2: int, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        s = 1.0 / c_in
        shape = (c_out, c_in, m1, m2)
        self.r_re = Parameter(_uniform(rng, shape, s, dtype))
        self.r_im = Parameter(_uniform(rng, shape, s, dtype))

    @classmethod
    def from_arrays(cls, r_re, r_im) -> "SpectralWeightsFull":
        obj = cls.__new__(cls)
        obj.r_re, obj.r_im = Parameter(r_re), Parameter(r_im)
        return obj


class SpectralWeightsSCF(Module):
    """Channel mixing ``r1`` [C_out, C_in] times per-channel spectral weights ``r2`` [C_in, M1, M2]."""

    def __init__(self, c_in: int, c_out: int, m1: int, m2: int, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        s = 1.0 / c_in
        self.r1_re = Parameter(_uniform(rng, (c_out, c_in), s, dtype))
        self.r1_im = Parameter(_uniform(rng, (c_out, c_in), s, dtype))
        self.r2_re = Parameter(_uniform(rng, (c_in, m1, m2), s, dtype))
        self.r2_im = Parameter(_uniform(rng, (c_in, m1, m2), s, dtype))

    @classmethod
    def from_arrays(cls, r1_re, r1_im, r2_re, r2_im) -> "SpectralWeightsSCF":
        obj = cls.__new__(cls)
        obj.r1_re, obj.r1_im = Parameter(r1_re), Parameter(r1_im)
        obj.r2_re, obj.r2_im = Parameter(r2_re), Parameter(r2_im)
        return obj

    @property
    def c_out(self) -> int:
        return self.r1_re.shape[0]

    @property
    def c_in(self) -> int:
        return self.r1_re.shape[1]

    @property
    def modes(self) -> tuple:
        return self.r2_re.shape[1:]

    def outer_product(self) -> SpectralWeightsFull:
        """The equivalent full weight R[o, c, u, v] = R1[o, c] * R2[c, u, v]."""
        r1 = self.r1_re.data + 1j * self.r1_im.data
        r2 = self.r2_re.data + 1j * self.r2_im.data
        full = r1[:, :, None, None] * r2[None]
        return SpectralWeightsFull.from_arrays(full.real.copy(), full.imag.copy())


def spectral_apply_full(z: ComplexSpectrum, weights: SpectralWeightsFull) -> ComplexSpectrum:
    c_out, c_in, m1, m2 = weights.r_re.shape
    if z.shape[-3:] != (c_in, m1, m2):
        raise ValueError(f"spectrum shape {z.shape} does not match weights [{c_out}, {c_in}, {m1}, {m2}]")
    zre = T.reshape(z.re, z.shape[:-3] + (1, c_in, m1, m2))
    zim = T.reshape(z.im, z.shape[:-3] + (1, c_in, m1, m2))
    rre, rim = weights.r_re, weights.r_im
    out_re = T.tsum(rre * zre - rim * zim, axis=-3)
    out_im = T.tsum(rre * zim + rim * zre, axis=-3)
    return ComplexSpectrum(out_re, out_im, z.source_dims)


def spectral_apply_scf(z: ComplexSpectrum, weights: SpectralWeightsSCF) -> ComplexSpectrum:
    c_out, c_in = weights.r1_re.shape
    m1, m2 = weights.modes
    if z.shape[-3:] != (c_in, m1, m2):
        raise ValueError(
            f"spectrum shape {z.shape} does not match SCF weights (C_in={c_in}, modes={m1}x{m2})"
        )
    # per-channel spectral weighting, then channel mixing
    wre = weights.r2_re * z.re - weights.r2_im * z.im
    wim = weights.r2_re * z.im + weights.r2_im * z.re
    lead = z.shape[:-3]
    wre = T.reshape(wre, lead + (c_in, m1 * m2))
    wim = T.reshape(wim, lead + (c_in, m1 * m2))
    out_re = weights.r1_re @ wre - weights.r1_im @ wim
    out_im = weights.r1_re @ wim + weights.r1_im @ wre
    shape = lead + (c_out, m1, m2)
    return ComplexSpectrum(T.reshape(out_re, shape), T.reshape(out_im, shape), z.source_dims)


# ---------------------------------------------------------------------------
# parameter accounting
# ---------------------------------------------------------------------------


def _positive(*dims) -> None:
    for d in dims:
        if int(d) != d or d <= 0:
            raise ValueError(f"dimensions must be positive integers, got {dims}")


def count_params_full(c_in: int, c_out: int, m1: int, m2: int) -> int:
    _positive(c_in, c_out, m1, m2)
    return 2 * c_out * c_in * m1 * m2


def count_params_scf(c_in: int, c_out: int, m1: int, m2: int) -> int:
    _positive(c_in, c_out, m1, m2)
    return 2 * (c_out * c_in + c_in * m1 * m2)


def saving_ratio(c_in: int, c_out: int, m1: int, m2: int) -> Fraction:
    """Exact SCF/full parameter ratio."""
    return Fraction(count_params_scf(c_in, c_out, m1, m2), count_params_full(c_in, c_out, m1, m2))
