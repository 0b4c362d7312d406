"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor


def numerical_gradient(fn: Callable[[Tensor], Tensor], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(Tensor(x)).item()
        flat[i] = orig - h
        fm = fn(Tensor(x)).item()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def check_gradient(fn: Callable[[Tensor], Tensor], x, h: float = 1e-5) -> float:
    """Max relative error between the backward pass and central differences.

    ``fn`` maps a tensor to a scalar tensor. The relative error per entry uses
    ``max(|a|, |b|, 1e-8)`` as denominator. Inputs are promoted to float64.
    """
    data = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    t = Tensor(data.copy(), requires_grad=True)
    fn(t).backward()
    analytic = np.zeros_like(data) if t.grad is None else t.grad
    numeric = numerical_gradient(fn, data, h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
