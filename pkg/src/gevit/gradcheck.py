"""Central finite-difference gradient oracle."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor, backward, no_grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def numeric_grad(f: Callable[[Tensor], Tensor], theta: Tensor, h: float = 1e-5,
                 coords: np.ndarray | None = None) -> np.ndarray:
    """Central differences of ``f`` at ``theta`` over flat ``coords`` (default: all)."""
    if h <= 0:
        raise ValueError("step h must be positive")
    flat = theta.data.reshape(-1)
    coords = np.arange(flat.size) if coords is None else np.asarray(coords)
    out = np.zeros(coords.size)
    with no_grad():
        for n, i in enumerate(coords):
            orig = flat[i]
            flat[i] = orig + h
            up = f(theta).item()
            flat[i] = orig - h
            down = f(theta).item()
            flat[i] = orig
            out[n] = (up - down) / (2.0 * h)
    return out


def analytic_grad(f: Callable[[Tensor], Tensor], theta: Tensor) -> np.ndarray:
    was = theta.requires_grad
    theta.requires_grad = True
    theta.grad = None
    loss = f(theta)
    backward(loss)
    grad = np.zeros_like(theta.data) if theta.grad is None else theta.grad.copy()
    theta.grad = None
    theta.requires_grad = was
    return grad


def finite_diff_check(f: Callable[[Tensor], Tensor], theta: Tensor, h: float = 1e-5,
                      coords: np.ndarray | None = None, floor: float = 1e-4) -> float:
    """Max relative error between backprop and central differences.

    ``f`` must rebuild its graph on each call (the tape is dynamic) and may
    close over other tensors; only ``theta`` is perturbed, in place.
    Coordinates whose gradient magnitude is below ``floor`` are compared on
    an absolute scale, where relative error is dominated by roundoff.
    """
    grad = analytic_grad(f, theta).reshape(-1)
    coords = np.arange(grad.size) if coords is None else np.asarray(coords)
    numeric = numeric_grad(f, theta, h, coords)
    return float(np.max(relative_error(grad[coords], numeric, floor)))
