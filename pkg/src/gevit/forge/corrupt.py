"""Pixel-level corruptions with five severity levels each (0 is identity)."""
from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .render import ShiftError

SEVERITY_TABLES = {
    "gaussian_noise": (0.04, 0.08, 0.12, 0.18, 0.26),   # noise std
    "impulse_noise": (0.02, 0.04, 0.07, 0.10, 0.15),    # fraction of values hit
    "gaussian_blur": (0.5, 1.0, 1.5, 2.0, 3.0),         # blur sigma, pixels
    "contrast": (0.8, 0.65, 0.5, 0.4, 0.3),             # contrast factor
    "pixelate": (2, 3, 4, 6, 8),                        # block size, pixels
}
CORRUPTIONS = tuple(SEVERITY_TABLES)


def severity_value(kind: str, severity: int):
    if kind not in SEVERITY_TABLES:
        raise ShiftError(f"unknown corruption {kind!r}; expected one of {CORRUPTIONS}")
    if not 1 <= severity <= 5:
        raise ShiftError(f"severity must be in 1..5, got {severity}")
    return SEVERITY_TABLES[kind][severity - 1]


def _pixelate(img: np.ndarray, block: int) -> np.ndarray:
    out = np.empty_like(img)
    _, h, w = img.shape
    for r in range(0, h, block):
        for c in range(0, w, block):
            cell = img[:, r:r + block, c:c + block]
            # offset by the block minimum so constant blocks reproduce exactly
            low = cell.min(axis=(1, 2), keepdims=True)
            out[:, r:r + block, c:c + block] = low + (cell - low).mean(axis=(1, 2), keepdims=True)
    return out


def corrupt(image: np.ndarray, kind: str, severity: int, seed: int = 0) -> np.ndarray:
    """Corrupt a (C, H, W) image in [0, 1]; output has the same shape and range."""
    if severity == 0:
        if kind not in SEVERITY_TABLES:
            raise ShiftError(f"unknown corruption {kind!r}")
        return np.array(image, copy=True)
    level = severity_value(kind, severity)
    img = np.asarray(image, dtype=np.float64)
    rng = np.random.default_rng([seed, 99, CORRUPTIONS.index(kind), severity])
    if kind == "gaussian_noise":
        out = img + rng.normal(0.0, level, size=img.shape)
    elif kind == "impulse_noise":
        hit = rng.uniform(size=img.shape) < level
        salt = rng.uniform(size=img.shape) < 0.5
        out = np.where(hit, salt.astype(np.float64), img)
    elif kind == "gaussian_blur":
        out = gaussian_filter(img, (0, level, level), mode="reflect")
    elif kind == "contrast":
        mean = img.mean()
        out = mean + level * (img - mean)
    else:
        out = _pixelate(img, int(level))
    return np.clip(out, 0.0, 1.0).astype(np.asarray(image).dtype)
