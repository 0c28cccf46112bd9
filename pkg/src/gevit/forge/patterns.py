"""Procedural fill textures and backdrops, one family per class id."""
from __future__ import annotations

import colorsys

import numpy as np

N_PATTERNS = 9


def _hsv(h: float, s: float, v: float) -> np.ndarray:
    return np.array(colorsys.hsv_to_rgb(h % 1.0, s, v))


TEXTURE_COLORS = np.stack([_hsv(j / N_PATTERNS, 0.85, 0.95) for j in range(N_PATTERNS)])
BACKGROUND_COLORS = np.stack([_hsv((j + 0.5) / N_PATTERNS, 0.35, 0.55) for j in range(N_PATTERNS)])
SKETCH_PAPER = 0.95
SKETCH_INK = 0.1
CONTOUR_INK = np.array([0.08, 0.08, 0.08])


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    c = np.arange(size) + 0.5
    return np.meshgrid(c, c, indexing="xy")


def _stripes(x, y, angle_deg, period, phase):
    a = np.deg2rad(angle_deg)
    return 0.5 + 0.5 * np.sin(2 * np.pi * (x * np.cos(a) + y * np.sin(a)) / period + phase)


def _value_noise(size: int, cell: float, rng: np.random.Generator) -> np.ndarray:
    """Smoothstep-interpolated lattice noise rescaled to [0, 1]."""
    n = int(np.ceil(size / cell)) + 2
    lattice = rng.uniform(size=(n, n))
    c = (np.arange(size) + 0.5) / cell
    i = np.floor(c).astype(int)
    f = c - i
    f = f * f * (3 - 2 * f)
    top = lattice[np.ix_(i, i)] * (1 - f)[None, :] + lattice[np.ix_(i, i + 1)] * f[None, :]
    bot = lattice[np.ix_(i + 1, i)] * (1 - f)[None, :] + lattice[np.ix_(i + 1, i + 1)] * f[None, :]
    out = top * (1 - f)[:, None] + bot * f[:, None]
    return (out - out.min()) / max(out.max() - out.min(), 1e-12)


def pattern(texture_class: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Scalar pattern in [0, 1] for a texture class; phase drawn from ``rng``."""
    x, y = _grid(size)
    phase = rng.uniform(0, 2 * np.pi)
    shift = rng.uniform(0, 6, size=2)
    kind = texture_class % N_PATTERNS
    if kind in (0, 1, 2, 6):
        angle = {0: 0, 1: 90, 2: 45, 6: 135}[kind]
        return _stripes(x, y, angle, 4.0, phase)
    if kind == 3:
        dx = (x + shift[0]) % 5.0 - 2.5
        dy = (y + shift[1]) % 5.0 - 2.5
        return (np.hypot(dx, dy) < 1.5).astype(np.float64)
    if kind == 4:
        return ((np.floor((x + shift[0]) / 3) + np.floor((y + shift[1]) / 3)) % 2).astype(np.float64)
    if kind == 5:
        return _value_noise(size, 3.0, rng)
    if kind == 7:
        gx = ((x + shift[0]) % 4.0) < 1.2
        gy = ((y + shift[1]) % 4.0) < 1.2
        return (gx | gy).astype(np.float64)
    cx, cy = size / 2 + rng.uniform(-8, 8, size=2)
    return 0.5 + 0.5 * np.sin(2 * np.pi * np.hypot(x - cx, y - cy) / 5.0 + phase)


def _jittered(color: np.ndarray, jitter: float, rng: np.random.Generator) -> np.ndarray:
    if jitter <= 0:
        return color
    return np.clip(color * (1.0 + jitter * rng.uniform(-0.4, 0.4, size=3)), 0.0, 1.0)


def texture_field(texture_class: int, size: int, rng: np.random.Generator,
                  jitter: float = 0.0) -> np.ndarray:
    """(3, size, size) fill: the class color modulated by the class pattern."""
    bright = _jittered(TEXTURE_COLORS[texture_class % N_PATTERNS], jitter, rng)
    p = pattern(texture_class, size, rng)
    return (0.35 + 0.65 * p)[None] * bright[:, None, None]


def background_field(background_class: int, size: int, rng: np.random.Generator,
                     jitter: float = 0.0) -> np.ndarray:
    """(3, size, size) low-contrast, low-frequency backdrop for a class."""
    x, y = _grid(size)
    base = _jittered(BACKGROUND_COLORS[background_class % N_PATTERNS], jitter, rng)
    angle = 20.0 * (background_class % N_PATTERNS)
    wave = _stripes(x, y, angle, size / 1.5, rng.uniform(0, 2 * np.pi))
    blotch = _value_noise(size, 8.0, rng)
    mod = 0.75 + 0.3 * wave + 0.15 * (blotch - 0.5)
    return np.clip(mod[None] * base[:, None, None], 0.0, 1.0)


def smooth_color_field(texture_class: int, size: int, rng: np.random.Generator,
                       jitter: float = 0.0) -> np.ndarray:
    """Painterly fill: the class's mean texture color with gentle brush variation."""
    color = _jittered(TEXTURE_COLORS[texture_class % N_PATTERNS], jitter, rng) * 0.675
    brush = _value_noise(size, 10.0, rng)
    return np.clip((0.85 + 0.3 * brush)[None] * color[:, None, None], 0.0, 1.0)
