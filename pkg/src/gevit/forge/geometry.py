"""Class silhouettes as closed polygon loops, plus anti-aliased rasterization.

Coordinates are canvas fractions in [0, 1], y pointing down. Stroke-like
classes (S-curve, spiral) are stored as the outline of their thickened
centerline so every class fills the same way (even-odd over its loops).
"""
from __future__ import annotations

import math

import numpy as np

SHAPE_NAMES = ("triangle", "square", "star", "ring", "cross", "arrow", "heart", "s_curve", "spiral")
SUPERSAMPLE = 4


def _circle(r: float, n: int) -> np.ndarray:
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)


def _thicken(center: np.ndarray, width: float) -> np.ndarray:
    """Closed outline of a polyline swept by a segment of ``width``."""
    d = np.gradient(center, axis=0)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    normal = np.stack([-d[:, 1], d[:, 0]], axis=1) * (width / 2)
    return np.concatenate([center + normal, (center - normal)[::-1]])


def base_loops(shape_class: int) -> list[np.ndarray]:
    """Unit-scale loops (roughly radius 1, centered at the origin)."""
    name = SHAPE_NAMES[shape_class % len(SHAPE_NAMES)]
    if name == "triangle":
        ang = np.deg2rad([-90, 30, 150])
        return [1.2 * np.stack([np.cos(ang), np.sin(ang) + 0.2], axis=1)]
    if name == "square":
        return [np.array([[-0.8, -0.8], [0.8, -0.8], [0.8, 0.8], [-0.8, 0.8]])]
    if name == "star":
        ang = -np.pi / 2 + np.arange(10) * np.pi / 5
        r = np.where(np.arange(10) % 2 == 0, 1.15, 0.56)
        return [np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)]
    if name == "ring":
        return [_circle(1.0, 32), _circle(0.55, 24)[::-1]]
    if name == "cross":
        a, b = 0.32, 1.0
        return [np.array([[-a, -b], [a, -b], [a, -a], [b, -a], [b, a], [a, a], [a, b], [-a, b],
                          [-a, a], [-b, a], [-b, -a], [-a, -a]])]
    if name == "arrow":
        return [np.array([[-1.05, -0.36], [0.0, -0.36], [0.0, -0.9], [1.05, 0.0], [0.0, 0.9],
                          [0.0, 0.36], [-1.05, 0.36]])]
    if name == "heart":
        t = np.linspace(0, 2 * np.pi, 36, endpoint=False)
        x = 16 * np.sin(t) ** 3
        y = 13 * np.cos(t) - 5 * np.cos(2 * t) - 2 * np.cos(3 * t) - np.cos(4 * t)
        return [np.stack([x, -y + 2.5], axis=1) / 15.0]
    if name == "s_curve":
        t = np.linspace(0, 1, 28)
        center = np.stack([0.5 * np.sin(2 * np.pi * t), 1.1 - 2.2 * t], axis=1)
        return [_thicken(center, 0.6)]
    t = np.linspace(0, 1, 48)
    r, ang = 0.18 + 0.85 * t, 3.6 * np.pi * t
    return [_thicken(np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1), 0.34)]


def placed_loops(shape_class: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Base loops under a random similarity transform drawn from ``rng``."""
    scale = rng.uniform(0.30, 0.36)
    theta = np.deg2rad(rng.uniform(-20, 20))
    offset = 0.5 + rng.uniform(-0.06, 0.06, size=2)
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    return [loop @ rot.T * scale + offset for loop in base_loops(shape_class)]


def _sample_grid(size: int, ss: int) -> np.ndarray:
    c = (np.arange(size * ss) + 0.5) / (size * ss)
    yy, xx = np.meshgrid(c, c, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel()], axis=1)


def _downsample(samples: np.ndarray, size: int, ss: int) -> np.ndarray:
    return samples.reshape(size, ss, size, ss).mean(axis=(1, 3))


def inside(points: np.ndarray, loops: list[np.ndarray]) -> np.ndarray:
    """Even-odd point-in-polygon over all loops."""
    px, py = points[:, 0:1], points[:, 1:2]
    hit = np.zeros(points.shape[0], dtype=bool)
    for loop in loops:
        x1, y1 = loop[:, 0], loop[:, 1]
        x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
        straddle = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        hit ^= (np.count_nonzero(straddle & (px < xcross), axis=1) % 2).astype(bool)
    return hit


def fill_coverage(loops: list[np.ndarray], size: int, ss: int = SUPERSAMPLE) -> np.ndarray:
    """Fraction of each pixel covered by the filled loops, (size, size)."""
    return _downsample(inside(_sample_grid(size, ss), loops).astype(np.float64), size, ss)


def segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest of the segments a[i]-b[i]."""
    px, py = points[:, 0], points[:, 1]
    best = np.full(points.shape[0], np.inf)
    for (ax, ay), (bx, by) in zip(a, b):
        dx, dy = bx - ax, by - ay
        denom = max(dx * dx + dy * dy, 1e-18)
        t = np.clip(((px - ax) * dx + (py - ay) * dy) / denom, 0.0, 1.0)
        ex, ey = px - ax - t * dx, py - ay - t * dy
        np.minimum(best, ex * ex + ey * ey, out=best)
    return np.sqrt(best)


def stroke_coverage(paths: list[np.ndarray], width: float, size: int, closed: bool = True,
                    ss: int = SUPERSAMPLE) -> np.ndarray:
    """Coverage of strokes of ``width`` (canvas fraction) along the paths."""
    pts = _sample_grid(size, ss)
    a = np.concatenate([p if closed else p[:-1] for p in paths])
    b = np.concatenate([np.roll(p, -1, axis=0) if closed else p[1:] for p in paths])
    lo = np.minimum(a.min(axis=0), b.min(axis=0)) - width
    hi = np.maximum(a.max(axis=0), b.max(axis=0)) + width
    near = np.all((pts >= lo) & (pts <= hi), axis=1)
    hit = np.zeros(pts.shape[0])
    hit[near] = segment_distance(pts[near], a, b) <= width / 2
    return _downsample(hit, size, ss)


def simplify(loop: np.ndarray, tol: float) -> np.ndarray:
    """Douglas-Peucker on a closed loop; never adds vertices."""
    if len(loop) <= 3:
        return loop.copy()
    far = int(np.argmax(np.linalg.norm(loop - loop[0], axis=1)))
    halves = (loop[:far + 1], np.concatenate([loop[far:], loop[:1]]))
    result = np.concatenate([_dp(part, tol)[:-1] for part in halves])
    return result if len(result) >= 3 else loop[[0, len(loop) // 3, 2 * len(loop) // 3]]


def _dp(pts: np.ndarray, tol: float) -> np.ndarray:
    if len(pts) <= 2:
        return pts
    a, b = pts[0], pts[-1]
    ab = b - a
    norm = np.linalg.norm(ab)
    rel = pts[1:-1] - a
    if norm == 0:
        dist = np.linalg.norm(rel, axis=1)
    else:
        dist = np.abs(ab[0] * rel[:, 1] - ab[1] * rel[:, 0]) / norm
    i = int(np.argmax(dist))
    if dist[i] <= tol:
        return np.stack([a, b])
    left = _dp(pts[:i + 2], tol)
    right = _dp(pts[i + 1:], tol)
    return np.concatenate([left[:-1], right])
