"""Cue specifications, deterministic rendering, and the shift transforms.

Every random choice is drawn from a generator seeded by ``(spec.seed, stream)``
with one stream per cue, so changing one cue never perturbs another.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from . import patterns
from .dataset import NO_LABEL, VARIANTS
from .geometry import fill_coverage, placed_loops, simplify, stroke_coverage

IMAGE_SIZE = 32
CHANNELS = 3
BACKGROUND_POOL = 16
CONTOUR_WIDTH = 2.0      # pixels
SKETCH_WIDTH = 1.4
SKETCH_JITTER = 0.4
QUICKDRAW_WIDTH = 1.2
QUICKDRAW_TOL = 0.8
STYLES = ("real",) + VARIANTS["style"]

_GEOMETRY, _TEXTURE, _BACKGROUND, _STROKE, _SHIFT = range(5)


class ShiftError(ValueError):
    pass


@dataclass(frozen=True)
class CueSpec:
    shape_class: int
    texture_class: int
    background_class: int | None     # None: blank (zero) backdrop
    color_jitter: float = 0.0
    seed: int = 0
    background_variant: int = 0      # member of the class's backdrop pool
    num_classes: int = 9

    def __post_init__(self):
        for name in ("shape_class", "texture_class"):
            if not 0 <= getattr(self, name) < self.num_classes:
                raise ShiftError(f"{name} outside [0, {self.num_classes})")
        if self.background_class is not None and not 0 <= self.background_class < self.num_classes:
            raise ShiftError(f"background_class outside [0, {self.num_classes})")
        if not 0.0 <= self.color_jitter <= 1.0:
            raise ShiftError("color_jitter must lie in [0, 1]")

    @property
    def clean(self) -> bool:
        return self.shape_class == self.texture_class == self.background_class

    def rng(self, stream: int, *extra: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream, *extra])


@dataclass(frozen=True)
class ShiftSpec:
    family: str
    variant: str
    severity: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.family not in VARIANTS or self.variant not in VARIANTS[self.family]:
            raise ShiftError(f"unknown shift {self.family}/{self.variant}")
        if (self.family == "corruption") != (self.severity != 0):
            raise ShiftError("severity is set for corruption shifts and only for them")
        if self.family == "corruption" and not 1 <= self.severity <= 5:
            raise ShiftError(f"severity must be 1..5, got {self.severity}")


@dataclass
class Example:
    image: np.ndarray               # (C, H, W) float32 in [0, 1]
    cue: CueSpec
    domain: str = "source"
    family: str = "clean"
    variant: str = "clean"
    severity: int = 0
    has_texture: bool = True

    @property
    def label(self) -> int:
        return self.cue.shape_class

    @property
    def texture_label(self) -> int:
        return self.cue.texture_class if self.has_texture else NO_LABEL

    @property
    def background_label(self) -> int:
        return NO_LABEL if self.cue.background_class is None else self.cue.background_class


def shape_loops(spec: CueSpec) -> list[np.ndarray]:
    return placed_loops(spec.shape_class, spec.rng(_GEOMETRY))


def foreground_coverage(spec: CueSpec, size: int = IMAGE_SIZE) -> np.ndarray:
    """Anti-aliased silhouette coverage in [0, 1], shape (size, size)."""
    return fill_coverage(shape_loops(spec), size)


def _backdrop(spec: CueSpec, size: int) -> np.ndarray:
    if spec.background_class is None:
        return np.zeros((CHANNELS, size, size))
    rng = spec.rng(_BACKGROUND, spec.background_class, spec.background_variant)
    return patterns.background_field(spec.background_class, size, rng, spec.color_jitter)


def _paper(size: int) -> np.ndarray:
    return np.full((CHANNELS, size, size), patterns.SKETCH_PAPER)


def _ink(canvas: np.ndarray, coverage: np.ndarray, ink) -> np.ndarray:
    ink = np.broadcast_to(np.asarray(ink, dtype=np.float64).reshape(-1, 1, 1), canvas.shape)
    return canvas * (1.0 - coverage) + ink * coverage


def render(spec: CueSpec, style: str = "real", size: int = IMAGE_SIZE) -> Example:
    """Rasterize one example; a pure function of ``(spec, style)``."""
    if style not in STYLES:
        raise ShiftError(f"unknown style {style!r}")
    loops = shape_loops(spec)
    alpha = fill_coverage(loops, size)
    px = 1.0 / size
    if style == "real":
        tex = patterns.texture_field(spec.texture_class, size, spec.rng(_TEXTURE, spec.texture_class),
                                     spec.color_jitter)
        img = alpha * tex + (1.0 - alpha) * _backdrop(spec, size)
        img = _ink(img, stroke_coverage(loops, CONTOUR_WIDTH * px, size), patterns.CONTOUR_INK)
    elif style == "painting_like":
        fill = patterns.smooth_color_field(spec.texture_class, size, spec.rng(_TEXTURE, spec.texture_class),
                                           spec.color_jitter)
        soft = gaussian_filter(alpha, 0.8, mode="nearest")
        back = gaussian_filter(_backdrop(spec, size), (0, 1.5, 1.5), mode="nearest")
        img = soft * fill + (1.0 - soft) * back
    elif style == "sketch_like":
        rng = spec.rng(_STROKE)
        shaky = [loop + rng.normal(0.0, SKETCH_JITTER * px, size=loop.shape) for loop in loops]
        img = _ink(_paper(size), stroke_coverage(shaky, SKETCH_WIDTH * px, size), patterns.SKETCH_INK)
    else:
        simple = [simplify(loop, QUICKDRAW_TOL * px) for loop in loops]
        img = _ink(_paper(size), stroke_coverage(simple, QUICKDRAW_WIDTH * px, size), patterns.SKETCH_INK)
    family, variant = ("clean", "clean") if style == "real" else ("style", style)
    return Example(np.clip(img, 0.0, 1.0).astype(np.float32), spec, "source" if style == "real" else "target",
                   family, variant, 0, has_texture=style in ("real", "painting_like"))


def quickdraw_loops(spec: CueSpec, size: int = IMAGE_SIZE) -> list[np.ndarray]:
    return [simplify(loop, QUICKDRAW_TOL / size) for loop in shape_loops(spec)]


# ---------------------------------------------------------------- shift transforms

def background_shift(spec: CueSpec, variant: str) -> CueSpec:
    """Swap the backdrop cue; every foreground cue is kept."""
    rng = spec.rng(_SHIFT, 1)
    if variant == "only_fg":
        return replace(spec, background_class=None)
    if variant == "mixed_same":
        other = (spec.background_variant + 1 + rng.integers(BACKGROUND_POOL - 1)) % BACKGROUND_POOL
        return replace(spec, background_class=spec.shape_class, background_variant=int(other))
    if variant == "mixed_rand":
        return replace(spec, background_class=int(rng.integers(spec.num_classes)),
                       background_variant=int(rng.integers(BACKGROUND_POOL)))
    if variant == "mixed_next":
        return replace(spec, background_class=(spec.shape_class + 1) % spec.num_classes,
                       background_variant=int(rng.integers(BACKGROUND_POOL)))
    raise ShiftError(f"unknown background variant {variant!r}")


def texture_shift(spec: CueSpec, mode: str, conflict_class: int | None = None) -> CueSpec:
    """Replace the fill texture (``stylize``) or set a conflicting one (``cue_conflict``)."""
    rng = spec.rng(_SHIFT, 2)
    if mode == "stylize":
        texture = int(rng.integers(spec.num_classes - 1))
        texture += texture >= spec.shape_class
        return replace(spec, texture_class=texture, background_class=int(rng.integers(spec.num_classes)),
                       background_variant=int(rng.integers(BACKGROUND_POOL)))
    if mode == "cue_conflict":
        if conflict_class is None:
            conflict_class = int(rng.integers(spec.num_classes - 1))
            conflict_class += conflict_class >= spec.shape_class
        if conflict_class == spec.shape_class:
            raise ShiftError("cue-conflict texture must differ from the shape class")
        return replace(spec, texture_class=conflict_class)
    raise ShiftError(f"unknown texture mode {mode!r}")


def style_shift(spec: CueSpec, domain: str) -> Example:
    if domain not in VARIANTS["style"]:
        raise ShiftError(f"unknown style domain {domain!r}")
    return render(spec, style=domain)
