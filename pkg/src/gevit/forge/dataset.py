"""In-memory example sets and the SHFT0001 file format."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"SHFT0001"
NO_LABEL = 0xFFFF

FAMILIES = ("clean", "background", "corruption", "texture", "style")
VARIANTS = {
    "clean": ("clean",),
    "background": ("only_fg", "mixed_same", "mixed_rand", "mixed_next"),
    "corruption": ("gaussian_noise", "impulse_noise", "gaussian_blur", "contrast", "pixelate"),
    "texture": ("stylize", "cue_conflict"),
    "style": ("painting_like", "sketch_like", "quickdraw_like"),
}
DOMAINS = ("source", "target")

_HEADER = struct.Struct("<IBBBH")
_RECORD = struct.Struct("<HHHBBBB")


class DatasetFormatError(ValueError):
    pass


def shift_code(family: str, variant: str) -> tuple[int, int]:
    return FAMILIES.index(family), VARIANTS[family].index(variant)


def shift_name(family_code: int, variant_code: int) -> tuple[str, str]:
    family = FAMILIES[family_code]
    return family, VARIANTS[family][variant_code]


@dataclass
class Dataset:
    images: np.ndarray            # (N, C, H, W) float32 in [0, 1]
    shape_labels: np.ndarray      # ground truth
    texture_labels: np.ndarray    # NO_LABEL where the image carries no texture
    background_labels: np.ndarray  # NO_LABEL where the background is blank
    domain: np.ndarray
    family: np.ndarray
    variant: np.ndarray
    severity: np.ndarray
    num_classes: int
    name: str = field(default="", compare=False)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        n = self.images.shape[0]
        for attr, dt in (("shape_labels", np.uint16), ("texture_labels", np.uint16),
                         ("background_labels", np.uint16), ("domain", np.uint8),
                         ("family", np.uint8), ("variant", np.uint8), ("severity", np.uint8)):
            arr = np.broadcast_to(np.asarray(getattr(self, attr), dtype=dt), (n,)).copy()
            setattr(self, attr, arr)

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def labels(self) -> np.ndarray:
        return self.shape_labels.astype(np.int64)

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx)
        return Dataset(self.images[idx], self.shape_labels[idx], self.texture_labels[idx],
                       self.background_labels[idx], self.domain[idx], self.family[idx],
                       self.variant[idx], self.severity[idx], self.num_classes, self.name)

    def equals(self, other: Dataset) -> bool:
        return (self.num_classes == other.num_classes
                and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in
                        ("images", "shape_labels", "texture_labels", "background_labels",
                         "domain", "family", "variant", "severity")))


def concat_datasets(parts: list[Dataset], name: str = "") -> Dataset:
    if len({p.num_classes for p in parts}) != 1:
        raise ValueError("cannot concatenate datasets with different class counts")
    cat = lambda a: np.concatenate([getattr(p, a) for p in parts])
    return Dataset(cat("images"), cat("shape_labels"), cat("texture_labels"), cat("background_labels"),
                   cat("domain"), cat("family"), cat("variant"), cat("severity"),
                   parts[0].num_classes, name)


def write_dataset(ds: Dataset, path) -> bytes:
    n, c, h, w = ds.images.shape
    if max(c, h, w) > 255:
        raise DatasetFormatError(f"{path}: image dims {c}x{h}x{w} exceed the u8 header fields")
    chunks = [MAGIC, _HEADER.pack(n, c, h, w, ds.num_classes)]
    pixels = ds.images.astype("<f4").reshape(n, -1)
    for i in range(n):
        chunks.append(_RECORD.pack(int(ds.shape_labels[i]), int(ds.texture_labels[i]),
                                   int(ds.background_labels[i]), int(ds.domain[i]),
                                   int(ds.family[i]), int(ds.variant[i]), int(ds.severity[i])))
        chunks.append(pixels[i].tobytes())
    blob = b"".join(chunks)
    try:
        Path(path).write_bytes(blob)
    except OSError as exc:
        raise OSError(f"writing dataset to {path}: {exc}") from exc
    return blob


def read_dataset(path) -> Dataset:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"reading dataset {path}: {exc}") from exc
    if buf[:8] != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {buf[:8]!r}")
    n, c, h, w, n_classes = _HEADER.unpack_from(buf, 8)
    pix = c * h * w
    stride = _RECORD.size + 4 * pix
    body = 8 + _HEADER.size
    if len(buf) != body + n * stride:
        raise DatasetFormatError(f"{path}: expected {n} records, file size {len(buf)} disagrees")
    dt = np.dtype([("shape", "<u2"), ("texture", "<u2"), ("background", "<u2"), ("domain", "u1"),
                   ("family", "u1"), ("variant", "u1"), ("severity", "u1"), ("pixels", "<f4", (pix,))])
    rec = np.frombuffer(buf, dtype=dt, count=n, offset=body)
    return Dataset(rec["pixels"].reshape(n, c, h, w), rec["shape"], rec["texture"], rec["background"],
                   rec["domain"], rec["family"], rec["variant"], rec["severity"], n_classes,
                   Path(path).stem)
