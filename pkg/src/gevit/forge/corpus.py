"""Train / IID-val / OOD corpus construction and manifests."""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .corrupt import CORRUPTIONS, corrupt
from .dataset import DOMAINS, VARIANTS, Dataset, read_dataset, shift_code, shift_name, write_dataset
from .render import (BACKGROUND_POOL, CueSpec, Example, ShiftError, ShiftSpec, background_shift, render,
                     texture_shift)

SPLITS = {"train": 0, "iid_val": 1, "ood": 2, "target_train": 3}


def default_suite() -> tuple[ShiftSpec, ...]:
    suite = [ShiftSpec("background", v) for v in VARIANTS["background"]]
    suite += [ShiftSpec("corruption", c, s) for c in CORRUPTIONS for s in range(1, 6)]
    suite += [ShiftSpec("texture", v) for v in VARIANTS["texture"]]
    suite += [ShiftSpec("style", v) for v in VARIANTS["style"]]
    return tuple(suite)


def parse_suite(text: str) -> tuple[ShiftSpec, ...]:
    """``all`` or comma-separated ``family/variant[/severity]`` items."""
    text = text.strip()
    if text in ("", "all"):
        return default_suite()
    if text == "none":
        return ()
    out = []
    for item in text.split(","):
        parts = item.strip().split("/")
        if parts[0] == "corruption" and len(parts) == 2:
            out += [ShiftSpec("corruption", parts[1], s) for s in range(1, 6)]
        else:
            out.append(ShiftSpec(parts[0], parts[1], int(parts[2]) if len(parts) > 2 else 0))
    return tuple(out)


def suite_file_name(shift: ShiftSpec) -> str:
    sev = f"-s{shift.severity}" if shift.family == "corruption" else ""
    return f"{shift.family}-{shift.variant}{sev}"


@dataclass
class CorpusConfig:
    n_per_class: int = 100
    split: tuple[float, float, float] = (0.7, 0.15, 0.15)
    suite: tuple[ShiftSpec, ...] = field(default_factory=default_suite)
    seed: int = 0
    num_classes: int = 9
    texture_correlation: float = 1.0
    background_correlation: float = 1.0
    color_jitter: float = 0.0
    target_style: str | None = None
    target_per_class: int = 0

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ShiftError(f"split ratios must be nonnegative and sum to 1, got {self.split}")
        if self.target_style is not None and self.target_style not in VARIANTS["style"]:
            raise ShiftError(f"target_style must be one of {VARIANTS['style']}")

    def split_counts(self) -> dict[str, int]:
        n_train = int(round(self.split[0] * self.n_per_class))
        n_val = int(round(self.split[1] * self.n_per_class))
        return {"train": n_train, "iid_val": n_val, "ood": self.n_per_class - n_train - n_val}


def example_seed(base_seed: int, split: str, index: int) -> int:
    """64-bit seed determined by (base seed, split, index) alone."""
    ss = np.random.SeedSequence([base_seed, SPLITS[split], index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def draw_spec(cfg: CorpusConfig, split: str, cls: int, index: int) -> CueSpec:
    seed = example_seed(cfg.seed, split, index)
    rng = np.random.default_rng([seed, 7])
    tex = cls if rng.uniform() < cfg.texture_correlation else int(rng.integers(cfg.num_classes))
    bg = cls if rng.uniform() < cfg.background_correlation else int(rng.integers(cfg.num_classes))
    return CueSpec(cls, tex, bg, cfg.color_jitter, seed, int(rng.integers(BACKGROUND_POOL)),
                   cfg.num_classes)


def split_specs(cfg: CorpusConfig, split: str, per_class: int) -> list[CueSpec]:
    return [draw_spec(cfg, split, c, c * per_class + i)
            for c in range(cfg.num_classes) for i in range(per_class)]


def apply_shift(spec: CueSpec, shift: ShiftSpec | None) -> Example:
    if shift is None:
        return render(spec)
    if shift.family == "background":
        ex = render(background_shift(spec, shift.variant))
    elif shift.family == "texture":
        ex = render(texture_shift(spec, shift.variant))
    elif shift.family == "style":
        return render(spec, style=shift.variant)
    else:
        return corrupted(render(spec), shift)
    ex.domain, ex.family, ex.variant, ex.severity = "target", shift.family, shift.variant, shift.severity
    return ex


def corrupted(clean: Example, shift: ShiftSpec) -> Example:
    return replace(clean, image=corrupt(clean.image, shift.variant, shift.severity, clean.cue.seed),
                   domain="target", family=shift.family, variant=shift.variant, severity=shift.severity)


def _render_job(job):
    spec, shift = job
    return apply_shift(spec, shift)


def examples_to_dataset(examples: list[Example], num_classes: int, name: str = "") -> Dataset:
    codes = [shift_code(e.family, e.variant) for e in examples]
    return Dataset(np.stack([e.image for e in examples]),
                   [e.label for e in examples], [e.texture_label for e in examples],
                   [e.background_label for e in examples], [DOMAINS.index(e.domain) for e in examples],
                   [c[0] for c in codes], [c[1] for c in codes], [e.severity for e in examples],
                   num_classes, name)


def worker_count() -> int:
    return max(1, int(os.environ.get("GEVIT_THREADS", "1")))


def _render_all(jobs, workers: int) -> list[Example]:
    if workers <= 1 or len(jobs) < 64:
        return [_render_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_render_job, jobs, chunksize=32))


def generate_corpus(cfg: CorpusConfig, workers: int | None = None) -> dict[str, Dataset]:
    """All splits of the corpus, keyed by file stem. Pure function of ``cfg``."""
    workers = worker_count() if workers is None else workers
    counts = cfg.split_counts()
    specs = {split: split_specs(cfg, split, n) for split, n in counts.items()}
    out: dict[str, Dataset] = {}
    for split in ("train", "iid_val"):
        out[split] = examples_to_dataset(_render_all([(s, None) for s in specs[split]], workers),
                                         cfg.num_classes, split)
    if cfg.target_style and cfg.target_per_class:
        tspecs = split_specs(cfg, "target_train", cfg.target_per_class)
        out["target_train"] = examples_to_dataset(
            _render_all([(s, ShiftSpec("style", cfg.target_style)) for s in tspecs], workers),
            cfg.num_classes, "target_train")
    base = None
    for shift in cfg.suite:
        name = suite_file_name(shift)
        if shift.family == "corruption":
            # corruptions act on the clean render, so rasterize the OOD split once
            if base is None:
                base = _render_all([(s, None) for s in specs["ood"]], workers)
            examples = [corrupted(ex, shift) for ex in base]
        else:
            examples = _render_all([(s, shift) for s in specs["ood"]], workers)
        out[name] = examples_to_dataset(examples, cfg.num_classes, name)
    return out


def write_corpus(corpus: dict[str, Dataset], out_dir) -> list[dict]:
    """Write ``<name>.shft`` files and ``manifest.json``; returns the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = []
    for name, ds in corpus.items():
        blob = write_dataset(ds, out_dir / f"{name}.shft")
        fam = int(ds.family[0]) if len(ds) else 0
        family, variant = shift_name(fam, int(ds.variant[0]) if len(ds) else 0)
        manifest.append({"file": f"{name}.shft", "family": family, "variant": variant,
                         "severity": int(ds.severity[0]) if len(ds) else 0, "count": len(ds),
                         "sha256": hashlib.sha256(blob).hexdigest()})
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest


def build_corpus(cfg: CorpusConfig, out_dir, workers: int | None = None) -> list[dict]:
    return write_corpus(generate_corpus(cfg, workers), out_dir)


def load_corpus(out_dir) -> dict[str, Dataset]:
    manifest = json.loads((Path(out_dir) / "manifest.json").read_text())
    return {Path(m["file"]).stem: read_dataset(Path(out_dir) / m["file"]) for m in manifest}
