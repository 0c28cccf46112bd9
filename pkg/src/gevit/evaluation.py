"""OOD accuracy, IID/OOD gap, cue-conflict scores and corruption tables.

All accuracies are kept as integer counts and converted to float only when
reported, so every metric is an exact function of the predictions.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .forge.dataset import NO_LABEL, Dataset, shift_name
from .tensor import ContractError, no_grad

EVAL_BATCH = 128


@dataclass
class MetricsRecord:
    dataset: str
    n: int
    correct: int
    gap_vs: str | None = None
    gap: float | None = None
    shape_correct: int | None = None
    texture_correct: int | None = None
    corruption_type: str | None = None
    severity: int | None = None

    @property
    def accuracy(self) -> float:
        return float(self.fraction)

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.correct, self.n)

    @property
    def shape_accuracy(self) -> float | None:
        return None if self.shape_correct is None else self.shape_correct / self.n

    @property
    def texture_accuracy(self) -> float | None:
        return None if self.texture_correct is None else self.texture_correct / self.n

    def to_json(self) -> dict:
        return {"dataset": self.dataset, "n": self.n, "acc": self.accuracy, "gap_vs": self.gap_vs,
                "gap": self.gap, "shape_acc": self.shape_accuracy, "texture_acc": self.texture_accuracy,
                "corruption_type": self.corruption_type, "severity": self.severity}


def predict(model, images: np.ndarray, window: float | None = None,
            batch_size: int = EVAL_BATCH) -> np.ndarray:
    """Argmax class per image; ties go to the lowest class index."""
    out = []
    with no_grad():
        for start in range(0, len(images), batch_size):
            logits = model.logits(images[start:start + batch_size], window).data
            out.append(np.argmax(logits, axis=-1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def count_correct(predictions: np.ndarray, labels: np.ndarray) -> int:
    return int(np.count_nonzero(np.asarray(predictions) == np.asarray(labels)))


def record_from_predictions(name: str, predictions: np.ndarray, dataset: Dataset) -> MetricsRecord:
    if len(dataset) == 0:
        raise ContractError(f"accuracy of empty dataset {name!r}")
    rec = MetricsRecord(name, len(dataset), count_correct(predictions, dataset.labels))
    if dataset.family.size and np.all(dataset.family == dataset.family[0]):
        family, variant = shift_name(int(dataset.family[0]), int(dataset.variant[0]))
        if family == "corruption" and np.all(dataset.severity == dataset.severity[0]):
            rec.corruption_type, rec.severity = variant, int(dataset.severity[0])
    return rec


def _check_classes(model, dataset: Dataset) -> None:
    if model.cfg.num_classes != dataset.num_classes:
        raise ContractError(f"model has {model.cfg.num_classes} classes, dataset "
                            f"{dataset.name!r} has {dataset.num_classes}")


def accuracy(model, dataset: Dataset, window: float | None = None, name: str | None = None) -> MetricsRecord:
    """Fraction of examples whose argmax prediction equals the shape label."""
    _check_classes(model, dataset)
    if len(dataset) == 0:
        raise ContractError("accuracy of an empty dataset")
    return record_from_predictions(name or dataset.name, predict(model, dataset.images, window), dataset)


def generalization_gap(iid: MetricsRecord, ood: MetricsRecord) -> float:
    return float(iid.fraction - ood.fraction)


def with_gap(ood: MetricsRecord, iid: MetricsRecord) -> MetricsRecord:
    ood.gap_vs, ood.gap = iid.dataset, generalization_gap(iid, ood)
    return ood


def cue_conflict_counts(predictions: np.ndarray, dataset: Dataset) -> tuple[int, int]:
    tex = dataset.texture_labels
    if np.any(tex == NO_LABEL) or np.any(tex == dataset.shape_labels):
        raise ContractError(f"{dataset.name!r} lacks distinct texture labels; not a cue-conflict set")
    return count_correct(predictions, dataset.shape_labels), count_correct(predictions, tex)


def cue_conflict_scores(model, dataset: Dataset, window: float | None = None) -> MetricsRecord:
    _check_classes(model, dataset)
    preds = predict(model, dataset.images, window)
    rec = record_from_predictions(dataset.name, preds, dataset)
    rec.shape_correct, rec.texture_correct = cue_conflict_counts(preds, dataset)
    return rec


@dataclass
class CorruptionReport:
    cells: dict[tuple[str, int], MetricsRecord]
    missing: list[tuple[str, int]] = field(default_factory=list)

    @property
    def mean(self) -> float:
        accs = [self.cells[k].fraction for k in sorted(self.cells)]
        return float(sum(accs, Fraction(0)) / len(accs))

    def per_type(self) -> dict[str, float]:
        out = {}
        for ctype in sorted({k[0] for k in self.cells}):
            accs = [r.fraction for (t, _), r in sorted(self.cells.items()) if t == ctype]
            out[ctype] = float(sum(accs, Fraction(0)) / len(accs))
        return out


def corruption_report(records: dict[tuple[str, int], MetricsRecord],
                      severities=(1, 2, 3, 4, 5)) -> CorruptionReport:
    """Unweighted mean over every present (type, severity) cell.

    Missing cells of a type that is present are listed and excluded.
    """
    if not records:
        raise ContractError("corruption report needs at least one suite")
    types = sorted({t for t, _ in records})
    missing = [(t, s) for t in types for s in severities if (t, s) not in records]
    if missing:
        warnings.warn(f"corruption cells absent from report: {missing}", stacklevel=2)
    return CorruptionReport(dict(records), missing)


def evaluate_corruptions(model, suites: dict[tuple[str, int], Dataset],
                         window: float | None = None) -> CorruptionReport:
    return corruption_report({key: accuracy(model, ds, window) for key, ds in suites.items()})


def write_jsonl(records: list[MetricsRecord], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def format_table(records: list[MetricsRecord]) -> str:
    header = ("dataset", "n", "acc", "gap", "shape_acc", "texture_acc")
    rows = [header]
    fmt = lambda v: "" if v is None else f"{v:.4f}"
    for r in records:
        rows.append((r.dataset, str(r.n), fmt(r.accuracy), fmt(r.gap), fmt(r.shape_accuracy),
                     fmt(r.texture_accuracy)))
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in rows]
    return "\n".join(lines)
