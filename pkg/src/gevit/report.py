"""Merge run directories into a methods x suites comparison with an Avg column."""
from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .config import ConfigError
from .tensor import ContractError

AVG = "Avg"


@dataclass
class Run:
    path: Path
    method: str
    seed: int
    num_classes: int
    acc: dict[str, float]

    @property
    def avg(self) -> float:
        return sum(self.acc.values()) / len(self.acc)


def load_run(path: Path, metrics: str = "metrics") -> Run:
    meta_path, metrics_path = path / "run.json", path / f"{metrics}.jsonl"
    for p in (meta_path, metrics_path):
        if not p.exists():
            raise ConfigError(f"{path} is not a complete run directory: missing {p.name}")
    meta = json.loads(meta_path.read_text())
    acc = {}
    for line in metrics_path.read_text().splitlines():
        if line.strip():
            rec = json.loads(line)
            acc[rec["dataset"]] = rec["acc"]
    if not acc:
        raise ConfigError(f"{metrics_path} holds no records")
    return Run(path, meta["method"], int(meta["seed"]), int(meta["num_classes"]), acc)


def mean_std(values: list[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    return statistics.fmean(values), statistics.stdev(values) if len(values) > 1 else 0.0


@dataclass
class Report:
    runs: list[Run]
    methods: list[str] = field(default_factory=list)
    suites: list[str] = field(default_factory=list)

    def __post_init__(self):
        for r in self.runs:
            if r.method not in self.methods:
                self.methods.append(r.method)
            for s in r.acc:
                if s not in self.suites:
                    self.suites.append(s)

    def values(self, method: str, suite: str) -> list[float]:
        runs = [r for r in self.runs if r.method == method]
        if suite == AVG:
            return [r.avg for r in runs]
        return [r.acc[suite] for r in runs if suite in r.acc]

    def rows(self) -> list[dict]:
        out = []
        for m in self.methods:
            for s in self.suites + [AVG]:
                vals = self.values(m, s)
                if vals:
                    mu, sd = mean_std(vals)
                    out.append({"method": m, "suite": s, "n_seeds": len(vals), "mean": mu, "std": sd})
        return out

    def table(self) -> str:
        multi = any(len(self.values(m, AVG)) > 1 for m in self.methods)
        header = ["method"] + self.suites + [AVG]
        body = []
        for m in self.methods:
            row = [m]
            for s in self.suites + [AVG]:
                vals = self.values(m, s)
                if not vals:
                    row.append("")
                    continue
                mu, sd = mean_std(vals)
                row.append(f"{100 * mu:.2f}±{100 * sd:.2f}" if multi else f"{100 * mu:.2f}")
            body.append(row)
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
        fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
        return "\n".join([fmt(header)] + [fmt(r) for r in body])


def build_report(run_dirs: list[Path], metrics: str = "metrics") -> Report:
    if not run_dirs:
        raise ConfigError("report needs at least one run directory")
    runs = [load_run(Path(p), metrics) for p in run_dirs]
    classes = {r.num_classes for r in runs}
    if len(classes) > 1:
        raise ContractError(f"runs disagree on the class count ({sorted(classes)}); refusing to merge")
    seen = set()
    for r in runs:
        if (r.method, r.seed) in seen:
            raise ConfigError(f"two runs of {r.method} with seed {r.seed}")
        seen.add((r.method, r.seed))
    return Report(runs)


def plot_report(report: Report, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    cols = report.suites + [AVG]
    width = 0.8 / len(report.methods)
    fig, ax = plt.subplots(figsize=(max(6.0, 0.35 * len(cols) * len(report.methods) + 2), 4.0))
    x = np.arange(len(cols))
    for i, m in enumerate(report.methods):
        stats = [mean_std(v) if (v := report.values(m, s)) else (np.nan, 0.0) for s in cols]
        ax.bar(x + (i - (len(report.methods) - 1) / 2) * width, [100 * s[0] for s in stats], width,
               yerr=[100 * s[1] for s in stats], label=m, capsize=2)
    ax.set_xticks(x, cols, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 100)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(report: Report, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["method", "suite", "n_seeds", "mean", "std"])
        writer.writeheader()
        for row in report.rows():
            writer.writerow({**row, "mean": repr(row["mean"]), "std": repr(row["std"])})
    (out / "report.txt").write_text(report.table() + "\n")
    plot_report(report, out / "report.png")
