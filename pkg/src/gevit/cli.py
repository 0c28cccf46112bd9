"""gevit generate | train | evaluate | report."""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import checkpoint
from .config import ConfigError, ExperimentConfig
from .evaluation import (accuracy, corruption_report, cue_conflict_scores, format_table, with_gap,
                         write_jsonl)
from .forge.corpus import build_corpus, parse_suite, suite_file_name
from .forge.dataset import NO_LABEL, DatasetFormatError, read_dataset
from .forge.render import ShiftError
from .tensor import ContractError
from .training.loop import NumericalFailure, build_model, train, warm_start, write_trace_csv

EXIT_OK, EXIT_USAGE, EXIT_CONFLICT, EXIT_NUMERIC = 0, 1, 2, 3
CHECKPOINT = "model.gevit"


class OutputConflict(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def blob_hash(path) -> str:
    """git-style content hash (sha1 over 'blob <len>\\0' + bytes)."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _claim(paths: list[Path], force: bool) -> None:
    taken = [str(p) for p in paths if p.exists()]
    if taken and not force:
        raise OutputConflict(f"refusing to overwrite {', '.join(taken)} (use --force)")


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = args.out or cfg.out
    if not out:
        raise ConfigError("no output directory: pass --out or set out = ... in the config")
    return Path(out)


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    return cfg.with_seed(args.seed) if getattr(args, "seed", None) is not None else cfg


def _manifest(corpus: Path) -> list[dict]:
    path = corpus / "manifest.json"
    if not path.exists():
        raise ConfigError(f"{corpus} has no manifest.json; run `gevit generate` first")
    return json.loads(path.read_text())


def _dataset(corpus: Path, stem: str):
    path = corpus / f"{stem}.shft"
    if not path.exists():
        raise ConfigError(f"dataset {stem!r} not found in {corpus}")
    return read_dataset(path)


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    cfg = _load_config(args)
    if args.suites:
        cfg.data["suite"] = args.suites
    out = _out_dir(args, cfg)
    _claim([out / "manifest.json"], args.force)
    started = time.time()
    manifest = build_corpus(cfg.corpus_config(), out)
    _write_json(out / "generate.json", {"command": "generate", "config": cfg.echo(), "config_text": cfg.text,
                                        "wall_time_s": round(time.time() - started, 3),
                                        "files": len(manifest)})
    print(f"wrote {len(manifest)} datasets to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    cfg.require_paths("data.corpus")
    if cfg.model.get("init"):
        cfg.require_paths("model.init")
    out = _out_dir(args, cfg)
    _claim([out / CHECKPOINT, out / "trace.csv"], args.force)
    corpus = Path(cfg.data["corpus"])
    _manifest(corpus)
    tcfg = cfg.trainer_config()
    source = _dataset(corpus, cfg.data.get("source", "train"))
    target_name = cfg.data.get("target", "target_train")
    if not (corpus / f"{target_name}.shft").exists() and tcfg.method == "ERM" and "target" not in cfg.data:
        target_name = "iid_val"   # ERM never reads target pixels for gradients
    target = _dataset(corpus, target_name)

    model = build_model(cfg.vit_config(), tcfg.method, cfg.seed)
    if cfg.model.get("init"):
        warm_start(model, checkpoint.load(cfg.model["init"]))
    started = time.time()
    try:
        result = train(model, source, target, tcfg)
    except NumericalFailure as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out.mkdir(parents=True, exist_ok=True)
    checkpoint.save(result.model, out / CHECKPOINT)
    write_trace_csv(result.trace, out / "trace.csv")
    inputs = {"manifest.json": blob_hash(corpus / "manifest.json"),
              f"{source.name or 'source'}.shft": blob_hash(corpus / f"{cfg.data.get('source', 'train')}.shft"),
              f"{target_name}.shft": blob_hash(corpus / f"{target_name}.shft")}
    if cfg.model.get("init"):
        inputs["init"] = blob_hash(cfg.model["init"])
    final = result.final
    _write_json(out / "run.json", {
        "command": "train", "method": tcfg.method, "seed": cfg.seed, "num_classes": model.cfg.num_classes,
        "config": cfg.echo(), "config_text": cfg.text, "inputs": inputs,
        "checkpoint": blob_hash(out / CHECKPOINT), "wall_time_s": round(time.time() - started, 3),
        "final": {k: final[k] for k in ("step", "l_cls", "src_acc", "tgt_acc")}})
    print(f"{tcfg.method} seed {cfg.seed}: {tcfg.steps} steps, src_acc {final['src_acc']:.4f}, "
          f"checkpoint {out / CHECKPOINT}")
    return EXIT_OK


def _suite_names(spec: str, manifest: list[dict]) -> list[str]:
    stems = [Path(m["file"]).stem for m in manifest]
    if spec in ("", "all"):
        return [s for s in stems if s not in ("train", "target_train")]
    names = []
    for item in (s.strip() for s in spec.split(",")):
        if item in stems:
            names.append(item)
        else:
            try:
                names += [suite_file_name(s) for s in parse_suite(item)]
            except (ShiftError, IndexError, ValueError) as exc:
                raise ConfigError(f"unknown suite {item!r}") from exc
    missing = [n for n in names if n not in stems]
    if missing:
        raise ConfigError(f"suites not in corpus: {', '.join(missing)}")
    return names


def metrics_name(window) -> str:
    if window is None:
        return "metrics"
    return f"metrics-window{int(window) if float(window).is_integer() else window}"


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    cfg.require_paths("data.corpus")
    out = _out_dir(args, cfg)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / CHECKPOINT
    if not ckpt.exists():
        raise ConfigError(f"checkpoint {ckpt} not found")
    window = args.window if args.window is not None else cfg.eval.get("window")
    stem = metrics_name(window)
    _claim([out / f"{stem}.jsonl"], args.force)
    corpus = Path(cfg.data["corpus"])
    manifest = _manifest(corpus)
    names = _suite_names(args.suites if args.suites is not None else cfg.eval.get("suites", "all"), manifest)
    model = checkpoint.load(ckpt)

    iid_name = cfg.eval.get("iid", "iid_val")
    iid = accuracy(model, _dataset(corpus, iid_name), window, iid_name)
    records, corruptions = [], {}
    for name in names:
        ds = _dataset(corpus, name)
        ds.name = name
        if name == iid_name:
            records.append(with_gap(iid, iid))
            continue
        distinct = ds.texture_labels != NO_LABEL
        if distinct.all() and (ds.texture_labels != ds.shape_labels).all():
            rec = cue_conflict_scores(model, ds, window)
        else:
            rec = accuracy(model, ds, window, name)
        records.append(with_gap(rec, iid))
        if rec.corruption_type:
            corruptions[(rec.corruption_type, rec.severity)] = rec
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(records, out / f"{stem}.jsonl")
    table = format_table(records)
    if corruptions:
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = corruption_report(corruptions)
        table += f"\n\ncorruption mean over {len(rep.cells)} cells: {rep.mean:.4f}"
        if rep.missing:
            table += f" (absent: {', '.join(f'{t}/s{s}' for t, s in rep.missing)})"
    (out / f"{stem}.txt").write_text(table + "\n")
    _write_json(out / f"{stem}.json", {
        "command": "evaluate", "config": cfg.echo(), "window": window, "suites": names,
        "inputs": {"checkpoint": blob_hash(ckpt), "manifest.json": blob_hash(corpus / "manifest.json")}})
    print(table)
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import build_report, write_report
    out = Path(args.out) if args.out else None
    if out is None:
        raise ConfigError("report needs --out")
    _claim([out / "report.csv"], args.force)
    report = build_report([Path(r) for r in args.runs], metrics=args.metrics)
    write_report(report, out)
    print(report.table())
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gevit", description="Shift-benchmark laboratory for generalization-enhanced ViTs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="flat key=value experiment config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (overrides `out` in the config)")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")

    p = sub.add_parser("generate", help="render a corpus and its manifest")
    common(p)
    p.add_argument("--suites", help="comma-separated shift suites, e.g. corruption/contrast,style/sketch_like")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one method; writes checkpoint, trace and run metadata")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on corpus suites")
    common(p)
    p.add_argument("--checkpoint", help="checkpoint to score (default: <out>/model.gevit)")
    p.add_argument("--window", type=float, help="test-time attention window radius in patches")
    p.add_argument("--suites", help="comma-separated dataset names or shift suites (default: all)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="merge run directories into comparison tables and figures")
    p.add_argument("runs", nargs="+", help="run directories holding run.json and metrics.jsonl")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.add_argument("--metrics", default="metrics", help="metrics file stem to merge (default: metrics)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OutputConflict as exc:
        print(f"gevit: {exc}", file=sys.stderr)
        return EXIT_CONFLICT
    except NumericalFailure as exc:
        print(f"gevit: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ContractError, ShiftError, DatasetFormatError, checkpoint.CheckpointError,
            OSError) as exc:
        print(f"gevit: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
