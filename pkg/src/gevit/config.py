"""Flat ``key = value`` experiment configs with model./trainer./data./eval. blocks."""
from __future__ import annotations

from dataclasses import MISSING, dataclass, field, fields
from pathlib import Path

from .forge.corpus import CorpusConfig, parse_suite
from .training.loop import TrainerConfig
from .vit import ViTConfig

CORPUS_KEYS = ("n_per_class", "split", "seed", "num_classes", "texture_correlation",
               "background_correlation", "color_jitter", "target_style", "target_per_class")
BLOCK_KEYS = {
    "model": tuple(f.name for f in fields(ViTConfig)) + ("init",),
    "trainer": tuple(n for n in TrainerConfig.field_names() if n != "seed"),
    "data": ("corpus", "source", "target", "suite") + CORPUS_KEYS,
    "eval": ("suites", "iid", "window"),
}
TOP_KEYS = ("seed", "out")


class ConfigError(ValueError):
    pass


def _defaults(cls) -> dict:
    out = {}
    for f in fields(cls):
        if f.default is not MISSING:
            out[f.name] = f.default
        elif f.default_factory is not MISSING:
            out[f.name] = f.default_factory()
    return out


def _coerce(key: str, text: str, default):
    """Parse ``text`` into the type of ``default``."""
    if text.lower() in ("none", "null", "") and not isinstance(default, str):
        return None
    try:
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0"):
                raise ValueError(text)
            return text.lower() in ("true", "1")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple) and key.endswith("split"):
            return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r} as {type(default).__name__}") from exc
    return text


def parse_text(text: str, origin: str = "<config>") -> dict[str, str]:
    """Raw ``{dotted.key: value}`` pairs; '#' starts a comment."""
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in pairs:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        block, _, name = key.partition(".")
        if not (key in TOP_KEYS or (block in BLOCK_KEYS and name in BLOCK_KEYS[block])):
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        pairs[key] = value
    return pairs


@dataclass
class ExperimentConfig:
    seed: int
    out: str | None = None
    model: dict = field(default_factory=dict)
    trainer: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    text: str = ""

    @classmethod
    def from_pairs(cls, pairs: dict[str, str], text: str = "") -> ExperimentConfig:
        if "seed" not in pairs:
            raise ConfigError("seed is mandatory")
        blocks: dict[str, dict] = {b: {} for b in BLOCK_KEYS}
        vit_d, tr_d = _defaults(ViTConfig), _defaults(TrainerConfig)
        corpus_d = _defaults(CorpusConfig)
        for key, value in pairs.items():
            if key in TOP_KEYS:
                continue
            block, name = key.split(".", 1)
            default = {"model": vit_d, "trainer": tr_d}.get(block, {}).get(name)
            if block == "data" and name in corpus_d:
                default = corpus_d[name] if name != "target_style" else ""
            if block == "eval" and name == "window":
                default = 0.0
            blocks[block][name] = _coerce(key, value, "" if default is None else default)
        cfg = cls(seed=_coerce("seed", pairs["seed"], 0), out=pairs.get("out"), text=text, **blocks)
        cfg.vit_config()
        cfg.trainer_config()
        cfg.corpus_config()
        return cfg

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_pairs(parse_text(text, str(path)), text)

    def with_seed(self, seed: int) -> ExperimentConfig:
        return ExperimentConfig(seed, self.out, dict(self.model), dict(self.trainer), dict(self.data),
                                dict(self.eval), self.text)

    def vit_config(self) -> ViTConfig:
        kw = {k: v for k, v in self.model.items() if k != "init"}
        kw.setdefault("classifier", "linear")
        try:
            return ViTConfig(**kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def trainer_config(self) -> TrainerConfig:
        try:
            return TrainerConfig(seed=self.seed, **self.trainer)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        except RuntimeError as exc:
            raise ConfigError(str(exc)) from exc

    def corpus_config(self) -> CorpusConfig:
        kw = {k: v for k, v in self.data.items() if k in CORPUS_KEYS}
        kw.setdefault("seed", self.seed)
        if not kw.get("target_style"):
            kw["target_style"] = None
        try:
            return CorpusConfig(suite=parse_suite(self.data.get("suite", "all")), **kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def require_paths(self, *keys: str) -> None:
        """Every named ``block.key`` must be set and exist on disk."""
        for key in keys:
            block, name = key.split(".", 1)
            value = getattr(self, block).get(name)
            if not value:
                raise ConfigError(f"{key} is required for this command")
            if not Path(value).exists():
                raise ConfigError(f"{key} = {value}: no such file or directory")

    def echo(self) -> dict:
        out = {"seed": self.seed, "out": self.out}
        for block in BLOCK_KEYS:
            for k, v in sorted(getattr(self, block).items()):
                out[f"{block}.{k}"] = list(v) if isinstance(v, tuple) else v
        return out
