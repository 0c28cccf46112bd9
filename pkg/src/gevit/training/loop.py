"""ERM and the three generalization-enhanced training schemes."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .. import tensor as T
from ..evaluation import accuracy
from ..forge.dataset import Dataset
from ..tensor import ContractError, Tensor, backward, no_grad
from ..vit import ViTConfig, ViTModel
from . import losses
from .optim import SGD, ParamGroup
from .prototypes import MemoryBank, Prototypes, kmeans
from .schedules import SCHEDULES, coefficient

METHODS = ("ERM", "T-ADV", "T-MME", "T-SSL")
CLASSIFIER_FOR = {"ERM": "linear", "T-ADV": "linear", "T-MME": "cosine", "T-SSL": "cosine"}
# the clamped log keeps a diverged loss finite, so blow-up is caught in the weights
# (healthy runs stay near unit scale)
DIVERGED_WEIGHT = 1e4
TRACE_FIELDS = ("step", "l_cls", "l_adv", "l_e", "l_is", "l_mim", "lambda_adv", "lambda_e",
                "lambda_is", "src_acc", "tgt_acc")


class NumericalFailure(RuntimeError):
    def __init__(self, step: int, last_finite: dict | None):
        self.step, self.last_finite = step, last_finite
        super().__init__(f"non-finite loss or diverged weights at step {step}; last finite losses: {last_finite}")


@dataclass
class TrainerConfig:
    method: str = "ERM"
    steps: int = 600
    batch_source: int = 32
    batch_target: int = 32
    lr_encoder: float = 0.01
    lr_head: float = 0.1
    lr_domain: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    lambda_adv: float = 0.1
    lambda_e: float = 0.1
    lambda_is: float = 0.1
    lambda_mim: float = 0.5
    phi: float = 0.1
    k: int = 0                  # 0 -> number of classes
    bank_momentum: float = 0.5
    proto_refresh: int = 50
    kmeans_iters: int = 10
    schedule: str = "dann_adaptive"
    eval_every: int = 0         # 0 -> final step only
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ContractError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.schedule not in SCHEDULES:
            raise ContractError(f"schedule must be one of {SCHEDULES}")
        for name in ("lambda_adv", "lambda_e", "lambda_is", "lambda_mim", "lr_encoder", "lr_head",
                     "lr_domain", "momentum", "weight_decay"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be >= 0")
        if self.batch_source < 1 or self.batch_target < 1 or self.steps < 1:
            raise ContractError("steps and batch sizes must be >= 1")
        if self.phi <= 0 or self.k < 0 or not 0 <= self.bank_momentum < 1:
            raise ContractError("need phi > 0, k >= 0 and bank momentum in [0, 1)")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class TrainResult:
    model: ViTModel
    trace: list[dict] = field(default_factory=list)

    @property
    def final(self) -> dict:
        return self.trace[-1]


class EpochSampler:
    """Reshuffled passes over ``n`` indices; a batch never repeats an index."""

    def __init__(self, n: int, batch: int, rng: np.random.Generator):
        if batch > n:
            raise ContractError(f"batch of {batch} from only {n} examples")
        self.n, self.batch, self.rng = n, batch, rng
        self._order = rng.permutation(n)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos + self.batch > self.n:
            self._order, self._pos = self.rng.permutation(self.n), 0
        out = self._order[self._pos:self._pos + self.batch]
        self._pos += self.batch
        return out


def build_model(cfg: ViTConfig, method: str, seed: int = 0) -> ViTModel:
    """Model whose classifier head matches the method."""
    kwargs = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    kwargs["classifier"] = CLASSIFIER_FOR[method]
    return ViTModel(ViTConfig(**kwargs), seed=seed)


def warm_start(model: ViTModel, pretrained: ViTModel) -> ViTModel:
    """Copy a pretrained encoder (and label head) into ``model`` in place.

    A linear head seeds a cosine head through its per-class weight
    directions, so fine-tuning never starts from a random classifier.
    """
    if pretrained.cfg.num_classes != model.cfg.num_classes:
        raise ContractError("warm start across different class counts")
    src = pretrained.params
    for name, p in model.params.items():
        if name.startswith("enc."):
            if name not in src or src[name].shape != p.shape:
                raise ContractError(f"pretrained encoder lacks a matching {name}")
            p.data[...] = src[name].data
    if model.cfg.classifier == pretrained.cfg.classifier:
        prefix = f"head.{model.cfg.classifier}."
        for name, p in model.params.items():
            if name.startswith(prefix):
                p.data[...] = src[name].data
    elif model.cfg.classifier == "cosine":
        model.params["head.cosine.w"].data[...] = src["head.linear.w"].data.T
    else:
        model.params["head.linear.w"].data[...] = src["head.cosine.w"].data.T
    return model


def encode_all(model: ViTModel, images: np.ndarray, batch: int = 128) -> np.ndarray:
    with no_grad():
        return np.concatenate([model.encode(images[i:i + batch]).data
                               for i in range(0, len(images), batch)])


class _SSLState:
    def __init__(self, model: ViTModel, source: Dataset, target: Dataset, cfg: TrainerConfig):
        self.k = cfg.k or model.cfg.num_classes
        self.cfg = cfg
        self.banks = [MemoryBank(T.l2_normalize(Tensor(encode_all(model, ds.images))).data,
                                 cfg.bank_momentum) for ds in (source, target)]
        self.protos: list[Prototypes] = []

    def refresh(self, step: int) -> None:
        if step % self.cfg.proto_refresh == 0 or not self.protos:
            self.protos = [kmeans(bank.vectors, self.k, seed=self.cfg.seed * 100_003 + step + d,
                                  iters=self.cfg.kmeans_iters) for d, bank in enumerate(self.banks)]


def _optimizer(model: ViTModel, cfg: TrainerConfig) -> SGD:
    groups = [ParamGroup("encoder", model.encoder_params, cfg.lr_encoder),
              ParamGroup("classifier", model.classifier_params(), cfg.lr_head)]
    if cfg.method == "T-ADV":
        groups.append(ParamGroup("domain", model.domain_params(), cfg.lr_domain))
    return SGD(groups, cfg.momentum, cfg.weight_decay)


def train(model: ViTModel, source: Dataset, target: Dataset, cfg: TrainerConfig) -> TrainResult:
    """Run ``cfg.method`` on labeled ``source`` and unlabeled ``target`` examples.

    Target labels are never used for gradients; they only feed the tgt_acc
    monitoring column. Returns the trained model and one trace row per step.
    """
    if source.num_classes != target.num_classes or source.num_classes != model.cfg.num_classes:
        raise ContractError(f"class spaces differ: source {source.num_classes}, target "
                            f"{target.num_classes}, model {model.cfg.num_classes}")
    if model.cfg.classifier != CLASSIFIER_FOR[cfg.method]:
        raise ContractError(f"{cfg.method} needs a {CLASSIFIER_FOR[cfg.method]} classifier head")

    opt = _optimizer(model, cfg)
    src_sampler = EpochSampler(len(source), cfg.batch_source, np.random.default_rng([cfg.seed, 1]))
    tgt_sampler = EpochSampler(len(target), cfg.batch_target, np.random.default_rng([cfg.seed, 2]))
    ssl = _SSLState(model, source, target, cfg) if cfg.method == "T-SSL" else None
    src_y = source.labels
    result = TrainResult(model)
    last_finite = None

    step = 0
    try:
        with np.errstate(over="raise", invalid="raise"):
            for step in range(cfg.steps):
                p = step / cfg.steps
                si, ti = src_sampler.next(), tgt_sampler.next()
                row = dict.fromkeys(TRACE_FIELDS)
                row["step"] = step

                f_s = model.encode(source.images[si])
                l_cls = losses.loss_cls(model.classify(f_s), src_y[si])
                total = l_cls
                row["l_cls"] = l_cls.item()

                if cfg.method == "T-ADV":
                    lam = coefficient(cfg.schedule, p, cfg.lambda_adv)
                    f_t = model.encode(target.images[ti])
                    dom = T.concat([model.domain_head(T.grad_reverse(f_s, lam)),
                                    model.domain_head(T.grad_reverse(f_t, lam))], axis=0)
                    yd = np.concatenate([np.zeros(len(si), int), np.ones(len(ti), int)])
                    l_adv = losses.loss_adv(dom, yd)
                    total = total + l_adv
                    row["l_adv"], row["lambda_adv"] = l_adv.item(), lam

                elif cfg.method == "T-MME":
                    lam = coefficient(cfg.schedule, p, cfg.lambda_e)
                    f_t = model.encode(target.images[ti])
                    # reversal between encoder and head: W ascends the entropy, F descends it
                    l_e = losses.loss_entropy_target(model.cosine_head(T.grad_reverse(f_t, 1.0)))
                    total = total - l_e * lam
                    row["l_e"], row["lambda_e"] = l_e.item(), lam

                elif cfg.method == "T-SSL":
                    ssl.refresh(step)
                    lam = coefficient(cfg.schedule, p, cfg.lambda_is)
                    f_t = model.encode(target.images[ti])
                    z_s, z_t = T.l2_normalize(f_s), T.l2_normalize(f_t)
                    ps, pt = ssl.protos
                    l_is = losses.loss_is(z_s, ps.assignments[si], ps.centroids,
                                          z_t, pt.assignments[ti], pt.centroids, cfg.phi)
                    probs = T.softmax(model.cosine_head(T.concat([f_s, f_t], axis=0)))
                    l_mim = losses.loss_mim(probs)
                    total = total + l_is * lam + l_mim * cfg.lambda_mim
                    row["l_is"], row["l_mim"], row["lambda_is"] = l_is.item(), l_mim.item(), lam

                if not math.isfinite(total.item()):
                    raise NumericalFailure(step, last_finite)
                opt.zero_grad()
                backward(total)
                last_finite = {k: row[k] for k in ("l_cls", "l_adv", "l_e", "l_is", "l_mim") if row[k] is not None}
                opt.step()
                if max(np.abs(q.data).max() for q in model.params.values()) > DIVERGED_WEIGHT:
                    raise NumericalFailure(step, last_finite)
                if ssl is not None:
                    ssl.banks[0].update(si, z_s.data)
                    ssl.banks[1].update(ti, z_t.data)

                final = step == cfg.steps - 1
                if final or (cfg.eval_every and (step + 1) % cfg.eval_every == 0):
                    row["src_acc"] = accuracy(model, source).accuracy
                    row["tgt_acc"] = accuracy(model, target).accuracy
                result.trace.append(row)
    except FloatingPointError as exc:
        raise NumericalFailure(step, last_finite) from exc
    opt.zero_grad()
    return result


def write_trace_csv(trace: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_FIELDS)
        for row in trace:
            writer.writerow(["" if row[k] is None else repr(row[k]) for k in TRACE_FIELDS])


def read_trace_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (None if v == "" else (int(v) if k == "step" else float(v))) for k, v in r.items()}
            for r in rows]
