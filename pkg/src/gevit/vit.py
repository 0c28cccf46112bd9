"""Toy-scale ViT encoder with linear, cosine and domain heads."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import tensor as T
from .tensor import ContractError, Tensor

CLASSIFIERS = ("linear", "cosine")


class ConfigError(ValueError):
    pass


@dataclass
class ViTConfig:
    image_size: int = 32
    patch_size: int = 4
    channels: int = 3
    embed_dim: int = 64
    num_heads: int = 4
    num_layers: int = 4
    mlp_ratio: int = 4
    num_classes: int = 9
    embedding_dim_out: int = 64
    cosine_temperature: float = 0.05
    domain_hidden: int = 64
    classifier: str = "linear"

    def __post_init__(self):
        counts = ("image_size", "patch_size", "channels", "embed_dim", "num_heads", "num_layers",
                  "mlp_ratio", "num_classes", "embedding_dim_out", "domain_hidden")
        for name in counts:
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.image_size % self.patch_size:
            raise ConfigError(f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.embed_dim % self.num_heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if self.cosine_temperature <= 0:
            raise ConfigError("cosine_temperature must be > 0")
        if self.classifier not in CLASSIFIERS:
            raise ConfigError(f"classifier must be one of {CLASSIFIERS}")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_tokens(self) -> int:
        return self.grid ** 2 + 1


def _uniform(rng, fan_in, shape):
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def init_params(cfg: ViTConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    d, out = cfg.embed_dim, cfg.embedding_dim_out
    patch_dim = cfg.channels * cfg.patch_size ** 2
    hidden = d * cfg.mlp_ratio
    p: dict[str, Tensor] = {}
    p["enc.patch.w"] = _uniform(rng, patch_dim, (patch_dim, d))
    p["enc.patch.b"] = _uniform(rng, patch_dim, (d,))
    p["enc.cls"] = Tensor(rng.normal(0, 0.02, size=(1, d)), requires_grad=True)
    p["enc.pos"] = Tensor(rng.normal(0, 0.02, size=(cfg.num_tokens, d)), requires_grad=True)
    for i in range(cfg.num_layers):
        pre = f"enc.layer{i}."
        p[pre + "ln1.g"] = Tensor(np.ones(d), requires_grad=True)
        p[pre + "ln1.b"] = Tensor(np.zeros(d), requires_grad=True)
        for m in "qkvo":
            p[pre + f"attn.{m}.w"] = _uniform(rng, d, (d, d))
            p[pre + f"attn.{m}.b"] = _uniform(rng, d, (d,))
        p[pre + "ln2.g"] = Tensor(np.ones(d), requires_grad=True)
        p[pre + "ln2.b"] = Tensor(np.zeros(d), requires_grad=True)
        p[pre + "mlp.fc1.w"] = _uniform(rng, d, (d, hidden))
        p[pre + "mlp.fc1.b"] = _uniform(rng, d, (hidden,))
        p[pre + "mlp.fc2.w"] = _uniform(rng, hidden, (hidden, d))
        p[pre + "mlp.fc2.b"] = _uniform(rng, hidden, (d,))
    p["enc.norm.g"] = Tensor(np.ones(d), requires_grad=True)
    p["enc.norm.b"] = Tensor(np.zeros(d), requires_grad=True)
    p["enc.proj.w"] = _uniform(rng, d, (d, out))
    p["enc.proj.b"] = _uniform(rng, d, (out,))
    p["head.linear.w"] = _uniform(rng, out, (out, cfg.num_classes))
    p["head.linear.b"] = _uniform(rng, out, (cfg.num_classes,))
    p["head.cosine.w"] = _uniform(rng, out, (cfg.num_classes, out))
    h = cfg.domain_hidden
    p["head.domain.fc1.w"] = _uniform(rng, out, (out, h))
    p["head.domain.fc1.b"] = _uniform(rng, out, (h,))
    p["head.domain.fc2.w"] = _uniform(rng, h, (h, h))
    p["head.domain.fc2.b"] = _uniform(rng, h, (h,))
    p["head.domain.fc3.w"] = _uniform(rng, h, (h, 2))
    p["head.domain.fc3.b"] = _uniform(rng, h, (2,))
    return p


# ---------------------------------------------------------------- encoder pieces

def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    """(B, C, H, W) -> (B, (H/N)*(W/N), C*N*N), patches in row-major grid order."""
    b, c, h, w = images.shape
    if h % patch or w % patch:
        raise ConfigError(f"image {h}x{w} not divisible into {patch}x{patch} patches")
    x = images.reshape(b, c, h // patch, patch, w // patch, patch)
    return x.transpose(0, 2, 4, 1, 3, 5).reshape(b, (h // patch) * (w // patch), c * patch * patch)


def patch_embed(images: np.ndarray, params: dict[str, Tensor], cfg: ViTConfig) -> Tensor:
    """Token sequence (B, T+1, d): projected patches, class token first, plus positions."""
    images = np.asarray(images, dtype=np.float64)
    if images.shape[-2:] != (cfg.image_size, cfg.image_size):
        raise ConfigError(f"expected {cfg.image_size}x{cfg.image_size} images, got {images.shape[-2:]}")
    patches = Tensor(patchify(images, cfg.patch_size))
    tokens = T.matmul(patches, params["enc.patch.w"]) + params["enc.patch.b"]
    cls = T.broadcast_to(T.reshape(params["enc.cls"], (1, 1, cfg.embed_dim)),
                         (images.shape[0], 1, cfg.embed_dim))
    return T.concat([cls, tokens], axis=1) + params["enc.pos"]


def window_mask(grid: int, window: float | None) -> np.ndarray | None:
    """Additive attention mask for a Chebyshev receptive-field radius.

    Returns None when every key is visible to every query, so an unbounded
    window is bit-identical to global attention. The class token sees and is
    seen by everything.
    """
    if window is None:
        return None
    if window < 0:
        raise ContractError(f"attention window must be >= 0, got {window}")
    if window >= grid - 1:
        return None
    r, c = np.divmod(np.arange(grid * grid), grid)
    dist = np.maximum(np.abs(r[:, None] - r[None, :]), np.abs(c[:, None] - c[None, :]))
    visible = np.ones((grid * grid + 1,) * 2, dtype=bool)
    visible[1:, 1:] = dist <= window
    return np.where(visible, 0.0, -np.inf)


def _linear(x: Tensor, params, name: str) -> Tensor:
    return T.matmul(x, params[name + ".w"]) + params[name + ".b"]


def mhsa_forward(tokens: Tensor, params: dict[str, Tensor], prefix: str, num_heads: int,
                 mask: np.ndarray | None = None, record: list | None = None) -> Tensor:
    """Multi-head self-attention over (B, S, d) tokens.

    ``mask`` is an additive (S, S) mask of 0 / -inf; ``record`` collects the
    (B, heads, S, S) attention weights when given.
    """
    b, s, d = tokens.shape
    dh = d // num_heads

    def heads(name):
        x = _linear(tokens, params, prefix + name)
        return T.transpose(T.reshape(x, (b, s, num_heads, dh)), (0, 2, 1, 3))

    q, k, v = heads("q"), heads("k"), heads("v")
    logits = T.matmul(q, T.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dh))
    if mask is not None:
        if np.any(np.all(np.isinf(mask), axis=-1)):
            raise ContractError("attention mask leaves a query with no visible keys")
        logits = logits + Tensor(mask)
    weights = T.softmax(logits, axis=-1)
    if record is not None:
        record.append(weights.data)
    mixed = T.reshape(T.transpose(T.matmul(weights, v), (0, 2, 1, 3)), (b, s, d))
    return _linear(mixed, params, prefix + "o")


def _affine_norm(x: Tensor, params, name: str) -> Tensor:
    return T.layernorm(x) * params[name + ".g"] + params[name + ".b"]


def encoder_block(x: Tensor, params, i: int, cfg: ViTConfig, mask=None, record=None) -> Tensor:
    pre = f"enc.layer{i}."
    x = x + mhsa_forward(_affine_norm(x, params, pre + "ln1"), params, pre + "attn.",
                         cfg.num_heads, mask, record)
    h = T.gelu(_linear(_affine_norm(x, params, pre + "ln2"), params, pre + "mlp.fc1"))
    return x + _linear(h, params, pre + "mlp.fc2")


# ---------------------------------------------------------------- model

class ViTModel:
    """Encoder F plus heads; parameters live in one ordered name->Tensor dict."""

    def __init__(self, cfg: ViTConfig, params: dict[str, Tensor] | None = None, seed: int = 0):
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg, np.random.default_rng(seed))
        if self.params["enc.pos"].shape[0] != cfg.num_tokens:
            raise ConfigError("position-embedding rows do not match token count")

    def group(self, prefix: str) -> list[Tensor]:
        return [t for n, t in self.params.items() if n.startswith(prefix)]

    @property
    def encoder_params(self) -> list[Tensor]:
        return self.group("enc.")

    def classifier_params(self) -> list[Tensor]:
        return self.group(f"head.{self.cfg.classifier}.")

    def domain_params(self) -> list[Tensor]:
        return self.group("head.domain.")

    def encode(self, images, window: float | None = None, record: list | None = None) -> Tensor:
        """Feature F(x): projected class-token output of the last layer.

        Accepts one (C, H, W) image or a (B, C, H, W) batch.
        """
        images = np.asarray(images, dtype=np.float64)
        single = images.ndim == 3
        if single:
            images = images[None]
        x = patch_embed(images, self.params, self.cfg)
        mask = window_mask(self.cfg.grid, window)
        for i in range(self.cfg.num_layers):
            x = encoder_block(x, self.params, i, self.cfg, mask, record)
        cls = _affine_norm(x[:, 0, :], self.params, "enc.norm")
        f = _linear(cls, self.params, "enc.proj")
        return f[0] if single else f

    def linear_head(self, f: Tensor) -> Tensor:
        return linear_head(f, self.params["head.linear.w"], self.params["head.linear.b"])

    def cosine_head(self, f: Tensor) -> Tensor:
        return cosine_head(f, self.params["head.cosine.w"], self.cfg.cosine_temperature)

    def domain_head(self, f: Tensor) -> Tensor:
        return domain_head(f, self.params)

    def classify(self, f: Tensor) -> Tensor:
        return self.cosine_head(f) if self.cfg.classifier == "cosine" else self.linear_head(f)

    def logits(self, images, window: float | None = None) -> Tensor:
        return self.classify(self.encode(images, window))

    def state(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.params.items()}


def linear_head(f: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return T.matmul(f, w) + b


def cosine_head(f: Tensor, w: Tensor, temperature: float) -> Tensor:
    """logit_j = cos(f, w_j) / T; both f and every w_j are normalized here."""
    return T.matmul(T.l2_normalize(f, axis=-1), T.transpose(T.l2_normalize(w, axis=-1))) * (1.0 / temperature)


def domain_head(f: Tensor, params: dict[str, Tensor]) -> Tensor:
    h = T.relu(_linear(f, params, "head.domain.fc1"))
    h = T.relu(_linear(h, params, "head.domain.fc2"))
    return _linear(h, params, "head.domain.fc3")


def resize_pos_embed(pos: np.ndarray, new_grid: int) -> np.ndarray:
    """Bilinearly resample the patch rows of a (g*g+1, d) table to a new grid.

    Corner-aligned sampling; the class-token row passes through unchanged.
    """
    pos = np.asarray(pos, dtype=np.float64)
    g = math.isqrt(pos.shape[0] - 1)
    if g * g + 1 != pos.shape[0] or g < 1 or new_grid < 1:
        raise ConfigError(f"cannot resize {pos.shape[0]} position rows to grid {new_grid}")
    if new_grid == g:
        return pos.copy()
    grid = pos[1:].reshape(g, g, -1)
    coords = np.linspace(0.0, g - 1, new_grid) if new_grid > 1 else np.zeros(1)
    lo = np.minimum(np.floor(coords).astype(int), g - 1)
    hi = np.minimum(lo + 1, g - 1)
    frac = coords - lo
    rows = grid[lo] * (1 - frac)[:, None, None] + grid[hi] * frac[:, None, None]
    out = rows[:, lo] * (1 - frac)[None, :, None] + rows[:, hi] * frac[None, :, None]
    return np.concatenate([pos[:1], out.reshape(new_grid * new_grid, -1)], axis=0)


def config_dict(cfg: ViTConfig) -> dict:
    return asdict(cfg)


def config_field_names() -> list[str]:
    return [f.name for f in fields(ViTConfig)]
