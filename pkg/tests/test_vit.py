import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import RegularGridInterpolator

from gevit import checkpoint
from gevit import tensor as T
from gevit.gradcheck import finite_diff_check
from gevit.tensor import Tensor, backward
from gevit.vit import (ConfigError, ViTConfig, ViTModel, cosine_head, domain_head, mhsa_forward,
                       patch_embed, resize_pos_embed, window_mask)

TOY = dict(image_size=8, patch_size=4, embed_dim=16, num_heads=2, num_layers=2,
           embedding_dim_out=8, domain_hidden=8)


def toy_model(seed=0, **kw):
    return ViTModel(ViTConfig(**{**TOY, **kw}), seed=seed)


def test_config_validation():
    with pytest.raises(ConfigError):
        ViTConfig(image_size=30, patch_size=4)
    with pytest.raises(ConfigError):
        ViTConfig(embed_dim=10, num_heads=4)
    with pytest.raises(ConfigError):
        ViTConfig(num_layers=0)


def test_token_counts():
    assert ViTConfig(image_size=16, patch_size=4, embed_dim=8, num_heads=2).num_tokens == 17
    assert ViTConfig(image_size=224, patch_size=16).num_tokens == 197
    model = ViTModel(ViTConfig(image_size=16, patch_size=4, embed_dim=8, num_heads=2, num_layers=1))
    assert patch_embed(np.zeros((1, 3, 16, 16)), model.params, model.cfg).shape == (1, 17, 8)


def test_zero_image_tokens_are_positions():
    model = toy_model()
    for name in ("enc.patch.w", "enc.patch.b"):
        model.params[name].data[:] = 0.0
    tokens = patch_embed(np.zeros((1, 3, 8, 8)), model.params, model.cfg).data[0]
    pos = model.params["enc.pos"].data
    np.testing.assert_array_equal(tokens[0], pos[0] + model.params["enc.cls"].data[0])
    np.testing.assert_array_equal(tokens[1:], pos[1:])


def test_indivisible_image_rejected():
    model = toy_model()
    with pytest.raises(ConfigError):
        patch_embed(np.zeros((1, 3, 9, 9)), model.params, model.cfg)


# ---- attention

def _layer_inputs(model, n_tokens, rng):
    return Tensor(rng.normal(size=(2, n_tokens, model.cfg.embed_dim)))


def test_single_token_attention_is_one():
    model = toy_model()
    rec = []
    mhsa_forward(Tensor(np.random.default_rng(0).normal(size=(1, 1, 16))), model.params,
                 "enc.layer0.attn.", 2, record=rec)
    np.testing.assert_array_equal(rec[0], np.ones((1, 2, 1, 1)))


def test_window_zero_isolates_patches():
    model = toy_model(image_size=16)
    rng = np.random.default_rng(1)
    x0 = rng.normal(size=(1, 17, 16))
    mask = window_mask(4, 0)
    base = mhsa_forward(Tensor(x0), model.params, "enc.layer0.attn.", 2, mask).data
    x1 = x0.copy()
    x1[0, 9] += rng.normal(size=16)
    moved = mhsa_forward(Tensor(x1), model.params, "enc.layer0.attn.", 2, mask).data
    untouched = [i for i in range(1, 17) if i != 9]
    np.testing.assert_array_equal(base[0, untouched], moved[0, untouched])
    assert not np.array_equal(base[0, 0], moved[0, 0])


def test_window_mask_structure():
    m = window_mask(3, 0)
    visible = m == 0
    assert visible[0].all() and visible[:, 0].all()
    np.testing.assert_array_equal(visible[1:, 1:], np.eye(9, dtype=bool))
    assert window_mask(3, 2) is None and window_mask(3, math.inf) is None
    with pytest.raises(T.ContractError):
        window_mask(3, -1)


def test_window_infinite_bit_identical():
    model = toy_model(image_size=16)
    img = np.random.default_rng(2).uniform(size=(3, 3, 16, 16))
    a = model.encode(img).data
    b = model.encode(img, window=math.inf).data
    c = model.encode(img, window=3).data
    assert np.array_equal(a, b) and np.array_equal(a, c)


def test_nested_windows_differ():
    model = toy_model(image_size=16)
    img = np.random.default_rng(3).uniform(size=(2, 3, 16, 16))
    outs = [model.encode(img, window=w).data for w in (0, 1, None)]
    assert not np.array_equal(outs[0], outs[1])
    assert not np.array_equal(outs[1], outs[2])


@pytest.mark.parametrize("window", [None, 0, 1, 2])
def test_attention_rows_are_distributions(window):
    model = toy_model(image_size=16)
    rec = []
    model.encode(np.random.default_rng(4).uniform(size=(2, 3, 16, 16)), window=window, record=rec)
    assert len(rec) == model.cfg.num_layers
    for w in rec:
        assert np.all(w >= 0)
        np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-9)


# ---- encode

def test_encode_shape_and_determinism():
    model = toy_model()
    img = np.random.default_rng(5).uniform(size=(3, 8, 8))
    f1, f2 = model.encode(img), model.encode(img)
    assert f1.shape == (8,)
    assert np.array_equal(f1.data, f2.data)
    assert model.encode(img[None]).shape == (1, 8)


def test_encode_gradient_patch_weights():
    model = toy_model()
    rng = np.random.default_rng(6)
    img = rng.uniform(size=(2, 3, 8, 8))
    w = Tensor(rng.normal(size=(2, 8)))
    f = lambda _: (model.encode(img) * w).sum()
    assert finite_diff_check(f, model.params["enc.patch.w"]) < 1e-5


def test_batch_equals_single():
    model = toy_model()
    imgs = np.random.default_rng(7).uniform(size=(3, 3, 8, 8))
    batch = model.encode(imgs).data
    for i in range(3):
        np.testing.assert_allclose(model.encode(imgs[i]).data, batch[i], atol=1e-12)


# ---- heads

def test_linear_head():
    model = toy_model(num_classes=8)
    f = Tensor(np.arange(8.0))
    model.params["head.linear.w"].data[:] = 0
    model.params["head.linear.b"].data[:] = 0
    np.testing.assert_array_equal(model.linear_head(f).data, np.zeros(8))
    model.params["head.linear.w"].data[:] = np.eye(8)
    np.testing.assert_array_equal(model.linear_head(f).data, f.data)


def test_linear_head_gradient():
    model = toy_model()
    rng = np.random.default_rng(8)
    f = Tensor(rng.normal(size=(4, 8)))
    fn = lambda _: T.cross_entropy(T.softmax(model.linear_head(f)), [0, 1, 2, 3]).sum()
    assert finite_diff_check(fn, model.params["head.linear.w"]) < 1e-6
    assert finite_diff_check(fn, model.params["head.linear.b"]) < 1e-6
    assert finite_diff_check(fn, f) < 1e-6


def test_cosine_head_fixtures():
    w = Tensor([[2.0, 0.0], [0.0, 3.0]])
    np.testing.assert_allclose(cosine_head(Tensor([5.0, 0.0]), w, 0.05).data, [20.0, 0.0], atol=1e-12)
    w2 = Tensor([[1.0, 1.0], [1.0, -1.0]])
    logits = cosine_head(Tensor([1.0, 0.0]), w2, 0.05)
    np.testing.assert_allclose(T.softmax(logits).data, [0.5, 0.5], atol=1e-12)
    with pytest.raises(T.DegenerateInputError):
        cosine_head(Tensor([0.0, 0.0]), w, 0.05)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 10_000))
def test_cosine_head_scale_invariant(alpha, seed):
    rng = np.random.default_rng(seed)
    f, w = rng.normal(size=6), Tensor(rng.normal(size=(4, 6)))
    np.testing.assert_allclose(cosine_head(Tensor(alpha * f), w, 0.05).data,
                               cosine_head(Tensor(f), w, 0.05).data, atol=1e-9)


def test_cosine_head_gradient():
    model = toy_model()
    rng = np.random.default_rng(9)
    f = Tensor(rng.normal(size=(3, 8)))
    fn = lambda _: T.entropy(T.softmax(model.cosine_head(f))).sum()
    assert finite_diff_check(fn, model.params["head.cosine.w"]) < 1e-6
    assert finite_diff_check(fn, f) < 1e-6


def test_domain_head():
    model = toy_model()
    f = Tensor(np.random.default_rng(10).normal(size=(5, 8)))
    assert model.domain_head(f).shape == (5, 2)
    assert model.domain_head(f[0]).shape == (2,)
    for name in model.params:
        if name.startswith("head.domain"):
            model.params[name].data[:] = 0
    np.testing.assert_array_equal(T.softmax(model.domain_head(f)).data, np.full((5, 2), 0.5))


def test_domain_head_gradient():
    model = toy_model()
    rng = np.random.default_rng(11)
    f = Tensor(rng.normal(size=(6, 8)))
    fn = lambda _: T.cross_entropy(T.softmax(domain_head(f, model.params)), [0, 1, 0, 1, 1, 0]).mean()
    for name in ("head.domain.fc1.w", "head.domain.fc2.b", "head.domain.fc3.w"):
        assert finite_diff_check(fn, model.params[name]) < 1e-6


# ---- gradient reversal

def test_grad_reverse_forward_identity():
    x = np.random.default_rng(0).normal(size=4)
    assert np.array_equal(T.grad_reverse(Tensor(x), 0.3).data, x)


def test_grad_reverse_backward():
    x = Tensor(1.0, requires_grad=True)
    backward(T.grad_reverse(x, 0.5) * 2.0)
    assert x.grad == -1.0
    y = Tensor(1.0, requires_grad=True)
    backward(T.grad_reverse(y, 0.0) * 2.0)
    assert y.grad == 0.0


@pytest.mark.parametrize("lam", [0.0, 0.1, 1.0])
def test_grl_composition_through_encoder(lam):
    rng = np.random.default_rng(12)
    img = rng.uniform(size=(4, 3, 8, 8))
    yd = [0, 0, 1, 1]

    def encoder_grads(use_grl):
        model = toy_model(seed=3)
        f = model.encode(img)
        if use_grl:
            f = T.grad_reverse(f, lam)
        backward(T.cross_entropy(T.softmax(model.domain_head(f)), yd).mean())
        return [p.grad for p in model.encoder_params], [p.grad for p in model.domain_params()]

    enc_rev, dom_rev = encoder_grads(True)
    enc_plain, dom_plain = encoder_grads(False)
    for a, b in zip(enc_rev, enc_plain):
        np.testing.assert_allclose(a, -lam * b, atol=1e-12)
    for a, b in zip(dom_rev, dom_plain):
        np.testing.assert_array_equal(a, b)


# ---- position-embedding resize

def test_resize_identity():
    pos = np.random.default_rng(0).normal(size=(10, 4))
    out = resize_pos_embed(pos, 3)
    assert np.array_equal(out, pos)


@pytest.mark.parametrize("g,g2", [(2, 3), (3, 5), (4, 2), (5, 7)])
def test_resize_corners_and_cls(g, g2):
    pos = np.random.default_rng(g * 10 + g2).normal(size=(g * g + 1, 3))
    out = resize_pos_embed(pos, g2)
    assert out.shape == (g2 * g2 + 1, 3)
    np.testing.assert_array_equal(out[0], pos[0])
    src, dst = pos[1:].reshape(g, g, 3), out[1:].reshape(g2, g2, 3)
    for (i, j), (a, b) in zip([(0, 0), (0, g - 1), (g - 1, 0), (g - 1, g - 1)],
                              [(0, 0), (0, g2 - 1), (g2 - 1, 0), (g2 - 1, g2 - 1)]):
        np.testing.assert_allclose(dst[a, b], src[i, j], atol=1e-12)


def test_resize_center_mean():
    pos = np.array([[9.0], [0.0], [1.0], [2.0], [3.0]])
    out = resize_pos_embed(pos, 3)
    assert out[1 + 4, 0] == pytest.approx(1.5, abs=1e-12)


@pytest.mark.parametrize("g,g2", [(3, 5), (4, 6), (5, 3)])
def test_resize_matches_reference_interpolator(g, g2):
    pos = np.random.default_rng(g2).normal(size=(g * g + 1, 2))
    axis = np.arange(g, dtype=float)
    ref = RegularGridInterpolator((axis, axis), pos[1:].reshape(g, g, 2), method="linear")
    q = np.linspace(0, g - 1, g2)
    pts = np.stack(np.meshgrid(q, q, indexing="ij"), axis=-1).reshape(-1, 2)
    np.testing.assert_allclose(resize_pos_embed(pos, g2)[1:], ref(pts), atol=1e-12)


# ---- checkpoints

def test_checkpoint_round_trip(tmp_path):
    model = toy_model(seed=4, classifier="cosine")
    path = tmp_path / "m.ckpt"
    checkpoint.save(model, path)
    loaded = checkpoint.load(path)
    assert loaded.cfg == model.cfg
    assert list(loaded.params) == list(model.params)
    for name in model.params:
        assert np.array_equal(loaded.params[name].data, model.params[name].data)
    checkpoint.save(loaded, tmp_path / "again.ckpt")
    assert path.read_bytes() == (tmp_path / "again.ckpt").read_bytes()


def test_checkpoint_layout(tmp_path):
    path = tmp_path / "t.ckpt"
    checkpoint.write_tensors(path, {"ab": np.array([[1.0, 2.0]])})
    raw = path.read_bytes()
    assert raw[:8] == b"GEVIT001"
    assert raw[8:10] == (2).to_bytes(2, "little") and raw[10:12] == b"ab"
    assert raw[12] == 2
    assert raw[13:21] == (1).to_bytes(4, "little") + (2).to_bytes(4, "little")
    assert np.frombuffer(raw[21:], "<f8").tolist() == [1.0, 2.0]


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTAVIT0")
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.load(path)
