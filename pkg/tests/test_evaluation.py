from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gevit.evaluation import (MetricsRecord, accuracy, corruption_report, count_correct,
                              cue_conflict_scores, evaluate_corruptions, format_table,
                              generalization_gap, predict, read_jsonl, with_gap, write_jsonl)
from gevit.forge.dataset import NO_LABEL, Dataset, concat_datasets, shift_code
from gevit.tensor import ContractError, Tensor
from gevit.vit import ViTConfig, ViTModel


class TableModel:
    """Returns pre-set logits; image[0, 0, 0] holds the row index."""

    def __init__(self, logits, num_classes=None):
        self.table = np.asarray(logits, dtype=np.float64)
        self.cfg = SimpleNamespace(num_classes=num_classes or self.table.shape[1])
        self.calls = []

    def logits(self, images, window=None):
        self.calls.append(window)
        return Tensor(self.table[images[:, 0, 0, 0].astype(int)])


def indexed(labels, nc=9, texture=None, family="clean", variant="clean", severity=0, name="set"):
    n = len(labels)
    imgs = np.zeros((n, 1, 2, 2), dtype=np.float32)
    imgs[:, 0, 0, 0] = np.arange(n)
    fam, var = shift_code(family, variant)
    tex = labels if texture is None else texture
    return Dataset(imgs, labels, tex, labels, 0, fam, var, severity, nc, name)


def onehot_logits(preds, nc=9):
    out = np.zeros((len(preds), nc))
    out[np.arange(len(preds)), preds] = 1.0
    return out


def test_all_correct_and_half():
    labels = np.array([0, 1, 2, 3, 4, 5])
    assert accuracy(TableModel(onehot_logits(labels)), indexed(labels)).accuracy == 1.0
    preds = np.array([0, 1, 2, 0, 0, 0])
    rec = accuracy(TableModel(onehot_logits(preds)), indexed(labels))
    assert rec.accuracy == 0.5 and rec.fraction == Fraction(1, 2) and rec.correct == 3


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 1000), st.integers(0, 2**31))
def test_recount_oracle(n, seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 9, size=n)
    logits = rng.normal(size=(n, 9))
    rec = accuracy(TableModel(logits), indexed(labels))
    brute = 0
    for i in range(n):
        best = 0
        for j in range(1, 9):
            if logits[i, j] > logits[i, best]:
                best = j
        brute += int(best == labels[i])
    assert rec.correct == brute and rec.n == n
    assert rec.accuracy == brute / n


def test_argmax_ties_lowest_index():
    logits = np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 2.0], [5.0, 5.0, 5.0]])
    assert list(predict(TableModel(logits), indexed([0, 1, 2], nc=3).images)) == [0, 1, 0]


@given(st.integers(0, 10_000), st.floats(0.01, 100))
def test_argmax_invariance(seed, scale):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 9, size=50)
    logits = rng.normal(size=(50, 9))
    a = accuracy(TableModel(logits), indexed(labels)).correct
    b = accuracy(TableModel(logits * scale), indexed(labels)).correct
    c = accuracy(TableModel(np.exp(logits)), indexed(labels)).correct
    assert a == b == c


def test_concatenation_is_weighted_mean():
    rng = np.random.default_rng(4)
    la, lb = rng.integers(0, 9, 30), rng.integers(0, 9, 70)
    logits = rng.normal(size=(100, 9))
    both = concat_datasets([indexed(la), indexed(lb)])
    both.images[:, 0, 0, 0] = np.arange(100)
    model = TableModel(logits)
    ra = accuracy(TableModel(logits[:30]), indexed(la))
    rb = accuracy(TableModel(logits[30:]), indexed(lb))
    whole = accuracy(model, both)
    assert whole.fraction == (ra.fraction * 30 + rb.fraction * 70) / 100


def test_empty_and_mismatch():
    with pytest.raises(ContractError):
        accuracy(TableModel(np.zeros((1, 9))), indexed(np.zeros(0, int)))
    with pytest.raises(ContractError):
        accuracy(TableModel(np.zeros((3, 5))), indexed([0, 1, 2]))


def test_gap_fixtures():
    iid = MetricsRecord("iid", 10, 9)
    ood = MetricsRecord("ood", 10, 7)
    assert generalization_gap(iid, ood) == pytest.approx(0.2, abs=1e-15)
    assert generalization_gap(iid, iid) == 0.0
    assert generalization_gap(ood, iid) == -generalization_gap(iid, ood)
    rec = with_gap(MetricsRecord("ood", 10, 7), iid)
    assert rec.gap_vs == "iid" and rec.gap == pytest.approx(0.2)


@given(st.integers(1, 500), st.integers(1, 500), st.data())
def test_gap_exact(n1, n2, data):
    c1, c2 = data.draw(st.integers(0, n1)), data.draw(st.integers(0, n2))
    a, b = MetricsRecord("a", n1, c1), MetricsRecord("b", n2, c2)
    assert generalization_gap(a, b) == float(Fraction(c1, n1) - Fraction(c2, n2))
    assert generalization_gap(a, b) == -generalization_gap(b, a)


def test_cue_conflict_oracles():
    shape = np.array([0, 1, 2, 3])
    tex = np.array([5, 6, 7, 8])
    ds = indexed(shape, texture=tex, family="texture", variant="cue_conflict")
    s = cue_conflict_scores(TableModel(onehot_logits(shape)), ds)
    assert (s.shape_accuracy, s.texture_accuracy) == (1.0, 0.0)
    t = cue_conflict_scores(TableModel(onehot_logits(tex)), ds)
    assert (t.shape_accuracy, t.texture_accuracy) == (0.0, 1.0)


@given(st.integers(0, 10_000))
def test_cue_conflict_scores_bounded(seed):
    rng = np.random.default_rng(seed)
    shape = rng.integers(0, 9, 40)
    tex = (shape + rng.integers(1, 9, 40)) % 9
    ds = indexed(shape, texture=tex)
    rec = cue_conflict_scores(TableModel(rng.normal(size=(40, 9))), ds)
    assert rec.shape_accuracy + rec.texture_accuracy <= 1.0


def test_cue_conflict_requires_texture_labels():
    shape = np.array([0, 1])
    with pytest.raises(ContractError):
        cue_conflict_scores(TableModel(np.zeros((2, 9))), indexed(shape, texture=np.array([NO_LABEL] * 2)))
    with pytest.raises(ContractError):
        cue_conflict_scores(TableModel(np.zeros((2, 9))), indexed(shape))


def test_corruption_fields_recorded():
    ds = indexed([0, 1], family="corruption", variant="pixelate", severity=3)
    rec = accuracy(TableModel(np.zeros((2, 9))), ds)
    assert (rec.corruption_type, rec.severity) == ("pixelate", 3)
    assert accuracy(TableModel(np.zeros((2, 9))), indexed([0, 1])).severity is None


def test_corruption_report_means():
    single = corruption_report({("contrast", 1): MetricsRecord("c", 10, 4)}, severities=(1,))
    assert single.mean == 0.4
    two = corruption_report({("contrast", 1): MetricsRecord("a", 10, 4),
                             ("contrast", 2): MetricsRecord("b", 10, 6)}, severities=(1, 2))
    assert two.mean == 0.5


def test_corruption_report_missing_cells_warn():
    with pytest.warns(UserWarning, match="absent"):
        rep = corruption_report({("blur", 1): MetricsRecord("a", 4, 1), ("blur", 3): MetricsRecord("b", 4, 3)})
    assert ("blur", 2) in rep.missing and rep.mean == 0.5


def test_corruption_mean_independent_summation():
    rng = np.random.default_rng(7)
    cells = {(t, s): MetricsRecord(f"{t}{s}", int(n), int(rng.integers(0, n + 1)))
             for t in ("a", "b", "c") for s in range(1, 6) for n in [rng.integers(1, 300)]}
    rep = corruption_report(cells)
    naive = sum(r.correct / r.n for r in cells.values()) / len(cells)
    assert abs(rep.mean - naive) < 1e-12
    per = rep.per_type()
    assert abs(per["b"] - np.mean([cells[("b", s)].accuracy for s in range(1, 6)])) < 1e-12


def test_evaluate_corruptions_forwards_window():
    model = TableModel(onehot_logits([0, 1]))
    rep = evaluate_corruptions(model, {("contrast", 1): indexed([0, 1], family="corruption",
                                                                variant="contrast", severity=1)}, window=2)
    assert rep.mean == 1.0 and model.calls == [2]


def test_evaluation_is_read_only():
    model = ViTModel(ViTConfig(image_size=8, patch_size=4, embed_dim=8, num_heads=2, num_layers=1))
    before = {k: v.data.copy() for k, v in model.params.items()}
    rng = np.random.default_rng(0)
    ds = Dataset(rng.uniform(size=(5, 3, 8, 8)), rng.integers(0, 9, 5), 0, 0, 0, 0, 0, 0, 9)
    accuracy(model, ds)
    accuracy(model, ds, window=0)
    assert all(np.array_equal(before[k], v.data) and v.grad is None for k, v in model.params.items())


def test_jsonl_and_table(tmp_path):
    recs = [MetricsRecord("iid_val", 4, 3),
            with_gap(MetricsRecord("texture-cue_conflict", 4, 1, shape_correct=1, texture_correct=2),
                     MetricsRecord("iid_val", 4, 3))]
    write_jsonl(recs, tmp_path / "m.jsonl")
    rows = read_jsonl(tmp_path / "m.jsonl")
    assert len(rows) == 2
    assert set(rows[0]) == {"dataset", "n", "acc", "gap_vs", "gap", "shape_acc", "texture_acc",
                            "corruption_type", "severity"}
    assert rows[1]["gap"] == 0.5 and rows[1]["texture_acc"] == 0.5
    table = format_table(recs).splitlines()
    assert table[0].split() == ["dataset", "n", "acc", "gap", "shape_acc", "texture_acc"]
    assert "0.7500" in table[1]


def test_count_correct():
    assert count_correct(np.array([1, 2, 3]), np.array([1, 0, 3])) == 2
