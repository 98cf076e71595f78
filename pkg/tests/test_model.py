# tests/test_model.py
import pytest
import os
import sys
import math
import numpy as np

# Añadir la ruta raíz del proyecto al sys.path para importaciones
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.model.losses import LossSpec, loss_and_dlogits, predict_labels
from src.model.mlp import (MlpSpec, build_layout, example_loss, forward, forward_batch, init_params,
                           per_sample_grad, per_sample_grads, zero_params)
from src.model.metrics import classification_scores, evaluate, evaluate_arrays
from src.model.presets import preset
from src.common.exceptions import EmptySplit, ShapeMismatch
from src.common.models import Example
from src.data.dataset import Dataset
from src.numerics.random_streams import StreamKey, gaussian, uniform


def _batch(n: int, d: int, num_classes: int = 2, seed: int = 0):
    key = StreamKey(seed, "test-batch")
    X = gaussian(key.at(index=0), n * d, 1.0).reshape(n, d)
    y = (uniform(key.at(index=1), n) * num_classes).astype(np.int64)
    return X, y


def _finite_difference(params, spec, loss, x, y, key=None, h=1e-5):
    grad = np.zeros(len(params))
    for k in range(len(params)):
        plus = params.theta.copy()
        minus = params.theta.copy()
        plus[k] += h
        minus[k] -= h
        grad[k] = (example_loss(params.with_theta(plus), spec, loss, x, y, key)
                   - example_loss(params.with_theta(minus), spec, loss, x, y, key)) / (2 * h)
    return grad


@pytest.fixture
def simple_model():
    spec, loss = preset("income-simple", 5, hidden=[8, 8])
    return spec, loss, init_params(spec, StreamKey(1, "init"))


@pytest.fixture
def complex_model():
    spec, loss = preset("income-complex", 5, groups=4, hidden=[16, 8, 8])
    return spec, loss, init_params(spec, StreamKey(2, "init"))


class TestLosses:
    def test_bce_at_zero_logit(self):
        loss = LossSpec("bce", pos_weight=2.0)
        losses, dlogits = loss_and_dlogits(loss, np.zeros((2, 1)), np.array([1, 0]))
        np.testing.assert_allclose(losses, [2 * math.log(2), math.log(2)])
        np.testing.assert_allclose(dlogits[:, 0], [2 * (0.5 - 1.0), 0.5])

    def test_weighted_cross_entropy(self):
        loss = LossSpec("ce", class_weights=[1.0, 2.0])
        losses, _ = loss_and_dlogits(loss, np.zeros((2, 2)), np.array([0, 1]))
        np.testing.assert_allclose(losses, [math.log(2), 2 * math.log(2)])

    def test_saturated_logits_stay_finite(self):
        loss = LossSpec("bce")
        losses, _ = loss_and_dlogits(loss, np.array([[1e6], [-1e6]]), np.array([0, 1]))
        assert np.all(np.isfinite(losses))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            loss_and_dlogits(LossSpec("bce"), np.zeros((3, 2)), np.zeros(3, dtype=int))

    def test_predictions(self):
        np.testing.assert_array_equal(predict_labels(LossSpec("bce"), np.array([[2.0], [-1.0]])), [1, 0])
        ce = LossSpec("ce", class_weights=[1.0, 1.0])
        np.testing.assert_array_equal(predict_labels(ce, np.array([[0.0, 1.0], [3.0, 1.0]])), [1, 0])

    def test_ce_requires_weights(self):
        with pytest.raises(ValueError, match="class_weights"):
            LossSpec("ce")


class TestSpecAndLayout:
    def test_presets(self):
        spec, loss = preset("income-simple", 30)
        assert spec.widths == [30, 256, 256, 1] and loss.kind == "bce" and loss.pos_weight == 2.0
        spec, loss = preset("income-complex", 30)
        assert spec.widths == [30, 128, 64, 32, 2]
        assert spec.norm_groups == [8, 8, None] and spec.dropout == [0.0, 0.0, 0.3]
        assert loss.class_weights.tolist() == [1.0, 2.0]
        _, loss = preset("eicu-complex", 30)
        assert loss.class_weights.tolist() == [0.5, 1.0]
        assert preset("linear", 4)[0].widths == [4, 1]

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="Unknown model preset"):
            preset("transformer", 4)

    def test_group_count_must_divide_width(self):
        with pytest.raises(ValueError, match="evenly divide"):
            MlpSpec([4, 10, 1], norm_groups=[3])

    def test_layout_sizes(self):
        spec = MlpSpec([3, 4, 2], norm_groups=[2])
        names = [sl.name for sl in build_layout(spec)]
        assert names == ["W0", "b0", "gamma0", "beta0", "W1", "b1"]
        assert len(zero_params(spec)) == 12 + 4 + 4 + 4 + 8 + 2

    def test_init_is_deterministic(self):
        spec = MlpSpec([5, 8, 1])
        np.testing.assert_array_equal(init_params(spec, StreamKey(3, "init")).theta,
                                      init_params(spec, StreamKey(3, "init")).theta)


class TestForward:
    def test_eval_mode_is_deterministic(self, complex_model):
        spec, _, params = complex_model
        x = np.arange(5, dtype=float)
        np.testing.assert_array_equal(forward(params, spec, x), forward(params, spec, x))

    def test_train_mode_needs_key(self, complex_model):
        spec, _, params = complex_model
        with pytest.raises(ValueError, match="StreamKey"):
            forward(params, spec, np.zeros(5), mode="train")

    def test_dropout_masks_follow_key(self, complex_model):
        spec, _, params = complex_model
        x = np.linspace(-1, 1, 5)
        key = StreamKey(0, "dropout", 0, 4)
        a = forward(params, spec, x, mode="train", key=key)
        np.testing.assert_array_equal(a, forward(params, spec, x, mode="train", key=key))

    def test_batch_rows_match_single_examples(self, complex_model):
        spec, _, params = complex_model
        X, _ = _batch(6, 5)
        logits = forward_batch(params, spec, X)
        for i in range(6):
            np.testing.assert_allclose(logits[i], forward(params, spec, X[i]), rtol=1e-12, atol=1e-12)

    def test_input_width_mismatch(self, simple_model):
        spec, _, params = simple_model
        with pytest.raises(ShapeMismatch):
            forward(params, spec, np.zeros(4))

    def test_layer_shapes_checked_not_only_size(self):
        # [1, 4, 1] y [4, 2, 1] tienen 13 parámetros cada una
        params = init_params(MlpSpec([1, 4, 1]), StreamKey(0, "init"))
        other = MlpSpec([4, 2, 1])
        assert len(params) == len(zero_params(other))
        with pytest.raises(ShapeMismatch, match="W0"):
            forward_batch(params, other, np.zeros((3, 4)))


class TestPerSampleGradients:
    @pytest.mark.parametrize("model", ["simple_model", "complex_model"])
    def test_matches_finite_differences(self, model, request):
        spec, loss, params = request.getfixturevalue(model)
        X, y = _batch(3, 5, seed=11)
        for i in range(3):
            key = StreamKey(0, "dropout", 0, i)
            g, value = per_sample_grad(params, spec, loss, Example(X[i], int(y[i]), index=i), key)
            fd = _finite_difference(params, spec, loss, X[i], int(y[i]), key)
            assert value == pytest.approx(example_loss(params, spec, loss, X[i], int(y[i]), key))
            assert np.linalg.norm(g - fd) <= 1e-4 * np.linalg.norm(fd)

    def test_batch_rows_equal_single_gradients(self, complex_model):
        spec, loss, params = complex_model
        X, y = _batch(7, 5, seed=4)
        base = StreamKey(9, "dropout", 2, 0)
        G, losses = per_sample_grads(params, spec, loss, X, y, base_key=base, indices=list(range(7)))
        for i in range(7):
            g, value = per_sample_grad(params, spec, loss, Example(X[i], int(y[i]), index=i), base.at(index=i))
            np.testing.assert_allclose(G[i], g, rtol=1e-10, atol=1e-12)
            assert losses[i] == pytest.approx(value, rel=1e-12)

    def test_sum_of_rows_is_gradient_of_sum_loss(self, simple_model):
        spec, loss, params = simple_model
        X, y = _batch(4, 5, seed=8)
        G, _ = per_sample_grads(params, spec, loss, X, y)
        total = np.zeros(len(params))
        for i in range(4):
            total += per_sample_grad(params, spec, loss, Example(X[i], int(y[i]), index=i))[0]
        np.testing.assert_allclose(G.sum(axis=0), total, rtol=1e-10, atol=1e-12)

    def test_example_dimension_mismatch(self, simple_model):
        spec, loss, params = simple_model
        with pytest.raises(ShapeMismatch):
            per_sample_grad(params, spec, loss, Example(np.zeros(3), 1))


class TestMetrics:
    def test_binary_scores(self):
        acc, f1 = classification_scores(np.array([1, 0, 1, 1]), np.array([1, 0, 0, 1]), 2)
        assert acc == pytest.approx(0.75)
        assert f1 == pytest.approx(0.8)

    def test_macro_f1_for_three_classes(self):
        acc, f1 = classification_scores(np.array([0, 1, 2]), np.array([0, 1, 2]), 3)
        assert acc == 1.0 and f1 == 1.0

    def test_evaluate_sum_loss(self):
        spec = MlpSpec([2, 1])
        params = zero_params(spec)
        res = evaluate_arrays(params, spec, LossSpec("bce"), np.zeros((3, 2)), np.array([1, 0, 1]))
        assert res.sum_loss == pytest.approx(3 * math.log(2))
        assert res.count == 3

    def test_confusion_counts_and_degenerate_predictor(self):
        # TP=1, FP=1, FN=1, TN=1
        acc, f1 = classification_scores(np.array([1, 0, 1, 0]), np.array([1, 1, 0, 0]), 2)
        assert acc == pytest.approx(0.5) and f1 == pytest.approx(0.5)
        acc, f1 = classification_scores(np.array([1, 0] * 5), np.zeros(10, dtype=int), 2)
        assert acc == pytest.approx(0.5) and f1 == 0.0

    def test_evaluate_on_dataset_split(self):
        spec = MlpSpec([1, 1])
        params = zero_params(spec)
        params = params.with_theta(np.full(len(params), 10.0))
        x = np.array([[-2.0], [2.0]] * 5)
        split = Dataset(x, (x[:, 0] > 0).astype(int))
        res = evaluate(params, spec, LossSpec("bce"), split)
        assert res.accuracy == 1.0 and res.f1 == 1.0
        assert res.count == 10

    def test_evaluate_empty_split(self):
        spec = MlpSpec([2, 1])
        with pytest.raises(EmptySplit):
            evaluate_arrays(zero_params(spec), spec, LossSpec("bce"), np.zeros((0, 2)), np.zeros(0, dtype=int))
