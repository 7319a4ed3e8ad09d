"""Linear classifier and dual-threshold decision tests."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swaprecon.classifier import (
    ClassifierParams,
    DecisionThresholds,
    bce_loss,
    classify,
    decide,
    train_classifier,
)
from swaprecon.segnet import TrainConfig

from helpers import assert_grad_close, numeric_grad


class TestClassify:
    def test_zero_params_give_half(self):
        p = ClassifierParams.init(16)
        rng = np.random.default_rng(0)
        assert classify(rng.normal(size=16), p) == 0.5

    def test_sigmoid_algebra(self):
        # w.f + b = ln 3  ->  probability 0.75
        p = ClassifierParams(np.array([1.0]), 0.0)
        assert classify(np.array([np.log(3.0)]), p) == pytest.approx(0.75, abs=1e-12)

    def test_matches_dot_product_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            w = rng.normal(size=32)
            b = rng.normal()
            f = rng.normal(size=32)
            p = ClassifierParams(w, b)
            want = 1.0 / (1.0 + np.exp(-(sum(wi * fi for wi, fi in zip(w, f)) + b)))
            assert abs(classify(f, p) - want) <= 1e-14

    def test_nonfinite_feature_rejected(self):
        p = ClassifierParams.init(4)
        with pytest.raises(ValueError, match="finite"):
            classify(np.array([1.0, np.inf, 0.0, 0.0]), p)

    def test_scale_invariance_of_affine_head(self):
        rng = np.random.default_rng(2)
        w = rng.normal(size=8)
        f = rng.normal(size=8)
        lam = 3.7
        p1 = ClassifierParams(w, 0.25)
        p2 = ClassifierParams(w / lam, 0.25)
        assert classify(f, p1) == pytest.approx(classify(f * lam, p2), rel=1e-12)


class TestBce:
    def test_perfect_prediction(self):
        labels = np.array([1.0, 0.0, 1.0])
        preds = np.array([1.0 - 1e-7, 1e-7, 1.0 - 1e-7])
        loss, _ = bce_loss(preds, labels)
        assert 0.0 <= loss < 1e-6

    def test_half_prediction_is_ln2(self):
        loss, _ = bce_loss(np.array([0.5]), np.array([1.0]))
        assert loss == pytest.approx(np.log(2.0), rel=1e-12)

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            preds = rng.uniform(size=8)
            labels = (rng.uniform(size=8) > 0.5).astype(float)
            loss, _ = bce_loss(preds, labels)
            assert loss >= 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            bce_loss(np.array([]), np.array([]))

    def test_gradient_finite_difference(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            preds = rng.uniform(0.05, 0.95, size=6)
            labels = (rng.uniform(size=6) > 0.5).astype(float)
            _, grad = bce_loss(preds, labels)
            num = numeric_grad(lambda p: bce_loss(p, labels)[0], preds)
            assert_grad_close(grad, num, rtol=1e-6, atol=1e-9)


class TestDecide:
    def test_truth_table(self):
        th = DecisionThresholds(0.8, 0.4)
        assert decide(0.85, 0.41, th) == 1
        assert decide(0.85, 0.39, th) == 0
        assert decide(0.79, 0.41, th) == 0

    def test_strict_inequality_at_boundary(self):
        th = DecisionThresholds(0.8, 0.4)
        assert decide(0.8, 0.9, th) == 0
        assert decide(0.9, 0.4, th) == 0

    def test_invalid_thresholds_rejected(self):
        with pytest.raises(ValueError):
            DecisionThresholds(-0.1, 0.5)
        with pytest.raises(ValueError):
            DecisionThresholds(0.5, 1.5)

    def test_nonfinite_scores_rejected(self):
        with pytest.raises(ValueError):
            decide(np.nan, 0.5, DecisionThresholds(0.5, 0.5))

    @given(
        seg=st.floats(0, 1), cls=st.floats(0, 1),
        a=st.floats(0, 1), b=st.floats(0, 1),
        da=st.floats(0, 1), db=st.floats(0, 1),
    )
    def test_monotone_in_thresholds(self, seg, cls, a, b, da, db):
        lo = DecisionThresholds(a, b)
        hi = DecisionThresholds(min(a + da, 1.0), min(b + db, 1.0))
        assert decide(seg, cls, hi) <= decide(seg, cls, lo)


def _separable_samples(rng, n=120, scales=2, dim=16):
    labels = (rng.uniform(size=n) > 0.6).astype(float)
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    feats = rng.normal(size=(n, scales, dim)) * 0.1
    feats += np.where(labels[:, None], 1.0, -1.0)[:, None] * direction
    return feats, labels


class TestTraining:
    def test_separable_data_reaches_full_accuracy(self):
        rng = np.random.default_rng(5)
        feats, labels = _separable_samples(rng)
        params, fusion, _ = train_classifier(
            feats, labels, TrainConfig(epochs=200, seed=0)
        )
        from swaprecon.classifier import classify_batch

        fused = np.einsum("s,nsd->nd", fusion, feats)
        acc = ((classify_batch(fused, params) > 0.5) == labels).mean()
        assert acc == 1.0

    def test_zero_lr_keeps_params(self):
        rng = np.random.default_rng(6)
        feats, labels = _separable_samples(rng, n=40)
        params, fusion, _ = train_classifier(
            feats, labels, TrainConfig(epochs=3, lr=0.0, seed=0)
        )
        assert not params.weights.any() and params.bias == 0.0
        np.testing.assert_array_equal(fusion, np.full(2, 0.5))

    def test_fixed_seed_identical_weights(self):
        rng = np.random.default_rng(7)
        feats, labels = _separable_samples(rng, n=60)
        runs = [
            train_classifier(feats, labels, TrainConfig(epochs=5, seed=9))
            for _ in range(2)
        ]
        np.testing.assert_array_equal(runs[0][0].weights, runs[1][0].weights)
        assert runs[0][0].bias == runs[1][0].bias
        np.testing.assert_array_equal(runs[0][1], runs[1][1])

    def test_single_class_rejected(self):
        feats = np.zeros((10, 2, 4))
        with pytest.raises(ValueError, match="both classes"):
            train_classifier(feats, np.ones(10), TrainConfig(epochs=1))

    def test_fusion_weight_gradient_direction(self):
        # scale 0 carries the signal; its fusion weight should grow
        rng = np.random.default_rng(8)
        n, dim = 200, 8
        labels = (rng.uniform(size=n) > 0.5).astype(float)
        signal = np.where(labels[:, None], 1.0, -1.0) * np.ones(dim)
        noise = rng.normal(size=(n, dim))
        feats = np.stack([signal, noise], axis=1)
        _, fusion, _ = train_classifier(feats, labels, TrainConfig(epochs=100, seed=0))
        assert fusion[0] > fusion[1]
