"""Backbone tests: shape contracts, losses, gradients, training behavior."""
import numpy as np
import pytest

from swaprecon.data import SyntheticConfig, generate_synthetic_scene, rasterize_edges
from swaprecon.segnet import (
    SegNet,
    SegNetConfig,
    SideOutputs,
    TrainConfig,
    seg_loss_value,
)

from helpers import assert_grad_close, numeric_grad

TOY = SegNetConfig(side=4, levels=2, base_channels=2, swap_key=1)
SMALL = SegNetConfig(side=16, levels=2, base_channels=4, swap_key=1)


def _scene_pairs(count, seed=3, side=64):
    cfg = SyntheticConfig(seed=seed, count=count)
    pairs = []
    for i in range(count):
        img, rec = generate_synthetic_scene(cfg, i)
        mask = rasterize_edges(rec.graph(), side=side, dilation=1)
        pairs.append((img, mask.reshape(1, 1, side, side)))
    return pairs


def _downscale(pairs, side):
    # box-average images / max-pool masks down to a small training size
    out = []
    factor = 64 // side
    for img, mask in pairs:
        small_img = img.reshape(1, 1, side, factor, side, factor).mean(axis=(3, 5))
        small_mask = mask.reshape(1, 1, side, factor, side, factor).max(axis=(3, 5))
        out.append((small_img, small_mask))
    return out


class TestForward:
    def test_shape_contract(self):
        net = SegNet(SegNetConfig(), seed=0)
        x = np.random.default_rng(0).uniform(size=(2, 1, 64, 64))
        out = net.forward(x)
        assert out.prob_map.shape == (2, 1, 64, 64)
        assert [f.shape[1] for f in out.features] == [16, 32, 64, 128]
        assert [f.shape[2] for f in out.features] == [64, 32, 16, 8]

    def test_channel_side_product_constant(self):
        cfg = SegNetConfig()
        assert all(c * s == 1024 for c, s in zip(cfg.channels, cfg.sides))

    def test_swap_mode_adds_no_parameters(self):
        assert (
            SegNet(SegNetConfig(mode="swap"), seed=0).parameter_count
            == SegNet(SegNetConfig(mode="noswap"), seed=0).parameter_count
        )

    def test_swapnn_mode_adds_group_weights(self):
        cfg = SegNetConfig(mode="swapnn")
        base = SegNet(SegNetConfig(mode="swap"), seed=0).parameter_count
        extra = sum(-(-c // max(c // cfg.group_divisor, 1)) for c in cfg.channels)
        assert SegNet(cfg, seed=0).parameter_count == base + extra

    def test_forward_deterministic(self):
        net = SegNet(SegNetConfig(), seed=1)
        x = np.random.default_rng(2).uniform(size=(1, 1, 64, 64))
        np.testing.assert_array_equal(net.forward(x).prob_map, net.forward(x).prob_map)

    def test_prob_map_strictly_inside_unit_interval(self):
        net = SegNet(SegNetConfig(), seed=3)
        x = np.random.default_rng(4).uniform(size=(1, 1, 64, 64))
        prob = net.forward(x).prob_map
        assert (prob > 0).all() and (prob < 1).all()

    def test_wrong_geometry_rejected(self):
        net = SegNet(SegNetConfig(), seed=0)
        with pytest.raises(ValueError, match="expected"):
            net.forward(np.zeros((1, 1, 32, 32)))
        with pytest.raises(ValueError, match="expected"):
            net.forward(np.zeros((1, 3, 64, 64)))

    def test_swap_actually_permutes(self):
        # key 1 pairs channels in the toy width; outputs must differ
        x = np.random.default_rng(5).uniform(size=(1, 1, 4, 4))
        swap = SegNet(TOY, seed=7).forward(x).prob_map
        noswap = SegNet(
            SegNetConfig(side=4, levels=2, base_channels=2, swap_key=1, mode="noswap"),
            seed=7,
        ).forward(x).prob_map
        assert not np.array_equal(swap, noswap)


class TestLoss:
    def test_perfect_prediction_near_zero(self):
        target = np.ones((1, 1, 4, 4))
        logits = [np.full((1, 1, 4, 4), 40.0), np.full((1, 1, 2, 2), 40.0)]
        outputs = SideOutputs(None, [], logits)
        assert seg_loss_value(outputs, target) < 1e-6

    def test_uniform_half_is_ln2(self):
        rng = np.random.default_rng(6)
        target = (rng.uniform(size=(1, 1, 4, 4)) > 0.5).astype(float)
        logits = [np.zeros((1, 1, 4, 4)), np.zeros((1, 1, 2, 2))]
        outputs = SideOutputs(None, [], logits)
        assert seg_loss_value(outputs, target) == pytest.approx(np.log(2.0), rel=1e-12)

    def test_non_binary_target_rejected(self):
        net = SegNet(TOY, seed=0)
        x = np.zeros((1, 1, 4, 4))
        with pytest.raises(ValueError, match="binary"):
            net.loss_and_grads(x, np.full((1, 1, 4, 4), 0.5))

    @pytest.mark.parametrize("mode", ["swap", "noswap", "swapnn"])
    def test_toy_net_finite_difference(self, mode):
        cfg = SegNetConfig(side=4, levels=2, base_channels=2, swap_key=1, mode=mode)
        net = SegNet(cfg, seed=1)
        rng = np.random.default_rng(2)
        x = rng.uniform(size=(1, 1, 4, 4))
        target = (rng.uniform(size=(1, 1, 4, 4)) > 0.5).astype(float)
        _, grads = net.loss_and_grads(x, target)
        for arr, grad in zip(net.parameter_arrays(), grads):
            def loss_fn(values, arr=arr):
                keep = arr.copy()
                arr[:] = values
                loss, _ = net.loss_and_grads(x, target)
                arr[:] = keep
                return loss

            assert_grad_close(grad, numeric_grad(loss_fn, arr.copy()))


class TestTraining:
    def test_sanity_descent_50_images_30_epochs(self):
        pairs = _downscale(_scene_pairs(50), SMALL.side)
        net = SegNet(SMALL, seed=0)
        curve = net.train(pairs, TrainConfig(epochs=30, seed=0))
        assert curve[-1] < curve[0]

    def test_fixed_seed_bit_identical_curve(self):
        pairs = _downscale(_scene_pairs(10), SMALL.side)
        curves = []
        for _ in range(2):
            net = SegNet(SMALL, seed=5)
            curves.append(net.train(pairs, TrainConfig(epochs=3, seed=5)))
        assert curves[0] == curves[1]

    def test_zero_lr_leaves_params_bit_identical(self):
        pairs = _downscale(_scene_pairs(8), SMALL.side)
        net = SegNet(SMALL, seed=2)
        before = [a.copy() for a in net.parameter_arrays()]
        net.train(pairs, TrainConfig(epochs=1, lr=0.0, seed=0))
        for old, new in zip(before, net.parameter_arrays()):
            np.testing.assert_array_equal(old, new)

    def test_empty_dataset_rejected(self):
        net = SegNet(SMALL, seed=0)
        with pytest.raises(ValueError, match="empty"):
            net.train([], TrainConfig(epochs=1))

    def test_weight_decay_mode_changes_result(self):
        pairs = _downscale(_scene_pairs(8), SMALL.side)
        results = []
        for mode in ("lr", "weight"):
            net = SegNet(SMALL, seed=3)
            net.train(pairs, TrainConfig(epochs=2, decay=0.01, decay_mode=mode, seed=3))
            results.append(net.parameter_arrays()[0].copy())
        assert not np.array_equal(results[0], results[1])

    def test_overfit_gate_8_images_200_epochs(self):
        # capacity check on the full-size backbone: memorize 8 scenes
        pairs = _scene_pairs(8, seed=9)
        net = SegNet(SegNetConfig(), seed=0)
        net.train(pairs, TrainConfig(epochs=200, seed=0))
        correct = 0
        total = 0
        for img, mask in pairs:
            prob = net.forward(img).prob_map
            correct += ((prob > 0.5) == (mask > 0.5)).sum()
            total += mask.size
        assert correct / total > 0.97
