"""Hypercolumn network tests: architecture bookkeeping, gradients, serialization."""

import numpy as np
import pytest

from dermfeat import model
from dermfeat.gradcheck import gradcheck
from dermfeat.loss import f1_loss, f1_loss_grad
from dermfeat.model import (EncoderConfig, ModelParams, check_params,
                            flatten_params, forward, init_params, load_params,
                            param_shapes, save_params, unflatten_params)

TINY = EncoderConfig(channels=(2, 2), in_channels=1)


def zero_params(cfg: EncoderConfig) -> ModelParams:
    p = init_params(cfg, 0)
    for a in p.arrays():
        a[...] = 0.0
    return p


class TestInit:
    def test_deterministic_for_fixed_seed(self):
        a = init_params(EncoderConfig(), 7)
        b = init_params(EncoderConfig(), 7)
        for x, y in zip(a.arrays(), b.arrays()):
            np.testing.assert_array_equal(x, y)

    def test_biases_zero(self):
        p = init_params(EncoderConfig(), 3)
        for b in p.block_biases + [p.head_bias]:
            assert (b == 0.0).all()

    def test_uniform_bound_stddev(self):
        # 64x32x3x3 fan-in 288: uniform [-a,a] has stddev a/sqrt(3).
        cfg = EncoderConfig(channels=(32, 64), in_channels=3)
        p = init_params(cfg, 11)
        w = p.block_weights[1]
        assert w.shape == (64, 32, 3, 3)
        a = np.sqrt(6.0 / (32 * 3 * 3))
        assert abs(w.std() - a / np.sqrt(3)) < 0.2 * (a / np.sqrt(3))
        assert np.abs(w).max() <= a

    def test_different_seeds_differ(self):
        a = init_params(TINY, 0)
        b = init_params(TINY, 1)
        assert not np.array_equal(a.block_weights[0], b.block_weights[0])


class TestForward:
    def test_zero_params_give_half_everywhere(self):
        probs, _ = forward(zero_params(TINY), TINY, np.ones((1, 8, 8)))
        np.testing.assert_array_equal(probs, np.full((4, 8, 8), 0.5))

    def test_block1_tap_full_resolution(self):
        cfg = EncoderConfig(channels=(8, 16, 32), in_channels=3)
        rng = np.random.default_rng(50)
        _, cache = forward(init_params(cfg, 0), cfg, rng.random((3, 16, 16)))
        assert cache.taps[0].shape == (8, 16, 16)
        assert cache.taps[1].shape == (16, 8, 8)
        assert cache.taps[2].shape == (32, 4, 4)

    def test_hypercolumn_channel_count(self):
        cfg = EncoderConfig()
        assert cfg.hypercolumn_channels == 8 + 16 + 32 + 64 + 64 == 184
        rng = np.random.default_rng(51)
        _, cache = forward(init_params(cfg, 0), cfg, rng.random((3, 16, 16)))
        assert cache.hypercolumn.shape == (184, 16, 16)

    def test_output_shape_tracks_input(self):
        params = init_params(TINY, 2)
        for hw in (8, 12, 20):
            probs, _ = forward(params, TINY, np.random.default_rng(hw)
                               .random((1, hw, hw)))
            assert probs.shape == (4, hw, hw)

    def test_probs_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(52)
        probs, _ = forward(init_params(TINY, 3), TINY, rng.random((1, 8, 8)))
        assert (probs > 0.0).all() and (probs < 1.0).all()

    def test_deterministic(self):
        rng = np.random.default_rng(53)
        image = rng.random((1, 8, 8))
        params = init_params(TINY, 4)
        a, _ = forward(params, TINY, image)
        b, _ = forward(params, TINY, image)
        np.testing.assert_array_equal(a, b)

    def test_rejects_indivisible_size(self):
        with pytest.raises(ValueError, match="divisible by 2"):
            forward(init_params(TINY, 0), TINY, np.zeros((1, 7, 8)))

    def test_output_shape_at_protocol_resolution(self):
        # The full-size default encoder runs at 336x336 without code change.
        cfg = EncoderConfig()
        probs, _ = forward(init_params(cfg, 0), cfg,
                           np.random.default_rng(0).random((3, 336, 336)))
        assert probs.shape == (4, 336, 336)

    def test_overlapping_detections_representable(self):
        # A constructed head can push two classes above 0.5 at one pixel.
        params = zero_params(TINY)
        for b in params.block_biases:
            b[...] = 1.0
        params.head_bias[...] = [2.0, 2.0, -2.0, -2.0]
        probs, _ = forward(params, TINY, np.zeros((1, 8, 8)))
        assert probs[0, 0, 0] > 0.5 and probs[1, 0, 0] > 0.5
        assert probs[2, 0, 0] < 0.5 and probs[3, 0, 0] < 0.5


class TestBackward:
    def test_zero_grad_probs_gives_zero_grads(self):
        rng = np.random.default_rng(54)
        params = init_params(TINY, 5)
        probs, cache = forward(params, TINY, rng.random((1, 8, 8)))
        grads, g_img = model.backward(params, TINY, cache, np.zeros_like(probs))
        for g in grads.arrays():
            assert (g == 0.0).all()
        assert (g_img == 0.0).all()

    def test_head_bias_grad_is_per_class_sigmoid_chain_sum(self):
        rng = np.random.default_rng(55)
        params = init_params(TINY, 6)
        image = rng.random((1, 8, 8))
        probs, cache = forward(params, TINY, image)
        grad_probs = rng.normal(size=probs.shape)
        grads, _ = model.backward(params, TINY, cache, grad_probs)
        expected = (grad_probs * probs * (1.0 - probs)).sum(axis=(1, 2))
        np.testing.assert_allclose(grads.head_bias, expected, rtol=1e-12)

    def test_rejects_stale_cache_shape(self):
        rng = np.random.default_rng(56)
        params = init_params(TINY, 7)
        _, cache = forward(params, TINY, rng.random((1, 8, 8)))
        with pytest.raises(ValueError, match="grad_probs"):
            model.backward(params, TINY, cache, np.zeros((4, 6, 6)))

    def test_end_to_end_loss_gradient(self):
        rng = np.random.default_rng(57)
        params = init_params(TINY, 8)
        for b in params.block_biases:
            b += 0.2  # keep pre-activations off the relu kink
        image = rng.random((1, 8, 8))
        truth = (rng.random((4, 8, 8)) < 0.4).astype(np.float64)

        probs, cache = forward(params, TINY, image)
        grads, g_img = model.backward(params, TINY, cache,
                                      f1_loss_grad(probs, truth))

        def loss_of_params(vec):
            p = unflatten_params(TINY, vec)
            return f1_loss(forward(p, TINY, image)[0], truth)[0]

        rep = gradcheck(loss_of_params, flatten_params(params),
                        flatten_params(grads), step=1e-5, tolerance=1e-5)
        assert rep.passed, rep.summary()

        def loss_of_image(img):
            return f1_loss(forward(params, TINY, img)[0], truth)[0]

        rep = gradcheck(loss_of_image, image, g_img, step=1e-5, tolerance=1e-5)
        assert rep.passed, rep.summary()


class TestFlatten:
    def test_round_trip(self):
        params = init_params(EncoderConfig(channels=(3, 5), in_channels=2), 9)
        vec = flatten_params(params)
        back = unflatten_params(EncoderConfig(channels=(3, 5), in_channels=2), vec)
        for a, b in zip(params.arrays(), back.arrays()):
            np.testing.assert_array_equal(a, b)

    def test_shapes_cover_all_tensors(self):
        cfg = EncoderConfig(channels=(3, 5), in_channels=2)
        shapes = param_shapes(cfg)
        assert shapes == [s.shape for s in init_params(cfg, 0).arrays()]


class TestSerialization:
    def test_round_trip_bit_identical(self, tmp_path):
        cfg = EncoderConfig(channels=(4, 8), in_channels=3)
        params = init_params(cfg, 10)
        path = tmp_path / "weights.hfcn"
        save_params(params, cfg, path)
        loaded, loaded_cfg = load_params(path)
        assert loaded_cfg == cfg
        for a, b in zip(params.arrays(), loaded.arrays()):
            np.testing.assert_array_equal(a, b)

    def test_rejects_corrupted_magic(self, tmp_path):
        cfg = EncoderConfig(channels=(2,), in_channels=1)
        path = tmp_path / "weights.hfcn"
        save_params(init_params(cfg, 0), cfg, path)
        data = bytearray(path.read_bytes())
        data[0] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(ValueError, match="magic"):
            load_params(path)

    def test_rejects_truncated_payload(self, tmp_path):
        cfg = EncoderConfig(channels=(2,), in_channels=1)
        path = tmp_path / "weights.hfcn"
        save_params(init_params(cfg, 0), cfg, path)
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(ValueError, match="truncated"):
            load_params(path)

    def test_rejects_block_count_mismatch_naming_block(self, tmp_path):
        small = EncoderConfig(channels=(8, 16), in_channels=3)
        big = EncoderConfig(channels=(8, 16, 32), in_channels=3)
        path = tmp_path / "weights.hfcn"
        save_params(init_params(small, 0), small, path)
        with pytest.raises(ValueError, match="block 3"):
            load_params(path, cfg=big)

    def test_check_params_names_offending_block(self):
        cfg = EncoderConfig(channels=(2, 3), in_channels=1)
        params = init_params(cfg, 0)
        params.block_weights[1] = np.zeros((3, 9, 3, 3))
        with pytest.raises(ValueError, match="block 2"):
            check_params(params, cfg)
