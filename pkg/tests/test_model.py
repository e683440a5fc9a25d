import numpy as np
import pytest

from stereocodec.errors import DigestMismatchError, FormatError, TruncatedError
from stereocodec.mixtures import (
    feature_param_channels,
    image_param_channels,
    split_feature_params,
    split_image_params,
)
from stereocodec.model import (
    CodecModel,
    ModelConfig,
    WeightStore,
    init_weights,
    load_weights,
    param_specs,
    save_weights,
    validate_store,
)


def _zero_store(config):
    return WeightStore({name: np.zeros(shape, np.float32) for name, shape, _ in param_specs(config)})


class TestConfig:
    def test_defaults(self):
        cfg = ModelConfig()
        assert (cfg.scales, cfg.feature_channels, cfg.hidden, cfg.mixture_k) == (3, 5, 64, 10)
        assert cfg.max_disparity == 64 and cfg.levels == 25

    def test_disparity_divisibility(self):
        with pytest.raises(ValueError, match="divisible"):
            ModelConfig(scales=3, max_disparity=6)

    def test_disparity_at_scale_clips_to_width(self):
        cfg = ModelConfig(scales=3, max_disparity=64)
        assert cfg.disparity_at_scale(1, 200) == 64
        assert cfg.disparity_at_scale(2, 100) == 32
        assert cfg.disparity_at_scale(3, 100) == 16
        assert cfg.disparity_at_scale(1, 16) == 16

    def test_feature_overhead_ratio_bounded(self):
        # feature subpixels relative to image subpixels stay under 0.55
        cfg = ModelConfig()
        h = w = 64
        feature = sum(cfg.feature_channels * (h >> s) * (w >> s) for s in range(1, cfg.scales + 1))
        assert feature / (3.0 * h * w) < 0.55


class TestForwardShapes:
    def test_encoder_scale_chain(self, tiny_model, tiny_config):
        h, w = 16, 24
        x = np.zeros((1, 3, h, w), np.float32)
        cur = x
        for s in range(1, tiny_config.scales + 1):
            z, cur = tiny_model.encoder_forward(cur, s)
            assert z.shape == (1, tiny_config.feature_channels, h >> s, w >> s)
            assert cur.shape == (1, tiny_config.hidden, h >> s, w >> s)

    def test_zero_weights_zero_output(self, tiny_config):
        model = CodecModel(tiny_config, _zero_store(tiny_config))
        x = np.random.default_rng(0).standard_normal((1, 3, 8, 8)).astype(np.float32)
        z, skip = model.encoder_forward(x, 1)
        assert np.all(z == 0.0) and np.all(skip == 0.0)

    def test_decoder_doubles_resolution(self, tiny_model, tiny_config):
        z = np.zeros((1, tiny_config.feature_channels, 4, 6), np.float32)
        f = tiny_model.decoder_forward(z, None, tiny_config.scales)
        assert f.shape == (1, tiny_config.hidden, 8, 12)

    def test_decoder_missing_carry_is_zero(self, tiny_model, tiny_config):
        rng = np.random.default_rng(1)
        z = rng.standard_normal((1, tiny_config.feature_channels, 4, 4)).astype(np.float32)
        zero_carry = np.zeros((1, tiny_config.hidden, 4, 4), np.float32)
        a = tiny_model.decoder_forward(z, None, 2)
        b = tiny_model.decoder_forward(z, zero_carry, 2)
        assert np.array_equal(a, b)

    def test_head_channel_counts(self, tiny_model, tiny_config):
        f = np.zeros((1, tiny_config.hidden, 8, 8), np.float32)
        img = tiny_model.prob_head_forward(f, 1, "left")
        assert img.shape[1] == image_param_channels(tiny_config.mixture_k)
        feat = tiny_model.prob_head_forward(f, 2, "right")
        assert feat.shape[1] == feature_param_channels(
            tiny_config.feature_channels, tiny_config.mixture_k
        )

    def test_zero_head_uniform_pi_bias_mu(self, tiny_config):
        model = CodecModel(tiny_config, _zero_store(tiny_config))
        f = np.random.default_rng(2).standard_normal((1, tiny_config.hidden, 4, 4)).astype(np.float32)
        params = model.prob_head_forward(f, 1, "left")[0]
        pi, mu, sr, lam = split_image_params(params, tiny_config.mixture_k)
        assert np.all(pi == 0.0) and np.all(mu == 0.0)

    def test_forward_determinism(self, tiny_model, tiny_config):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 3, 16, 16)).astype(np.float32)
        outs = []
        for _ in range(2):
            z, skip = tiny_model.encoder_forward(x, 1)
            f = tiny_model.decoder_forward(z, None, 1)
            p = tiny_model.prob_head_forward(f, 1, "left")
            outs.append(p)
        assert np.array_equal(outs[0].view(np.uint32), outs[1].view(np.uint32))


class TestWarpBlock:
    def test_identical_views_near_zero_disparity(self, tiny_model, tiny_config):
        rng = np.random.default_rng(4)
        f = rng.standard_normal((1, tiny_config.hidden, 6, 12)).astype(np.float32)
        plane = rng.standard_normal((1, 3, 6, 12)).astype(np.float32)
        warped, vol, disp = tiny_model.warp_block_forward(
            f, f, None, plane, 1, aggregation=lambda cv: cv.sum(axis=1)
        )
        d = tiny_config.disparity_at_scale(1, 12)
        interior = disp[0, :, : 12 - d]
        assert np.all(interior < 0.5)

    def test_missing_carry_allowed_at_deepest_scale(self, tiny_model, tiny_config):
        s = tiny_config.scales
        rng = np.random.default_rng(5)
        f = rng.standard_normal((1, tiny_config.hidden, 4, 8)).astype(np.float32)
        plane = rng.standard_normal((1, tiny_config.feature_channels, 4, 8)).astype(np.float32)
        warped, vol, disp = tiny_model.warp_block_forward(f, f, None, plane, s)
        assert vol.shape == (1, tiny_config.disparity_at_scale(s, 8), 4, 8)
        assert warped.shape == plane.shape

    def test_carried_volume_feeds_finer_scale(self, tiny_model, tiny_config):
        rng = np.random.default_rng(6)
        s = tiny_config.scales
        f_c = rng.standard_normal((1, tiny_config.hidden, 4, 8)).astype(np.float32)
        plane_c = rng.standard_normal((1, tiny_config.feature_channels, 4, 8)).astype(np.float32)
        _, vol_c, _ = tiny_model.warp_block_forward(f_c, f_c, None, plane_c, s)
        f_f = rng.standard_normal((1, tiny_config.hidden, 8, 16)).astype(np.float32)
        plane_f = rng.standard_normal((1, tiny_config.feature_channels, 8, 16)).astype(np.float32)
        warped, vol_f, disp = tiny_model.warp_block_forward(f_f, f_f, vol_c, plane_f, s - 1)
        assert vol_f.shape == (1, tiny_config.disparity_at_scale(s - 1, 16), 8, 16)
        assert disp.shape == (1, 8, 16)

    def test_warped_plane_bounded(self, tiny_model, tiny_config):
        rng = np.random.default_rng(7)
        f_l = rng.standard_normal((1, tiny_config.hidden, 4, 8)).astype(np.float32)
        f_r = rng.standard_normal((1, tiny_config.hidden, 4, 8)).astype(np.float32)
        plane = rng.standard_normal((1, 3, 4, 8)).astype(np.float32)
        warped, _, _ = tiny_model.warp_block_forward(f_l, f_r, None, plane, tiny_config.scales)
        assert warped.min() >= plane.min() - 1e-5
        assert warped.max() <= plane.max() + 1e-5

    def test_fusion_zero_weights(self, tiny_config):
        model = CodecModel(tiny_config, _zero_store(tiny_config))
        f = np.ones((1, tiny_config.hidden, 4, 4), np.float32)
        warped = np.ones((1, 3, 4, 4), np.float32)
        out = model.fuse_right(f, warped, 1)
        assert out.shape == (1, tiny_config.hidden, 4, 4)
        assert np.all(out == 0.0)


class TestWeightStore:
    def test_init_deterministic(self, tiny_config):
        a = init_weights(tiny_config, 11)
        b = init_weights(tiny_config, 11)
        c = init_weights(tiny_config, 12)
        assert a.digest == b.digest
        assert a.digest != c.digest

    def test_save_load_roundtrip(self, tiny_config, tmp_path):
        store = init_weights(tiny_config, 13)
        path = tmp_path / "w.l3cw"
        digest = save_weights(store, tiny_config, path)
        config2, store2 = load_weights(path)
        assert config2 == tiny_config
        assert store2.digest == digest == store.digest
        for name in store.names():
            assert np.array_equal(store[name], store2[name])

    def test_truncated_file(self, tiny_config, tmp_path):
        store = init_weights(tiny_config, 14)
        path = tmp_path / "w.l3cw"
        save_weights(store, tiny_config, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises((TruncatedError, DigestMismatchError)):
            load_weights(path)

    def test_flipped_byte_changes_digest(self, tiny_config, tmp_path):
        store = init_weights(tiny_config, 15)
        path = tmp_path / "w.l3cw"
        save_weights(store, tiny_config, path)
        raw = bytearray(path.read_bytes())
        raw[100] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(DigestMismatchError):
            load_weights(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "w.l3cw"
        path.write_bytes(b"XXXX" + b"\x00" * 64)
        with pytest.raises(FormatError):
            load_weights(path)

    def test_missing_parameter_rejected(self, tiny_config):
        specs = param_specs(tiny_config)
        tensors = {name: np.zeros(shape, np.float32) for name, shape, _ in specs[:-2]}
        with pytest.raises(FormatError, match="missing"):
            validate_store(tiny_config, WeightStore(tensors))

    def test_wrong_shape_rejected(self, tiny_config):
        tensors = {name: np.zeros(shape, np.float32) for name, shape, _ in param_specs(tiny_config)}
        first = next(iter(tensors))
        tensors[first] = np.zeros((1, 1, 1, 1), np.float32)
        with pytest.raises(FormatError, match="shape"):
            validate_store(tiny_config, WeightStore(tensors))


def test_random_init_yields_valid_pmfs(tiny_model, tiny_config):
    # run the decode-side stack on a random feature plane and check the PMFs
    from stereocodec.mixtures import pixel_pmf_feature, MixtureParams

    rng = np.random.default_rng(16)
    z = rng.standard_normal((1, tiny_config.feature_channels, 4, 4)).astype(np.float32)
    f = tiny_model.decoder_forward(z, None, tiny_config.scales)
    params = tiny_model.prob_head_forward(f, tiny_config.scales, "left")[0]
    pi, mu, sr = split_feature_params(params, tiny_config.feature_channels, tiny_config.mixture_k)
    for y in range(params.shape[1]):
        for x in range(params.shape[2]):
            p = pixel_pmf_feature(MixtureParams(pi[:, :, y, x], mu[:, :, y, x], sr[:, :, y, x]))
            assert np.allclose(p.sum(axis=1), 1.0, atol=1e-6)
