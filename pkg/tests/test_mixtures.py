import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stereocodec.mixtures import (
    CDF_TOTAL,
    MixtureParams,
    feature_plane_bits,
    image_plane_bits,
    logistic_bin,
    pixel_pmf_feature,
    pixel_pmf_image,
    pmf_to_cdf,
    split_feature_params,
    split_image_params,
    uniform_cdf,
    validate_cdf,
)
from stereocodec.quantizer import default_levels


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class TestLogisticBin:
    def test_closed_form_center(self):
        p = logistic_bin(0.0, 0.0, 1.0, 1.0)
        assert p == pytest.approx(_sigmoid(0.5) - _sigmoid(-0.5), abs=1e-12)
        assert p == pytest.approx(0.2449187, abs=1e-6)

    def test_256_bins_telescope_to_one(self):
        total = 0.0
        for v in range(256):
            total += logistic_bin(float(v), 93.7, 11.3, 1.0, lowest=v == 0, highest=v == 255)
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_edge_rule_saturates(self):
        assert logistic_bin(255.0, 1e9, 1.0, 1.0, highest=True) == pytest.approx(1.0, abs=1e-12)
        assert logistic_bin(0.0, 1e9, 1.0, 1.0, lowest=True) == pytest.approx(0.0, abs=1e-12)


def _image_params(rng, K, lam_zero=False):
    lam = np.zeros((3, K)) if lam_zero else rng.normal(0, 0.3, (3, K))
    return MixtureParams(
        weight_logits=rng.normal(0, 1, (3, K)),
        means=rng.normal(0, 0.5, (3, K)),
        log_scales=rng.normal(0, 1, (3, K)),
        auto_coeffs=lam,
    )


class TestImagePmf:
    def test_k1_reduces_to_single_logistic(self):
        rng = np.random.default_rng(0)
        params = _image_params(rng, 1, lam_zero=True)
        pmfs = pixel_pmf_image(params, (10, 20))
        for ch in range(3):
            mu = 127.5 * (params.means[ch, 0] + 1.0)
            sig = 127.5 * np.exp(np.clip(params.log_scales[ch, 0], -7, 7))
            for v in (0, 1, 128, 254, 255):
                ref = logistic_bin(float(v), mu, sig, 1.0, lowest=v == 0, highest=v == 255)
                assert pmfs[ch, v] == pytest.approx(float(ref), abs=1e-12)

    def test_k2_equal_weights_average(self):
        rng = np.random.default_rng(1)
        base = _image_params(rng, 2, lam_zero=True)
        params = MixtureParams(
            weight_logits=np.zeros((3, 2)),
            means=base.means,
            log_scales=base.log_scales,
            auto_coeffs=np.zeros((3, 2)),
        )
        mixed = pixel_pmf_image(params, (0, 0))
        for k in (0, 1):
            single = MixtureParams(
                weight_logits=np.zeros((3, 1)),
                means=base.means[:, k : k + 1],
                log_scales=base.log_scales[:, k : k + 1],
                auto_coeffs=np.zeros((3, 1)),
            )
            if k == 0:
                acc = pixel_pmf_image(single, (0, 0))
            else:
                acc += pixel_pmf_image(single, (0, 0))
        assert np.allclose(mixed, acc / 2.0, atol=1e-12)

    def test_sums_to_one(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            params = _image_params(rng, 4)
            pmfs = pixel_pmf_image(params, (rng.integers(0, 256), rng.integers(0, 256)))
            assert np.allclose(pmfs.sum(axis=1), 1.0, atol=1e-6)

    def test_autoregression_shifts_mean(self):
        rng = np.random.default_rng(3)
        params = _image_params(rng, 1)
        a = pixel_pmf_image(params, (0, 0))
        b = pixel_pmf_image(params, (255, 0))
        # channel 1 never depends on context, channel 2 does unless alpha == 0
        assert np.allclose(a[0], b[0], atol=1e-15)
        assert not np.allclose(a[1], b[1], atol=1e-9)

    def test_missing_context_rejected(self):
        rng = np.random.default_rng(4)
        params = _image_params(rng, 2)
        with pytest.raises(ValueError, match="decoded"):
            pixel_pmf_image(params, (7,))


class TestFeaturePmf:
    def test_mode_at_center_level(self):
        params = MixtureParams(
            weight_logits=np.zeros((5, 1)),
            means=np.full((5, 1), 0.0),
            log_scales=np.full((5, 1), -5.0),
        )
        pmfs = pixel_pmf_feature(params)
        assert pmfs.shape == (5, 25)
        assert np.all(pmfs.argmax(axis=1) == 12)  # level 12 is 0.0

    def test_sums_to_one(self):
        rng = np.random.default_rng(5)
        params = MixtureParams(
            weight_logits=rng.normal(0, 2, (5, 3)),
            means=rng.normal(0, 1, (5, 3)),
            log_scales=rng.normal(0, 2, (5, 3)),
        )
        assert np.allclose(pixel_pmf_feature(params).sum(axis=1), 1.0, atol=1e-6)

    def test_broad_scale_limit_masses_the_extreme_bins(self):
        # As sigma grows, interior bins flatten toward zero and the open-ended
        # edge bins absorb the two tails (1/2 each); the PMF is *not* uniform.
        params = MixtureParams(
            weight_logits=np.zeros((1, 1)),
            means=np.zeros((1, 1)),
            log_scales=np.full((1, 1), 7.0),
        )
        pmf = pixel_pmf_feature(params)[0]
        assert pmf[0] == pytest.approx(0.5, abs=1e-3)
        assert pmf[-1] == pytest.approx(0.5, abs=1e-3)
        assert np.all(pmf[1:-1] < 1e-3)
        assert pmf.sum() == pytest.approx(1.0, abs=1e-9)


class TestCdfTables:
    def test_degenerate_pmf(self):
        cdf = pmf_to_cdf(np.array([1.0, 0.0, 0.0, 0.0]))
        assert np.array_equal(np.diff(cdf.astype(np.int64)), [65533, 1, 1, 1])

    def test_uniform_256_pmf(self):
        cdf = pmf_to_cdf(np.full(256, 1.0 / 256.0))
        assert np.all(np.diff(cdf.astype(np.int64)) == 256)

    def test_total_always_exact(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            w = rng.random(int(rng.integers(2, 257))) + 1e-9
            cdf = pmf_to_cdf(w / w.sum())
            assert validate_cdf(cdf)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(1e-9, 1.0), min_size=2, max_size=256), st.booleans())
    def test_cdf_property(self, weights, spike):
        w = np.asarray(weights)
        if spike:
            w[0] = 1e6  # heavily skewed table
        cdf = pmf_to_cdf(w / w.sum())
        assert cdf[0] == 0 and int(cdf[-1]) == CDF_TOTAL
        assert np.all(np.diff(cdf.astype(np.int64)) >= 1)

    def test_invalid_pmf_rejected(self):
        with pytest.raises(ValueError, match="sums"):
            pmf_to_cdf(np.array([0.7, 0.2]))

    def test_uniform_cdf_256(self):
        assert np.all(np.diff(uniform_cdf(256).astype(np.int64)) == 256)

    def test_uniform_cdf_25_remainder(self):
        counts = np.diff(uniform_cdf(25).astype(np.int64))
        assert np.all(counts[:11] == 2622)
        assert np.all(counts[11:] == 2621)
        assert counts.sum() == CDF_TOTAL

    def test_uniform_roundtrip(self):
        from stereocodec.rangecoder import decode_symbols, encode_symbols

        rng = np.random.default_rng(7)
        cdf = uniform_cdf(25)
        syms = rng.integers(0, 25, 300)
        assert np.array_equal(decode_symbols(encode_symbols(syms, [cdf] * 300), [cdf] * 300), syms)


class TestPlaneBits:
    def test_image_bits_match_pixel_pmf(self):
        rng = np.random.default_rng(8)
        K, h, w = 3, 2, 2
        raw = rng.normal(0, 1, (12 * K, h, w)).astype(np.float32)
        sym = rng.integers(0, 256, (3, h, w))
        bits = image_plane_bits(*split_image_params(raw, K), sym)
        pi, mu, sr, lam = split_image_params(raw, K)
        for y in range(h):
            for x in range(w):
                params = MixtureParams(pi[:, :, y, x], mu[:, :, y, x], sr[:, :, y, x], lam[:, :, y, x])
                pmfs = pixel_pmf_image(params, (sym[0, y, x], sym[1, y, x]))
                for ch in range(3):
                    assert bits[ch, y, x] == pytest.approx(-np.log2(pmfs[ch, sym[ch, y, x]]), rel=1e-9)

    def test_feature_bits_match_pixel_pmf(self):
        rng = np.random.default_rng(9)
        C, K, h, w = 4, 2, 2, 3
        raw = rng.normal(0, 1, (3 * C * K, h, w)).astype(np.float32)
        sym = rng.integers(0, 25, (C, h, w))
        bits = feature_plane_bits(*split_feature_params(raw, C, K), sym, default_levels())
        pi, mu, sr = split_feature_params(raw, C, K)
        for y in range(h):
            for x in range(w):
                params = MixtureParams(pi[:, :, y, x], mu[:, :, y, x], sr[:, :, y, x])
                pmfs = pixel_pmf_feature(params)
                for ch in range(C):
                    assert bits[ch, y, x] == pytest.approx(-np.log2(pmfs[ch, sym[ch, y, x]]), rel=1e-9)


def test_sampled_cross_entropy_matches_entropy():
    # coding cost of samples drawn from the model's own PMF averages to H(p)
    rng = np.random.default_rng(10)
    params = MixtureParams(
        weight_logits=rng.normal(0, 1, (1, 3)),
        means=rng.normal(0, 0.4, (1, 3)),
        log_scales=np.full((1, 3), -1.0),
    )
    pmf = pixel_pmf_image(
        MixtureParams(params.weight_logits.repeat(3, 0)[:3], params.means.repeat(3, 0)[:3],
                      params.log_scales.repeat(3, 0)[:3], np.zeros((3, 3))),
        (0, 0),
    )[0]
    entropy = float(-(pmf * np.log2(np.maximum(pmf, 1e-300))).sum())
    samples = rng.choice(256, size=200_000, p=pmf / pmf.sum())
    measured = float(-np.log2(pmf[samples]).mean())
    assert measured == pytest.approx(entropy, rel=0.02)
