import math

import numpy as np
import pytest

from stereocodec.metrics import DisparityEval, disparity_eval, psnr, ssim, supervised_disparity_loss


class TestPsnr:
    def test_identical_is_inf(self):
        img = np.random.default_rng(0).integers(0, 256, (3, 8, 8))
        assert psnr(img, img) == math.inf

    def test_full_scale_error_is_zero_db(self):
        a = np.zeros((3, 4, 4))
        b = np.full((3, 4, 4), 255)
        assert psnr(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_mse_one(self):
        a = np.zeros((3, 10, 10))
        b = np.ones((3, 10, 10))
        assert psnr(a, b) == pytest.approx(10 * math.log10(255.0**2), abs=1e-9)
        assert psnr(a, b) == pytest.approx(48.1308, abs=1e-3)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a = rng.integers(0, 256, (3, 6, 6))
        b = rng.integers(0, 256, (3, 6, 6))
        assert psnr(a, b) == psnr(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


class TestSsim:
    def test_identical_is_one(self):
        img = np.random.default_rng(2).integers(0, 256, (3, 16, 16))
        assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)

    def test_independent_noise_near_zero(self):
        rng = np.random.default_rng(3)
        a = rng.integers(0, 256, (3, 64, 64))
        b = rng.integers(0, 256, (3, 64, 64))
        assert abs(ssim(a, b)) < 0.1

    def test_constant_offset_closed_form(self):
        c = 100.0
        a = np.full((1, 16, 16), c)
        b = np.full((1, 16, 16), c + 1.0)
        c1 = (0.01 * 255) ** 2
        # scalar formula: means c and c+1, all variances zero
        expected = (2 * c * (c + 1) + c1) / (c**2 + (c + 1) ** 2 + c1)
        assert ssim(a, b) == pytest.approx(expected, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        a = rng.integers(0, 256, (3, 20, 20))
        b = rng.integers(0, 256, (3, 20, 20))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_too_small_rejected(self):
        with pytest.raises(ValueError, match="window"):
            ssim(np.zeros((3, 8, 8)), np.zeros((3, 8, 8)))


class TestDisparityEval:
    def test_exact_prediction(self):
        gt = np.random.default_rng(5).random((6, 6)) * 10
        res = disparity_eval(gt, gt)
        assert res == DisparityEval(0.0, 0.0)

    def test_uniform_offset(self):
        gt = np.zeros((4, 4))
        res = disparity_eval(gt + 4.0, gt)
        assert res.epe == pytest.approx(4.0)
        assert res.d3px == pytest.approx(1.0)

    def test_half_and_half(self):
        gt = np.zeros((2, 4))
        pred = np.zeros((2, 4))
        pred[0] = 2.0
        pred[1] = 6.0
        res = disparity_eval(pred, gt)
        assert res.epe == pytest.approx(4.0)
        assert res.d3px == pytest.approx(0.5)

    def test_boundary_counts_as_correct(self):
        gt = np.zeros((2, 2))
        res = disparity_eval(gt + 3.0, gt)
        assert res.d3px == 0.0

    def test_translation_covariance(self):
        rng = np.random.default_rng(6)
        pred = rng.random((5, 5)) * 8
        gt = rng.random((5, 5)) * 8
        a = disparity_eval(pred, gt)
        b = disparity_eval(pred + 11.0, gt + 11.0)
        assert a.epe == pytest.approx(b.epe, abs=1e-12)
        assert a.d3px == b.d3px

    def test_mask(self):
        gt = np.zeros((2, 2))
        pred = np.array([[10.0, 0.0], [0.0, 0.0]])
        mask = np.array([[False, True], [True, True]])
        res = disparity_eval(pred, gt, mask)
        assert res.epe == 0.0
        with pytest.raises(ValueError, match="mask"):
            disparity_eval(pred, gt, np.zeros((2, 2), bool))


class TestSupervisedLoss:
    def _preds(self, gt, offset=0.0):
        return [
            gt + offset,
            np.full((gt.shape[0] // 2, gt.shape[1] // 2), offset / 2.0),
            np.full((gt.shape[0] // 4, gt.shape[1] // 4), offset / 4.0),
        ]

    def test_zero_when_exact(self):
        gt = np.zeros((8, 8))
        preds = [gt, np.zeros((4, 4)), np.zeros((2, 2))]
        assert supervised_disparity_loss(preds, gt) == 0.0

    def test_plugin_arithmetic(self):
        # every scale off by one pixel at full resolution:
        # 0.01 * (1.0 + 0.5 + 0.25) = 0.0175
        gt = np.zeros((8, 8), np.float64)
        preds = [
            np.ones((8, 8), np.float64),
            np.full((4, 4), 0.5, np.float64),  # upsampled and doubled -> 1.0
            np.full((2, 2), 0.25, np.float64),  # upsampled and quadrupled -> 1.0
        ]
        loss = supervised_disparity_loss(preds, gt, lam=0.01, alphas=(1.0, 0.5, 0.25))
        assert loss == pytest.approx(0.0175, abs=1e-12)

    def test_linear_in_lambda(self):
        rng = np.random.default_rng(7)
        gt = rng.random((8, 8))
        preds = [rng.random((8, 8)), rng.random((4, 4)), rng.random((2, 2))]
        a = supervised_disparity_loss(preds, gt, lam=0.01)
        b = supervised_disparity_loss(preds, gt, lam=0.02)
        assert b == pytest.approx(2 * a, rel=1e-12)

    def test_shape_mismatch(self):
        gt = np.zeros((8, 8))
        with pytest.raises(ValueError, match="upsamples"):
            supervised_disparity_loss([gt, np.zeros((3, 3)), np.zeros((2, 2))], gt)
