"""Quality measures: PSNR, SSIM, disparity end-point error, >3px rate.

PSNR pools one MSE over all channels.  SSIM follows the common convention:
grayscale by channel mean, 11x11 Gaussian window with sigma 1.5,
C1 = (0.01*255)^2, C2 = (0.03*255)^2, averaged over fully valid windows.
The >3px rate uses a strict inequality, so an error of exactly 3.0 pixels
counts as correct.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .warp import upscale_disparity

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
_C1 = (0.01 * 255.0) ** 2
_C2 = (0.03 * 255.0) ** 2


def psnr(a, b):
    """10*log10(255^2 / MSE) in dB; identical inputs give +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _sep_filter_valid(img, k):
    n = k.size
    h, w = img.shape
    tmp = np.zeros((h, w - n + 1), np.float64)
    for i in range(n):
        tmp += k[i] * img[:, i : i + w - n + 1]
    out = np.zeros((h - n + 1, w - n + 1), np.float64)
    for i in range(n):
        out += k[i] * tmp[i : i + h - n + 1, :]
    return out


def _to_gray(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        return img.mean(axis=0)
    if img.ndim == 2:
        return img
    raise ValueError(f"expected (H, W) or (C, H, W), got {img.shape}")


def ssim(a, b):
    """Mean structural similarity over all fully valid 11x11 windows."""
    x = _to_gray(a)
    y = _to_gray(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(f"images {x.shape} are smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    k = _gaussian_window()
    mu_x = _sep_filter_valid(x, k)
    mu_y = _sep_filter_valid(y, k)
    xx = _sep_filter_valid(x * x, k) - mu_x**2
    yy = _sep_filter_valid(y * y, k) - mu_y**2
    xy = _sep_filter_valid(x * y, k) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + _C1) * (2.0 * xy + _C2)
    den = (mu_x**2 + mu_y**2 + _C1) * (xx + yy + _C2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class DisparityEval:
    epe: float
    d3px: float


def disparity_eval(pred, gt, valid_mask=None) -> DisparityEval:
    """Masked mean absolute disparity error and the fraction above 3 px."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if valid_mask is None:
        valid_mask = np.ones(pred.shape, bool)
    valid_mask = np.asarray(valid_mask, bool)
    if valid_mask.shape != pred.shape:
        raise ValueError("mask shape does not match disparity maps")
    if not valid_mask.any():
        raise ValueError("empty validity mask")
    err = np.abs(pred - gt)[valid_mask]
    return DisparityEval(epe=float(err.mean()), d3px=float((err > 3.0).mean()))


def supervised_disparity_loss(preds, gt, lam=0.01, alphas=(1.0, 0.5, 0.25)):
    """Weighted multi-scale L1 disparity loss against a full-resolution truth.

    `preds[i]` is the prediction at 1/2^i resolution; coarser maps are
    bilinearly upsampled (values rescaled with resolution) before comparison.
    """
    gt = np.asarray(gt, dtype=np.float64)
    if len(preds) != len(alphas):
        raise ValueError(f"expected {len(alphas)} scale predictions, got {len(preds)}")
    total = 0.0
    for i, (pred, alpha) in enumerate(zip(preds, alphas)):
        up = upscale_disparity(np.asarray(pred, np.float32), 1 << i)
        if up.shape != gt.shape:
            raise ValueError(
                f"scale-{i} prediction upsamples to {up.shape}, ground truth is {gt.shape}"
            )
        total += alpha * float(np.abs(up.astype(np.float64) - gt).mean())
    return lam * total
