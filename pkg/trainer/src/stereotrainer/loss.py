"""Differentiable coding-cost terms matching the codec's conventions.

Bit counts use the same domain mapping as the codec: image means live in
[-1, 1] units and map to the symbol axis by 127.5*(mu+1) with sigma scaled by
127.5; sigma = exp(clamp(raw, -7, 7)); autoregression coefficients multiply
previously decoded symbols normalized to [-1, 1]; the lowest/highest bin of
every grid is open ended.  Feature likelihoods are evaluated at the
straight-through values, so gradients reach the encoders through both the
distribution parameters and the quantized targets.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F

LOG2E = math.log2(math.e)
FEATURE_HALF_BIN = 1.0 / 24.0
_MIN_PROB = 1e-30


def _split_image_params(raw, k):
    n, _, h, w = raw.shape
    g = raw.view(n, 4, 3, k, h, w)
    return g[:, 0], g[:, 1], g[:, 2], g[:, 3]


def _split_feature_params(raw, c, k):
    n, _, h, w = raw.shape
    g = raw.view(n, 3, c, k, h, w)
    return g[:, 0], g[:, 1], g[:, 2]


def _mixture_bin_bits(pi_logits, mu, sigma, z, half_bin, lo_mask, hi_mask):
    """-log2 of the mixture mass in the bin around z; all (N, C, K, H, W).

    Computed in float64: the bin mass is a difference of two sigmoids that
    both saturate on confident predictions, and float32 cancellation there
    would poison the bit counts the codec parity check compares.
    """
    pi = torch.softmax(pi_logits.to(torch.float64), dim=2)
    mu = mu.to(torch.float64)
    sigma = sigma.to(torch.float64)
    z = z.to(torch.float64)
    upper = torch.sigmoid((z + half_bin - mu) / sigma)
    lower = torch.sigmoid((z - half_bin - mu) / sigma)
    upper = torch.where(hi_mask, torch.ones_like(upper), upper)
    lower = torch.where(lo_mask, torch.zeros_like(lower), lower)
    p = (pi * (upper - lower)).sum(dim=2)
    return -torch.log(p.clamp_min(_MIN_PROB)) * LOG2E


def image_plane_bits(params_raw, symbols_u8, cfg):
    """Per-subpixel bits of an image plane under the RGB-autoregressive mixture."""
    k = cfg.mixture_k
    pi_logits, mu, sraw, lam = _split_image_params(params_raw, k)
    sym = symbols_u8.to(torch.float32)
    x1n = (sym[:, 0] / 127.5 - 1.0).unsqueeze(1)
    x2n = (sym[:, 1] / 127.5 - 1.0).unsqueeze(1)
    mu_n = torch.stack(
        [
            mu[:, 0],
            mu[:, 1] + lam[:, 0] * x1n,
            mu[:, 2] + lam[:, 1] * x1n + lam[:, 2] * x2n,
        ],
        dim=1,
    )
    mu_s = 127.5 * (mu_n + 1.0)
    sig_s = 127.5 * torch.exp(sraw.clamp(-7.0, 7.0))
    z = sym.unsqueeze(2)
    lo = (sym == 0).unsqueeze(2)
    hi = (sym == 255).unsqueeze(2)
    return _mixture_bin_bits(pi_logits, mu_s, sig_s, z, 0.5, lo, hi)


def feature_plane_bits(params_raw, z_values, z_indices, levels, cfg):
    """Per-symbol bits of a quantized feature plane (no autoregression)."""
    pi_logits, mu, sraw = _split_feature_params(params_raw, cfg.feature_channels, cfg.mixture_k)
    sig = torch.exp(sraw.clamp(-7.0, 7.0))
    z = z_values.unsqueeze(2)
    lo = (z_indices == 0).unsqueeze(2)
    hi = (z_indices == cfg.levels - 1).unsqueeze(2)
    return _mixture_bin_bits(pi_logits, mu, sig, z, FEATURE_HALF_BIN, lo, hi)


def uniform_plane_bits(indices, alphabet):
    """Exact cost of the integerized uniform table the codec uses.

    65536 counts split as evenly as possible; the division remainder goes to
    the first symbols, so early symbols are marginally cheaper.
    """
    total = 1 << 16
    base = total // alphabet
    rem = total - base * alphabet
    cheap = 16.0 - math.log2(base + 1)
    dear = 16.0 - math.log2(base)
    bits = torch.where(indices < rem, torch.full_like(indices, 1.0, dtype=torch.float32) * cheap,
                       torch.full_like(indices, 1.0, dtype=torch.float32) * dear)
    return bits


def upscale_disparity(disparity, factor):
    """Bilinear upsample and rescale values (pixels scale with resolution)."""
    if factor == 1:
        return disparity
    up = F.interpolate(disparity.unsqueeze(1), scale_factor=factor, mode="bilinear",
                       align_corners=False)
    return up.squeeze(1) * factor


def supervised_disparity_term(disparities_coarse_to_fine, gt, lam=0.01, alphas=(1.0, 0.5, 0.25)):
    """Multi-scale L1 disparity loss against full-resolution ground truth.

    `disparities_coarse_to_fine` is the pipeline's warp-scale order (deepest
    first); entry for warp scale s upsamples by 2^(s-1).
    """
    fine_to_coarse = list(reversed(disparities_coarse_to_fine))
    total = None
    for i, (alpha, pred) in enumerate(zip(alphas, fine_to_coarse)):
        up = upscale_disparity(pred, 1 << i)
        term = alpha * (up - gt).abs().mean()
        total = term if total is None else total + term
    return lam * total
