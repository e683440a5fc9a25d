"""Analytic gradients against central finite differences (float64)."""

import numpy as np
import pytest
import torch

from stereotrainer.loss import feature_plane_bits, image_plane_bits
from stereotrainer.model import ArchConfig
from stereotrainer.quant import level_grid, quantize_hard, quantize_soft, quantize_ste


def _fd_grad(fn, x, eps=1e-6):
    g = torch.zeros_like(x)
    flat = x.view(-1)
    gf = g.view(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        hi = fn(x).item()
        flat[i] = orig - eps
        lo = fn(x).item()
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * eps)
    return g


def test_ste_forward_is_hard_quantization():
    levels = level_grid()
    z = torch.tensor([[0.9, -0.97], [0.0, 1.4]], dtype=torch.float32)
    ste, idx = quantize_ste(z, levels)
    hard, idx_h = quantize_hard(z, levels)
    assert torch.equal(ste, hard)
    assert torch.equal(idx, idx_h)
    assert abs(float(hard[0, 0]) - 11.0 / 12.0) < 1e-6


def test_ste_surrogate_gradient_matches_fd():
    # the STE's documented backward is the soft assignment; check the soft
    # path's autograd against central differences on a 2x2 toy tensor
    levels = level_grid().to(torch.float64)
    cfg = ArchConfig(scales=1, feature_channels=1, hidden=4, mixture_k=2,
                     max_disparity=1, softness=2.0)
    torch.manual_seed(0)
    params = torch.randn(1, 3 * cfg.mixture_k, 2, 2, dtype=torch.float64)

    def soft_loss(z_tilde):
        z = quantize_soft(z_tilde, levels, cfg.softness)
        idx = quantize_hard(z_tilde, levels)[1]
        bits = feature_plane_bits(params, z.unsqueeze(0).unsqueeze(0),
                                  idx.unsqueeze(0).unsqueeze(0), levels, cfg)
        return bits.sum()

    z_tilde = torch.tensor([[0.31, -0.52], [0.07, 0.88]], dtype=torch.float64,
                           requires_grad=True)
    loss = soft_loss(z_tilde)
    (analytic,) = torch.autograd.grad(loss, z_tilde)
    with torch.no_grad():
        fd = _fd_grad(lambda t: soft_loss(t.detach()), z_tilde.detach().clone())
    denom = fd.abs().clamp_min(1e-4)
    assert float(((analytic - fd).abs() / denom).max()) < 1e-3


def test_ste_composite_gradient_flows():
    # through quantize_ste the gradient equals the soft path's gradient
    levels = level_grid().to(torch.float64)
    z = torch.tensor([[0.31, -0.52]], dtype=torch.float64, requires_grad=True)
    out, _ = quantize_ste(z, levels, softness=3.0)
    out.sum().backward()
    z2 = z.detach().clone().requires_grad_(True)
    quantize_soft(z2, levels, softness=3.0).sum().backward()
    assert torch.allclose(z.grad, z2.grad, atol=1e-12)
    assert float(z.grad.abs().max()) > 0


def test_image_mixture_gradient_matches_fd():
    cfg = ArchConfig(scales=1, feature_channels=1, hidden=4, mixture_k=2, max_disparity=1)
    torch.manual_seed(1)
    sym = torch.randint(0, 256, (1, 3, 2, 2))

    def loss_of(raw):
        return image_plane_bits(raw, sym, cfg).sum()

    raw = (0.3 * torch.randn(1, 12 * cfg.mixture_k, 2, 2, dtype=torch.float64)).requires_grad_(True)
    (analytic,) = torch.autograd.grad(loss_of(raw), raw)
    with torch.no_grad():
        fd = _fd_grad(lambda t: loss_of(t.detach()), raw.detach().clone())
    denom = fd.abs().clamp_min(1e-4)
    assert float(((analytic - fd).abs() / denom).max()) < 1e-3


def test_soft_quantizer_tracks_hard_at_high_softness():
    levels = level_grid()
    z = torch.linspace(-0.99, 0.99, 41)
    hard, _ = quantize_hard(z, levels)
    soft = quantize_soft(z, levels, softness=1e4)
    mids = (levels[:-1] + levels[1:]) / 2
    away = (z.unsqueeze(-1) - mids).abs().min(dim=-1).values > 1e-3
    assert float((hard[away] - soft[away]).abs().max()) < 1e-4
