"""Straight-through scalar quantizer onto the 25-level grid in [-1, 1].

Forward values are the hard nearest-level assignment (midpoint thresholds,
ties to the lower index, identical to the codec side); gradients flow through
the softmax-weighted soft assignment.
"""

from __future__ import annotations

import numpy as np
import torch

DEFAULT_LEVELS = 25
DEFAULT_SOFTNESS = 2.0


def level_grid(count=DEFAULT_LEVELS) -> torch.Tensor:
    """Same level values, bit for bit, as the codec: float32 of -1 + 2j/(L-1)."""
    grid = -1.0 + 2.0 * np.arange(count, dtype=np.float64) / (count - 1)
    return torch.from_numpy(grid.astype(np.float32))


def quantize_hard(z: torch.Tensor, levels: torch.Tensor):
    """Nearest level by midpoint thresholds; returns (values, indices)."""
    mids = (levels[:-1] + levels[1:]) / 2.0
    idx = torch.bucketize(z.detach(), mids, right=False)
    return levels[idx], idx


def quantize_soft(z: torch.Tensor, levels: torch.Tensor, softness=DEFAULT_SOFTNESS):
    """Differentiable relaxation: softmax(-softness * |l - z|) weighted levels."""
    d = -softness * (levels - z.unsqueeze(-1)).abs()
    w = torch.softmax(d, dim=-1)
    return (w * levels).sum(dim=-1)


def quantize_ste(z: torch.Tensor, levels: torch.Tensor, softness=DEFAULT_SOFTNESS):
    """Hard values forward, soft gradients backward; returns (values, indices)."""
    hard, idx = quantize_hard(z, levels)
    soft = quantize_soft(z, levels, softness)
    return hard.detach() - soft.detach() + soft, idx
