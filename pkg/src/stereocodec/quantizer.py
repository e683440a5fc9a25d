"""Scalar quantization of encoder outputs onto a fixed level grid.

The hard quantizer picks the nearest level via midpoint thresholds, so a value
exactly on a midpoint deterministically maps to the lower index (the index is
entropy coded, so the rule must be fixed).  The soft quantizer is the smooth
relaxation used by the trainer; the codec itself only ever uses the hard
forward value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_LEVELS = 25
DEFAULT_SOFTNESS = 2.0


def default_levels(count=DEFAULT_LEVELS):
    """Evenly spaced level values over [-1, 1] as float32."""
    grid = -1.0 + 2.0 * np.arange(count, dtype=np.float64) / (count - 1)
    return grid.astype(np.float32)


@dataclass(frozen=True)
class QuantizerSpec:
    """Level grid plus the softness used by the soft relaxation."""

    levels: np.ndarray = field(default_factory=default_levels)
    softness: float = DEFAULT_SOFTNESS

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float32)
        if levels.ndim != 1 or levels.size < 2:
            raise ValueError("levels must be a 1-D grid with at least two entries")
        if not np.all(np.diff(levels) > 0):
            raise ValueError("levels must be strictly increasing")
        if not self.softness > 0:
            raise ValueError("softness must be positive")
        object.__setattr__(self, "levels", levels)

    @property
    def midpoints(self):
        lv = self.levels
        return (lv[:-1] + lv[1:]) / np.float32(2.0)


def quantize_hard(z, spec=None):
    """Nearest-level assignment; ties at exact midpoints take the lower index.

    Accepts scalars or arrays; returns (level_value, level_index) with the
    same shape as the input.
    """
    spec = spec or QuantizerSpec()
    z = np.asarray(z, dtype=np.float32)
    # index = number of midpoints strictly below z; equality keeps the lower level
    idx = np.searchsorted(spec.midpoints, z, side="left")
    values = spec.levels[idx]
    if z.ndim == 0:
        return float(values), int(idx)
    return values, idx.astype(np.int64)


def quantize_soft(z, spec=None):
    """Softmax-weighted average of levels with weights exp(-softness*|l - z|)."""
    spec = spec or QuantizerSpec()
    z = np.asarray(z, dtype=np.float32)
    scalar = z.ndim == 0
    zz = np.atleast_1d(z).astype(np.float64)
    lv = spec.levels.astype(np.float64)
    d = -spec.softness * np.abs(lv - zz[..., None])
    d -= d.max(axis=-1, keepdims=True)
    w = np.exp(d)
    out = (w * lv).sum(axis=-1) / w.sum(axis=-1)
    out = out.astype(np.float32)
    return float(out[0]) if scalar else out.reshape(z.shape)


def quantize_ste(z, spec=None):
    """Forward value of the straight-through quantizer (equals quantize_hard).

    The differentiable surrogate is quantize_soft; it is consumed only by the
    training side, the codec always takes the hard value.
    """
    spec = spec or QuantizerSpec()
    value, _ = quantize_hard(z, spec)
    return value


def level_index_to_value(idx, spec=None):
    """Map coded level indices back to float32 level values."""
    spec = spec or QuantizerSpec()
    idx = np.asarray(idx)
    if np.any(idx < 0) or np.any(idx >= spec.levels.size):
        raise ValueError("level index out of range")
    return spec.levels[idx]
