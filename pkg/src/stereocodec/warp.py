"""Cost volumes, disparity probabilities, and soft warping of left-view planes.

Matching cost is the per-channel absolute difference between the right-view
feature and the left-view feature shifted `d` columns to the right; shifts
that run past the image edge contribute exactly zero cost.  After aggregation
the volume is softmax-normalized over the negated cost (small cost means a
likely match), warped expectations clamp their column index at the right
border so the result stays a convex combination of left-view values.
"""

from __future__ import annotations

import numpy as np

from .kernels import interpolate, softmax


def build_cost_volume(f_left, f_right, max_disparity):
    """(N, C, H, W) feature pair -> (N, C, D, H, W) absolute-difference volume."""
    f_left = np.asarray(f_left, dtype=np.float32)
    f_right = np.asarray(f_right, dtype=np.float32)
    if f_left.shape != f_right.shape:
        raise ValueError(f"feature shapes differ: {f_left.shape} vs {f_right.shape}")
    if f_left.ndim != 4:
        raise ValueError("features must be (N, C, H, W)")
    n, c, h, w = f_left.shape
    d_max = int(max_disparity)
    if d_max < 1 or d_max > w:
        raise ValueError(f"max disparity {d_max} out of range for width {w}")
    cv = np.zeros((n, c, d_max, h, w), np.float32)
    for d in range(d_max):
        if d == 0:
            cv[:, :, 0] = np.abs(f_left - f_right)
        else:
            cv[:, :, d, :, : w - d] = np.abs(f_left[..., d:] - f_right[..., : w - d])
    return cv


def normalize_volume(aggregated):
    """Softmax of the negated cost along D; each (h, w) fiber sums to 1."""
    aggregated = np.asarray(aggregated, dtype=np.float32)
    if aggregated.ndim != 4:
        raise ValueError("aggregated volume must be (N, D, H, W)")
    return softmax(-aggregated, axis=1)


def soft_warp(left_plane, prob_volume):
    """Expectation of the left plane over each pixel's disparity fiber.

    out(n, c, h, w) = sum_d prob(n, d, h, w) * left(n, c, h, min(w + d, W-1)).
    """
    left_plane = np.asarray(left_plane, dtype=np.float32)
    prob_volume = np.asarray(prob_volume, dtype=np.float32)
    if left_plane.ndim != 4 or prob_volume.ndim != 4:
        raise ValueError("soft_warp expects (N, C, H, W) plane and (N, D, H, W) volume")
    n, c, h, w = left_plane.shape
    if prob_volume.shape[0] != n or prob_volume.shape[2:] != (h, w):
        raise ValueError(
            f"volume shape {prob_volume.shape} does not match plane {left_plane.shape}"
        )
    d_max = prob_volume.shape[1]
    out = np.zeros((n, c, h, w), np.float32)
    cols = np.arange(w)
    for d in range(d_max):
        src = np.minimum(cols + d, w - 1)
        out += prob_volume[:, None, d] * left_plane[..., src]
    return out


def disparity_from_volume(prob_volume):
    """Soft-argmax reduction: value(h, w) = sum_d d * prob(d, h, w)."""
    prob_volume = np.asarray(prob_volume, dtype=np.float32)
    if prob_volume.ndim != 4:
        raise ValueError("volume must be (N, D, H, W)")
    d = np.arange(prob_volume.shape[1], dtype=np.float32).reshape(1, -1, 1, 1)
    return np.sum(prob_volume * d, axis=1, dtype=np.float32)


def upscale_disparity(disparity, factor):
    """Bilinear spatial upsample and multiply values by the factor.

    Disparity is measured in pixels, so the values scale with resolution.
    """
    disparity = np.asarray(disparity, dtype=np.float32)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return disparity.copy()
    squeeze = disparity.ndim == 2
    plane = disparity[None, None] if squeeze else disparity[:, None]
    up = interpolate(plane, factor, mode="bilinear") * np.float32(factor)
    return up[0, 0] if squeeze else up[:, 0]
