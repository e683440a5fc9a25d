"""Deterministic float32 tensor kernels.

Every kernel is a pure function with a fixed accumulation order so that the
compression side and the decompression side of the codec compute bitwise
identical activations from identical inputs.  Convolutions accumulate the
products per output element in channel-major, then kernel-row, then
kernel-column order (depth before row for 3-D), starting from the bias value;
taps that fall into the zero padding are skipped, not accumulated.  No fused
multiply-add, no reassociation.
"""

from __future__ import annotations

import numpy as np
from numba import njit

F32 = np.float32


def _as_f32(x, name):
    x = np.ascontiguousarray(x, dtype=np.float32)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


@njit(cache=True)
def _conv2d_kernel(x, w, b, stride, dilation, pad, out):
    N, IC, H, W = x.shape
    OC = w.shape[0]
    KH, KW = w.shape[2], w.shape[3]
    OH, OW = out.shape[2], out.shape[3]
    for n in range(N):
        for oc in range(OC):
            for oy in range(OH):
                for ox in range(OW):
                    out[n, oc, oy, ox] = b[oc]
            for ic in range(IC):
                for kh in range(KH):
                    oy_lo = max(0, (pad - kh * dilation + stride - 1) // stride)
                    oy_hi = min(OH, (H + pad - kh * dilation + stride - 1) // stride)
                    for kw in range(KW):
                        ox_lo = max(0, (pad - kw * dilation + stride - 1) // stride)
                        ox_hi = min(OW, (W + pad - kw * dilation + stride - 1) // stride)
                        wv = w[oc, ic, kh, kw]
                        for oy in range(oy_lo, oy_hi):
                            iy = oy * stride + kh * dilation - pad
                            for ox in range(ox_lo, ox_hi):
                                ix = ox * stride + kw * dilation - pad
                                out[n, oc, oy, ox] += wv * x[n, ic, iy, ix]


@njit(cache=True)
def _conv3d_kernel(x, w, b, pad, out):
    N, IC, D, H, W = x.shape
    OC = w.shape[0]
    KD, KH, KW = w.shape[2], w.shape[3], w.shape[4]
    OD, OH, OW = out.shape[2], out.shape[3], out.shape[4]
    for n in range(N):
        for oc in range(OC):
            for od in range(OD):
                for oy in range(OH):
                    for ox in range(OW):
                        out[n, oc, od, oy, ox] = b[oc]
            for ic in range(IC):
                for kd in range(KD):
                    od_lo = max(0, pad - kd)
                    od_hi = min(OD, D + pad - kd)
                    for kh in range(KH):
                        oy_lo = max(0, pad - kh)
                        oy_hi = min(OH, H + pad - kh)
                        for kw in range(KW):
                            ox_lo = max(0, pad - kw)
                            ox_hi = min(OW, W + pad - kw)
                            wv = w[oc, ic, kd, kh, kw]
                            for od in range(od_lo, od_hi):
                                iz = od + kd - pad
                                for oy in range(oy_lo, oy_hi):
                                    iy = oy + kh - pad
                                    for ox in range(ox_lo, ox_hi):
                                        ix = ox + kw - pad
                                        out[n, oc, od, oy, ox] += wv * x[n, ic, iz, iy, ix]


def conv2d(x, weight, bias=None, stride=1, dilation=1, zero_padding=0):
    """2-D cross-correlation over an (N, C, H, W) float32 tensor.

    Output spatial size is floor((H + 2p - dilation*(kH-1) - 1)/stride) + 1.
    """
    x = _as_f32(x, "input")
    weight = _as_f32(weight, "weight")
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(
            f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}"
        )
    if stride < 1 or dilation < 1:
        raise ValueError("stride and dilation must be >= 1")
    oc, ic, kh, kw = weight.shape
    if x.shape[1] != ic:
        raise ValueError(
            f"conv2d channel mismatch: input has {x.shape[1]} channels, weight expects {ic}"
        )
    if bias is None:
        bias = np.zeros(oc, np.float32)
    bias = _as_f32(bias, "bias")
    if bias.shape != (oc,):
        raise ValueError(f"bias shape {bias.shape} does not match out channels {oc}")
    n, _, h, w = x.shape
    oh = (h + 2 * zero_padding - dilation * (kh - 1) - 1) // stride + 1
    ow = (w + 2 * zero_padding - dilation * (kw - 1) - 1) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ValueError(
            f"conv2d output would be empty: input {h}x{w}, kernel {kh}x{kw}, "
            f"stride {stride}, dilation {dilation}, padding {zero_padding}"
        )
    out = np.empty((n, oc, oh, ow), np.float32)
    _conv2d_kernel(x, weight, bias, stride, dilation, zero_padding, out)
    return out


def conv3d(x, weight, bias=None, zero_padding=0):
    """3-D cross-correlation over an (N, C, D, H, W) float32 tensor, stride 1."""
    x = _as_f32(x, "input")
    weight = _as_f32(weight, "weight")
    if x.ndim != 5 or weight.ndim != 5:
        raise ValueError(
            f"conv3d expects 5-D input and weight, got {x.shape} and {weight.shape}"
        )
    oc, ic, kd, kh, kw = weight.shape
    if x.shape[1] != ic:
        raise ValueError(
            f"conv3d channel mismatch: input has {x.shape[1]} channels, weight expects {ic}"
        )
    if bias is None:
        bias = np.zeros(oc, np.float32)
    bias = _as_f32(bias, "bias")
    if bias.shape != (oc,):
        raise ValueError(f"bias shape {bias.shape} does not match out channels {oc}")
    n, _, d, h, w = x.shape
    p = zero_padding
    od, oh, ow = d + 2 * p - kd + 1, h + 2 * p - kh + 1, w + 2 * p - kw + 1
    if od <= 0 or oh <= 0 or ow <= 0:
        raise ValueError(f"conv3d output would be empty for input {x.shape}")
    out = np.empty((n, oc, od, oh, ow), np.float32)
    _conv3d_kernel(x, weight, bias, p, out)
    return out


def pixel_shuffle(x, r):
    """Rearrange (N, C*r*r, H, W) to (N, C, H*r, W*r).

    Output element (n, c, h*r+i, w*r+j) comes from input channel c*r*r + i*r + j.
    """
    x = _as_f32(x, "input")
    if x.ndim != 4:
        raise ValueError(f"pixel_shuffle expects a 4-D tensor, got {x.shape}")
    n, ch, h, w = x.shape
    if r < 1 or ch % (r * r) != 0:
        raise ValueError(f"channel count {ch} not divisible by r^2 = {r * r}")
    c = ch // (r * r)
    y = x.reshape(n, c, r, r, h, w)
    y = y.transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(y.reshape(n, c, h * r, w * r))


def _interp_axis_coords(out_size, in_size, scale):
    # align-corners-false: sample centers at (i + 0.5)/scale - 0.5, clamped.
    pos = (np.arange(out_size, dtype=np.float64) + 0.5) / scale - 0.5
    pos = np.clip(pos, 0.0, in_size - 1)
    lo = np.floor(pos).astype(np.int64)
    lo = np.minimum(lo, in_size - 1)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = (pos - lo).astype(np.float32)
    return lo, hi, frac


def interpolate(x, scale, mode="bilinear"):
    """Resample the trailing spatial axes by a uniform scale factor.

    Uses the align-corners-false convention with border clamping.  Bilinear
    operates on (N, C, H, W); trilinear on (N, C, D, H, W).  Interpolates
    along the fastest axis first (width, then height, then depth).
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    x = _as_f32(x, "input")
    if mode == "bilinear":
        if x.ndim != 4:
            raise ValueError("bilinear interpolation expects a 4-D tensor")
        axes = (2, 3)
    elif mode == "trilinear":
        if x.ndim != 5:
            raise ValueError("trilinear interpolation expects a 5-D tensor")
        axes = (2, 3, 4)
    else:
        raise ValueError(f"unknown interpolation mode {mode!r}")
    if scale == 1:
        return x.copy()
    out = x
    for ax in reversed(axes):
        in_size = out.shape[ax]
        out_size = int(round(in_size * scale))
        if out_size < 1:
            raise ValueError("scale produces an empty output")
        lo, hi, frac = _interp_axis_coords(out_size, in_size, scale)
        a = np.take(out, lo, axis=ax)
        b = np.take(out, hi, axis=ax)
        shape = [1] * out.ndim
        shape[ax] = out_size
        f = frac.reshape(shape)
        one = np.float32(1.0)
        out = a * (one - f) + b * f
    return np.ascontiguousarray(out.astype(np.float32, copy=False))


def softmax(x, axis):
    """Max-subtracted softmax along one axis; every fiber sums to 1."""
    x = _as_f32(x, "input")
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m, dtype=np.float32)
    return e / np.sum(e, axis=axis, keepdims=True, dtype=np.float32)


def leaky_relu(x, slope=0.2):
    x = np.asarray(x, dtype=np.float32)
    return np.where(x >= 0, x, np.float32(slope) * x)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float32)
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
