"""Discretized logistic mixture likelihoods and integer CDF tables.

Bin probabilities are differences of logistic CDFs at the bin edges, with the
lowest edge at -inf and the highest at +inf so every PMF telescopes to 1.
Image symbols 0..255 are their own bin centers (bin width 1); quantized
feature symbols live on the 25-level grid in [-1, 1] (bin width 1/12).

Domain conventions (mirrored by the training side):
  * predicted means are in [-1, 1] units; for images they map to the symbol
    axis via z = 127.5 * (mu + 1), and sigma scales by 127.5,
  * sigma = exp(clamp(raw, -7, 7)) before any scaling,
  * autoregression coefficients multiply previously decoded symbols
    normalized to [-1, 1].

Likelihood math runs in float64; the resulting PMF is quantized to integer
counts with total 2^16 by a fixed, documented rule (floor, bump zero-count
symbols to 1, settle the residual on the most probable symbols) because the
coded bits depend on it bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .quantizer import default_levels

IMAGE_ALPHABET = 256
FEATURE_BIN_WIDTH = 1.0 / 12.0
IMAGE_BIN_WIDTH = 1.0
SIGMA_RAW_MIN = -7.0
SIGMA_RAW_MAX = 7.0
CDF_TOTAL = 1 << 16
SIGMA_FLOOR = 1e-7


def _sigmoid64(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softmax64(logits, axis=-1):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def logistic_bin(z, mu, sigma, b, lowest=False, highest=False):
    """Probability mass of the bin of width `b` centered at `z`.

    `lowest`/`highest` replace the corresponding edge with -inf/+inf.
    """
    sigma = np.maximum(np.asarray(sigma, dtype=np.float64), SIGMA_FLOOR)
    z = np.asarray(z, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    lower = 0.0 if lowest else _sigmoid64((z - b / 2 - mu) / sigma)
    upper = 1.0 if highest else _sigmoid64((z + b / 2 - mu) / sigma)
    return upper - lower


@dataclass(frozen=True)
class MixtureParams:
    """Raw per-pixel mixture parameters for one pixel, shaped (channels, K).

    `auto_coeffs` holds the (alpha, beta, gamma) rows for image pixels and is
    None for feature pixels.
    """

    weight_logits: np.ndarray
    means: np.ndarray
    log_scales: np.ndarray
    auto_coeffs: np.ndarray | None = None

    def __post_init__(self):
        for name in ("weight_logits", "means", "log_scales"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, a)
        if self.means.shape != self.weight_logits.shape or self.log_scales.shape != self.weight_logits.shape:
            raise ValueError("mixture parameter arrays must share one (channels, K) shape")
        if self.auto_coeffs is not None:
            a = np.asarray(self.auto_coeffs, dtype=np.float64)
            if a.shape != (3, self.weight_logits.shape[1]):
                raise ValueError("auto_coeffs must be shaped (3, K)")
            object.__setattr__(self, "auto_coeffs", a)


def _mixture_pmf(pi, mu, sigma, centers, b):
    """PMF over `centers` for one channel: sum_k pi_k * bin_k, edge-ruled."""
    inner_edges = centers[:-1] + b / 2.0  # shared edge between bins j and j+1
    pmf = np.zeros(centers.size, dtype=np.float64)
    for k in range(pi.size):
        cdf = _sigmoid64((inner_edges - mu[k]) / sigma[k])
        full = np.concatenate(([0.0], cdf, [1.0]))
        pmf += pi[k] * np.diff(full)
    return pmf


def pixel_pmf_image(params: MixtureParams, decoded_prev_channels=()):
    """256-bin PMFs for the three channels of one image pixel.

    `decoded_prev_channels` supplies the decoded symbols of channels 1 (and 2)
    needed by the mean autoregression for channels 2 and 3.
    """
    if params.auto_coeffs is None:
        raise ValueError("image pixels require auto_coeffs")
    if params.weight_logits.shape[0] != 3:
        raise ValueError("image pixels have 3 channels")
    prev = list(decoded_prev_channels)
    if len(prev) < 2:
        raise ValueError("channels 2 and 3 need the previously decoded symbols")
    x1n = prev[0] / 127.5 - 1.0
    x2n = prev[1] / 127.5 - 1.0
    lam = params.auto_coeffs
    centers = np.arange(IMAGE_ALPHABET, dtype=np.float64)
    pmfs = np.zeros((3, IMAGE_ALPHABET), dtype=np.float64)
    for ch in range(3):
        pi = _softmax64(params.weight_logits[ch])
        mu_n = params.means[ch].copy()
        if ch == 1:
            mu_n = mu_n + lam[0] * x1n
        elif ch == 2:
            mu_n = mu_n + lam[1] * x1n + lam[2] * x2n
        mu_s = 127.5 * (mu_n + 1.0)
        sig_s = 127.5 * np.exp(np.clip(params.log_scales[ch], SIGMA_RAW_MIN, SIGMA_RAW_MAX))
        pmfs[ch] = _mixture_pmf(pi, mu_s, sig_s, centers, IMAGE_BIN_WIDTH)
    return pmfs


def pixel_pmf_feature(params: MixtureParams, levels=None):
    """25-bin PMFs for the channels of one quantized-feature pixel."""
    levels = default_levels() if levels is None else np.asarray(levels)
    centers = levels.astype(np.float64)
    C = params.weight_logits.shape[0]
    pmfs = np.zeros((C, centers.size), dtype=np.float64)
    for ch in range(C):
        pi = _softmax64(params.weight_logits[ch])
        mu = params.means[ch]
        sig = np.exp(np.clip(params.log_scales[ch], SIGMA_RAW_MIN, SIGMA_RAW_MAX))
        pmfs[ch] = _mixture_pmf(pi, mu, sig, centers, FEATURE_BIN_WIDTH)
    return pmfs


@njit(cache=True)
def _pmf_counts(pmf, counts):
    """Quantize a float64 PMF to integer counts summing to exactly 2^16.

    floor(p * 65536) per symbol, bumped to at least 1; the residual goes to
    the most probable symbols, stable order by probability then index.
    """
    A = pmf.shape[0]
    total = 65536
    ssum = 0
    for a in range(A):
        c = int(np.floor(pmf[a] * 65536.0))
        if c < 1:
            c = 1
        counts[a] = c
        ssum += c
    r = total - ssum
    if r > 0:
        order = np.argsort(-pmf, kind="mergesort")
        for i in range(r):
            counts[order[i % A]] += 1
    elif r < 0:
        order = np.argsort(-pmf, kind="mergesort")
        deficit = -r
        i = 0
        while deficit > 0 and i < A:
            take = counts[order[i]] - 1
            if take > deficit:
                take = deficit
            counts[order[i]] -= take
            deficit -= take
            i += 1


def pmf_to_cdf(pmf):
    """Integer cumulative table (len A+1, c_0 = 0, c_A = 2^16) for a PMF."""
    pmf = np.asarray(pmf, dtype=np.float64)
    if pmf.ndim != 1 or pmf.size < 2:
        raise ValueError("pmf must be a 1-D distribution")
    if abs(float(pmf.sum()) - 1.0) > 1e-5:
        raise ValueError(f"pmf sums to {pmf.sum():.8f}, expected 1 within 1e-5")
    counts = np.empty(pmf.size, np.int64)
    _pmf_counts(pmf, counts)
    cdf = np.zeros(pmf.size + 1, np.uint32)
    cdf[1:] = np.cumsum(counts)
    return cdf


def uniform_cdf(alphabet):
    """Equal-count table; the division remainder goes to the first symbols."""
    if alphabet < 2 or alphabet > CDF_TOTAL:
        raise ValueError(f"unsupported alphabet size {alphabet}")
    base = CDF_TOTAL // alphabet
    rem = CDF_TOTAL - base * alphabet
    counts = np.full(alphabet, base, np.int64)
    counts[:rem] += 1
    cdf = np.zeros(alphabet + 1, np.uint32)
    cdf[1:] = np.cumsum(counts)
    return cdf


def validate_cdf(cdf):
    """True iff strictly increasing from 0 to exactly 2^16."""
    cdf = np.asarray(cdf)
    return (
        cdf[0] == 0
        and int(cdf[-1]) == CDF_TOTAL
        and bool(np.all(np.diff(cdf.astype(np.int64)) >= 1))
    )


# ---------------------------------------------------------------------------
# Plane-level parameter layout and ideal-bit accounting.
#
# A probability head emits one channel stack per pixel:
#   images:   [pi 3K][mu 3K][sigma 3K][lambda 3K]   (lambda = alpha, beta, gamma)
#   features: [pi CK][mu CK][sigma CK]
# with each group ordered channel-major, component-minor.
# ---------------------------------------------------------------------------


def image_param_channels(K):
    return 4 * 3 * K


def feature_param_channels(C, K):
    return 3 * C * K


def split_image_params(raw, K):
    """View a (12K, H, W) head output as pi/mu/sigma/lambda blocks (3, K, H, W)."""
    if raw.shape[0] != image_param_channels(K):
        raise ValueError(f"expected {image_param_channels(K)} parameter channels, got {raw.shape[0]}")
    h, w = raw.shape[1], raw.shape[2]
    g = raw.reshape(4, 3, K, h, w)
    return g[0], g[1], g[2], g[3]


def split_feature_params(raw, C, K):
    """View a (3CK, H, W) head output as pi/mu/sigma blocks (C, K, H, W)."""
    if raw.shape[0] != feature_param_channels(C, K):
        raise ValueError(f"expected {feature_param_channels(C, K)} parameter channels, got {raw.shape[0]}")
    h, w = raw.shape[1], raw.shape[2]
    g = raw.reshape(3, C, K, h, w)
    return g[0], g[1], g[2]


def _grid_edges(centers, b):
    """Per-bin (lower, upper) edge arrays with open-ended extremes.

    Inner edges sit at center + b/2 and are shared between neighbouring bins
    so every PMF telescopes to exactly 1.
    """
    inner = centers[:-1] + b / 2.0
    lo = np.concatenate(([-np.inf], inner))
    hi = np.concatenate((inner, [np.inf]))
    return lo, hi


def image_plane_bits(pi_logits, mu, sigma_raw, lam, symbols):
    """-log2 likelihood of each image symbol, shaped (3, H, W).

    Arrays are the split head output blocks, (3, K, H, W) float32; `symbols`
    is the (3, H, W) integer plane.  Matches the distributions the coder uses
    up to CDF quantization.
    """
    sym = symbols.astype(np.float64)
    x1n = sym[0] / 127.5 - 1.0
    x2n = sym[1] / 127.5 - 1.0
    centers = np.arange(IMAGE_ALPHABET, dtype=np.float64)
    edges_lo, edges_hi = _grid_edges(centers, IMAGE_BIN_WIDTH)
    bits = np.empty_like(sym)
    for ch in range(3):
        pi = _softmax64(pi_logits[ch], axis=0)
        mu_n = mu[ch].astype(np.float64)
        if ch == 1:
            mu_n = mu_n + lam[0].astype(np.float64) * x1n
        elif ch == 2:
            mu_n = mu_n + lam[1].astype(np.float64) * x1n + lam[2].astype(np.float64) * x2n
        mu_s = 127.5 * (mu_n + 1.0)
        sig_s = 127.5 * np.exp(np.clip(sigma_raw[ch].astype(np.float64), SIGMA_RAW_MIN, SIGMA_RAW_MAX))
        idx = symbols[ch]
        p = (
            pi
            * (
                _sigmoid64((edges_hi[idx] - mu_s) / sig_s)
                - _sigmoid64((edges_lo[idx] - mu_s) / sig_s)
            )
        ).sum(axis=0)
        bits[ch] = -np.log2(np.maximum(p, 1e-30))
    return bits


def feature_plane_bits(pi_logits, mu, sigma_raw, symbols, levels=None):
    """-log2 likelihood of each feature symbol, shaped (C, H, W)."""
    levels = default_levels() if levels is None else np.asarray(levels)
    centers = levels.astype(np.float64)
    edges_lo, edges_hi = _grid_edges(centers, FEATURE_BIN_WIDTH)
    C = pi_logits.shape[0]
    bits = np.empty(symbols.shape, np.float64)
    for ch in range(C):
        pi = _softmax64(pi_logits[ch], axis=0)
        mu_c = mu[ch].astype(np.float64)
        sig = np.exp(np.clip(sigma_raw[ch].astype(np.float64), SIGMA_RAW_MIN, SIGMA_RAW_MAX))
        idx = symbols[ch]
        p = (
            pi
            * (
                _sigmoid64((edges_hi[idx] - mu_c) / sig)
                - _sigmoid64((edges_lo[idx] - mu_c) / sig)
            )
        ).sum(axis=0)
        bits[ch] = -np.log2(np.maximum(p, 1e-30))
    return bits
