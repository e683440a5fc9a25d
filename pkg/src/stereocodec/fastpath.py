"""Fused numba kernels for plane-level entropy coding.

These mirror the modular path (mixtures + rangecoder) but build each symbol's
CDF table inline, which is what makes whole-image coding affordable.  The
range-coder arithmetic here is the exact integer algorithm of
:mod:`stereocodec.rangecoder`, so both paths produce identical bytes; tests
assert that.  Encoder and decoder share every table-construction routine,
which is what guarantees the decoder regenerates bitwise identical tables
from decoded context.

Logistic CDFs are evaluated with a multiplicative exp chain along the bin
axis (one exp per mixture component plus one multiply per bin); the chain is
monotone decreasing so only the inf saturation needs a refresh, and the
accumulated rounding stays far below the 2^-16 table resolution.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .mixtures import (
    CDF_TOTAL,
    IMAGE_ALPHABET,
    _pmf_counts,
    feature_param_channels,
    image_param_channels,
    split_feature_params,
    split_image_params,
)
from .rangecoder import CorruptStreamError

U0 = np.uint64(0)
U1 = np.uint64(1)
U8 = np.uint64(8)
UFF = np.uint64(0xFF)
RC_BITS = np.uint64(48)
RC_TOPSHIFT = np.uint64(40)
RC_MASK = np.uint64((1 << 48) - 1)
RC_RENORM = np.uint64(1 << 40)
RC_THRESH = np.uint64(0xFF << 40)
RC_TOTAL = np.uint64(CDF_TOTAL)
RC_TOTAL_M1 = np.uint64(CDF_TOTAL - 1)


# -- integer range coder (identical algorithm to rangecoder.py) -------------


@njit(cache=True)
def _rc_enc_init(st):
    st[0] = U0       # low
    st[1] = RC_MASK  # range
    st[2] = U0       # cache byte
    st[3] = U1       # cache size


@njit(cache=True)
def _rc_shift_low(st, buf, n):
    low = st[0]
    if low < RC_THRESH or low > RC_MASK:
        carry = low >> RC_BITS
        buf[n] = np.uint8((st[2] + carry) & UFF)
        n += 1
        ff = np.uint8((UFF + carry) & UFF)
        for _ in range(np.int64(st[3]) - 1):
            buf[n] = ff
            n += 1
        st[3] = U0
        st[2] = (low >> RC_TOPSHIFT) & UFF
    st[3] += U1
    st[0] = (low << U8) & RC_MASK
    return n


@njit(cache=True)
def _rc_encode(st, c_lo, c_hi, buf, n):
    r = st[1] // RC_TOTAL
    st[0] = st[0] + r * c_lo
    if c_hi < RC_TOTAL:
        st[1] = r * (c_hi - c_lo)
    else:
        st[1] = st[1] - r * c_lo
    while st[1] < RC_RENORM:
        n = _rc_shift_low(st, buf, n)
        st[1] = (st[1] << U8) & RC_MASK
    return n


@njit(cache=True)
def _rc_enc_finish(st, buf, n):
    for _ in range(7):
        n = _rc_shift_low(st, buf, n)
    return n


@njit(cache=True)
def _rc_dec_init(data, ds):
    code = U0
    for i in range(1, 7):  # byte 0 is the encoder's initial cache byte
        code = (code << U8) | np.uint64(data[i])
    ds[0] = code
    ds[1] = RC_MASK
    return 7


@njit(cache=True)
def _rc_dec_advance(ds, r, c_lo, c_hi, data, pos):
    ds[0] = ds[0] - r * c_lo
    if c_hi < RC_TOTAL:
        ds[1] = r * (c_hi - c_lo)
    else:
        ds[1] = ds[1] - r * c_lo
    while ds[1] < RC_RENORM:
        if pos >= data.shape[0]:
            return -1
        ds[0] = ((ds[0] << U8) | np.uint64(data[pos])) & RC_MASK
        pos += 1
        ds[1] = (ds[1] << U8) & RC_MASK
    return pos


# -- logistic mixture tables -------------------------------------------------


@njit(cache=True)
def _sig_scalar(a):
    if a >= 0.0:
        return 1.0 / (1.0 + np.exp(-a))
    e = np.exp(a)
    return e / (1.0 + e)


@njit(cache=True)
def _softmax_inplace(logits, out):
    K = logits.shape[0]
    m = logits[0]
    for k in range(1, K):
        if logits[k] > m:
            m = logits[k]
    s = 0.0
    for k in range(K):
        e = np.exp(logits[k] - m)
        out[k] = e
        s += e
    for k in range(K):
        out[k] /= s


@njit(cache=True)
def _image_channel_pmf(pi, mu_s, sig_s, pmf):
    """256-bin mixture PMF; symbol-domain means/scales, bin width 1."""
    for j in range(256):
        pmf[j] = 0.0
    K = pi.shape[0]
    for k in range(K):
        inv = 1.0 / sig_s[k]
        q = np.exp(-inv)
        e = np.exp(-(0.5 - mu_s[k]) * inv)
        prev = 0.0
        pik = pi[k]
        for v in range(255):
            up = 1.0 / (1.0 + e)
            pmf[v] += pik * (up - prev)
            prev = up
            e *= q
            if e == np.inf:
                # stuck saturation: refresh once the true value may be finite
                e = np.exp(-((v + 1) + 0.5 - mu_s[k]) * inv)
        pmf[255] += pik * (1.0 - prev)


@njit(cache=True)
def _image_pixel_channel_counts(pi_l, mu, sraw, lam, ch, y, x, x1n, x2n, pi, mu_s, sig_s, pmf, counts):
    K = pi_l.shape[1]
    _softmax_inplace(pi_l[ch, :, y, x].astype(np.float64), pi)
    for k in range(K):
        m = np.float64(mu[ch, k, y, x])
        if ch == 1:
            m += np.float64(lam[0, k, y, x]) * x1n
        elif ch == 2:
            m += np.float64(lam[1, k, y, x]) * x1n + np.float64(lam[2, k, y, x]) * x2n
        mu_s[k] = 127.5 * (m + 1.0)
        sr = np.float64(sraw[ch, k, y, x])
        if sr < -7.0:
            sr = -7.0
        elif sr > 7.0:
            sr = 7.0
        sig_s[k] = 127.5 * np.exp(sr)
    _image_channel_pmf(pi, mu_s, sig_s, pmf)
    _pmf_counts(pmf, counts)


@njit(cache=True)
def _encode_image_kernel(pi_l, mu, sraw, lam, symbols, buf, bits_out):
    K = pi_l.shape[1]
    H = pi_l.shape[2]
    W = pi_l.shape[3]
    st = np.empty(4, np.uint64)
    _rc_enc_init(st)
    n = 0
    bits = 0.0
    pi = np.empty(K, np.float64)
    mu_s = np.empty(K, np.float64)
    sig_s = np.empty(K, np.float64)
    pmf = np.empty(256, np.float64)
    counts = np.empty(256, np.int64)
    for y in range(H):
        for x in range(W):
            x1n = 0.0
            x2n = 0.0
            for ch in range(3):
                _image_pixel_channel_counts(pi_l, mu, sraw, lam, ch, y, x, x1n, x2n, pi, mu_s, sig_s, pmf, counts)
                s = symbols[ch, y, x]
                acc = 0
                for j in range(s):
                    acc += counts[j]
                bits += 16.0 - np.log2(np.float64(counts[s]))
                n = _rc_encode(st, np.uint64(acc), np.uint64(acc + counts[s]), buf, n)
                if ch == 0:
                    x1n = np.float64(s) / 127.5 - 1.0
                elif ch == 1:
                    x2n = np.float64(s) / 127.5 - 1.0
    bits_out[0] = bits
    return _rc_enc_finish(st, buf, n)


@njit(cache=True)
def _decode_image_kernel(pi_l, mu, sraw, lam, data, symbols):
    K = pi_l.shape[1]
    H = pi_l.shape[2]
    W = pi_l.shape[3]
    ds = np.empty(2, np.uint64)
    pos = _rc_dec_init(data, ds)
    pi = np.empty(K, np.float64)
    mu_s = np.empty(K, np.float64)
    sig_s = np.empty(K, np.float64)
    pmf = np.empty(256, np.float64)
    counts = np.empty(256, np.int64)
    for y in range(H):
        for x in range(W):
            x1n = 0.0
            x2n = 0.0
            for ch in range(3):
                _image_pixel_channel_counts(pi_l, mu, sraw, lam, ch, y, x, x1n, x2n, pi, mu_s, sig_s, pmf, counts)
                r = ds[1] // RC_TOTAL
                dv = ds[0] // r
                if dv > RC_TOTAL_M1:
                    dv = RC_TOTAL_M1
                target = np.int64(dv)
                acc = 0
                s = 0
                while acc + counts[s] <= target:
                    acc += counts[s]
                    s += 1
                pos = _rc_dec_advance(ds, r, np.uint64(acc), np.uint64(acc + counts[s]), data, pos)
                if pos < 0:
                    return -1
                symbols[ch, y, x] = s
                if ch == 0:
                    x1n = np.float64(s) / 127.5 - 1.0
                elif ch == 1:
                    x2n = np.float64(s) / 127.5 - 1.0
    return pos


@njit(cache=True)
def _feature_cdf_kernel(pi_l, mu, sraw, levels, out_cdf):
    C = pi_l.shape[0]
    K = pi_l.shape[1]
    H = pi_l.shape[2]
    W = pi_l.shape[3]
    L = levels.shape[0]
    half = 1.0 / 24.0
    pi = np.empty(K, np.float64)
    pmf = np.empty(L, np.float64)
    counts = np.empty(L, np.int64)
    for c in range(C):
        for y in range(H):
            for x in range(W):
                _softmax_inplace(pi_l[c, :, y, x].astype(np.float64), pi)
                for j in range(L):
                    pmf[j] = 0.0
                for k in range(K):
                    muv = np.float64(mu[c, k, y, x])
                    sr = np.float64(sraw[c, k, y, x])
                    if sr < -7.0:
                        sr = -7.0
                    elif sr > 7.0:
                        sr = 7.0
                    sig = np.exp(sr)
                    prev = 0.0
                    pik = pi[k]
                    for j in range(L - 1):
                        up = _sig_scalar((levels[j] + half - muv) / sig)
                        pmf[j] += pik * (up - prev)
                        prev = up
                    pmf[L - 1] += pik * (1.0 - prev)
                _pmf_counts(pmf, counts)
                acc = np.uint32(0)
                out_cdf[c, y, x, 0] = acc
                for j in range(L):
                    acc += np.uint32(counts[j])
                    out_cdf[c, y, x, j + 1] = acc


@njit(cache=True)
def _encode_tables_kernel(symbols, cdf, buf, bits_out):
    """Encode flat symbols against per-position tables, shape (P, A+1)."""
    P = symbols.shape[0]
    st = np.empty(4, np.uint64)
    _rc_enc_init(st)
    n = 0
    bits = 0.0
    for i in range(P):
        s = symbols[i]
        bits += 16.0 - np.log2(np.float64(cdf[i, s + 1] - cdf[i, s]))
        n = _rc_encode(st, np.uint64(cdf[i, s]), np.uint64(cdf[i, s + 1]), buf, n)
    bits_out[0] = bits
    return _rc_enc_finish(st, buf, n)


@njit(cache=True)
def _decode_tables_kernel(data, cdf, symbols):
    P = symbols.shape[0]
    A = cdf.shape[1] - 1
    ds = np.empty(2, np.uint64)
    pos = _rc_dec_init(data, ds)
    for i in range(P):
        r = ds[1] // RC_TOTAL
        dv = ds[0] // r
        if dv > RC_TOTAL_M1:
            dv = RC_TOTAL_M1
        target = np.uint32(dv)
        s = 0
        while cdf[i, s + 1] <= target:
            s += 1
        pos = _rc_dec_advance(ds, r, np.uint64(cdf[i, s]), np.uint64(cdf[i, s + 1]), data, pos)
        if pos < 0:
            return -1
        symbols[i] = s
    return pos


@njit(cache=True)
def _fnv1a64_kernel(data):
    h = np.uint64(0xCBF29CE484222325)
    prime = np.uint64(0x100000001B3)
    for i in range(data.shape[0]):
        h = (h ^ np.uint64(data[i])) * prime
    return h


# -- python wrappers ---------------------------------------------------------


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a digest."""
    return int(_fnv1a64_kernel(np.frombuffer(data, np.uint8)))


def _enc_buffer(n_symbols):
    # worst case 16 bits/symbol plus flush slack
    return np.empty(2 * n_symbols + 32, np.uint8)


def encode_image_plane(params_raw, K, symbols):
    """Code one (3, H, W) image plane, RGB interleaved per pixel.

    Returns (payload bytes, table cross-entropy bits).
    """
    pi_l, mu, sraw, lam = split_image_params(params_raw, K)
    symbols = np.ascontiguousarray(symbols, dtype=np.int64)
    buf = _enc_buffer(symbols.size)
    bits = np.zeros(1, np.float64)
    n = _encode_image_kernel(pi_l, mu, sraw, lam, symbols, buf, bits)
    return bytes(buf[:n]), float(bits[0])


def decode_image_plane(params_raw, K, data: bytes, height, width):
    pi_l, mu, sraw, lam = split_image_params(params_raw, K)
    if len(data) < 7:
        raise CorruptStreamError(f"image segment of {len(data)} bytes is too short")
    arr = np.frombuffer(data, np.uint8)
    symbols = np.empty((3, height, width), np.int64)
    pos = _decode_image_kernel(pi_l, mu, sraw, lam, arr, symbols)
    if pos < 0:
        raise CorruptStreamError("image segment exhausted before all symbols decoded")
    return symbols


def feature_cdf_planes(params_raw, C, K, levels):
    """Per-position CDF tables for a feature plane, shaped (C, H, W, L+1)."""
    pi_l, mu, sraw = split_feature_params(params_raw, C, K)
    h, w = params_raw.shape[1], params_raw.shape[2]
    out = np.empty((C, h, w, levels.size + 1), np.uint32)
    _feature_cdf_kernel(pi_l, mu, sraw, levels.astype(np.float64), out)
    return out


def encode_feature_plane(params_raw, C, K, levels, symbols):
    """Code one (C, H, W) quantized-feature plane, plane-sequential order.

    Returns (payload bytes, table cross-entropy bits).
    """
    cdf = feature_cdf_planes(params_raw, C, K, levels)
    flat_syms = np.ascontiguousarray(symbols, dtype=np.int64).reshape(-1)
    flat_cdf = np.ascontiguousarray(cdf.reshape(-1, cdf.shape[-1]))
    buf = _enc_buffer(flat_syms.size)
    bits = np.zeros(1, np.float64)
    n = _encode_tables_kernel(flat_syms, flat_cdf, buf, bits)
    return bytes(buf[:n]), float(bits[0])


def decode_feature_plane(params_raw, C, K, levels, data: bytes):
    cdf = feature_cdf_planes(params_raw, C, K, levels)
    h, w = params_raw.shape[1], params_raw.shape[2]
    if len(data) < 7:
        raise CorruptStreamError(f"feature segment of {len(data)} bytes is too short")
    arr = np.frombuffer(data, np.uint8)
    flat_cdf = np.ascontiguousarray(cdf.reshape(-1, cdf.shape[-1]))
    symbols = np.empty(C * h * w, np.int64)
    pos = _decode_tables_kernel(arr, flat_cdf, symbols)
    if pos < 0:
        raise CorruptStreamError("feature segment exhausted before all symbols decoded")
    return symbols.reshape(C, h, w)


def encode_with_tables(symbols_flat, tables):
    """Code a flat symbol array against per-position (P, A+1) tables.

    Returns (payload bytes, table cross-entropy bits).
    """
    flat = np.ascontiguousarray(symbols_flat, dtype=np.int64).reshape(-1)
    tables = np.ascontiguousarray(tables, dtype=np.uint32)
    buf = _enc_buffer(flat.size)
    bits = np.zeros(1, np.float64)
    n = _encode_tables_kernel(flat, tables, buf, bits)
    return bytes(buf[:n]), float(bits[0])


def decode_with_tables(data: bytes, tables):
    if len(data) < 7:
        raise CorruptStreamError(f"segment of {len(data)} bytes is too short")
    tables = np.ascontiguousarray(tables, dtype=np.uint32)
    arr = np.frombuffer(data, np.uint8)
    symbols = np.empty(tables.shape[0], np.int64)
    pos = _decode_tables_kernel(arr, tables, symbols)
    if pos < 0:
        raise CorruptStreamError("segment exhausted before all symbols decoded")
    return symbols


def encode_shared_cdf(symbols, cdf):
    """Code a flat symbol array against one shared table (uniform prior).

    Returns (payload bytes, table cross-entropy bits).
    """
    flat = np.ascontiguousarray(symbols, dtype=np.int64).reshape(-1)
    tables = np.broadcast_to(np.asarray(cdf, np.uint32), (flat.size, len(cdf)))
    buf = _enc_buffer(flat.size)
    bits = np.zeros(1, np.float64)
    n = _encode_tables_kernel(flat, np.ascontiguousarray(tables), buf, bits)
    return bytes(buf[:n]), float(bits[0])


def decode_shared_cdf(data: bytes, cdf, count):
    if len(data) < 7:
        raise CorruptStreamError(f"segment of {len(data)} bytes is too short")
    arr = np.frombuffer(data, np.uint8)
    tables = np.ascontiguousarray(np.broadcast_to(np.asarray(cdf, np.uint32), (count, len(cdf))))
    symbols = np.empty(count, np.int64)
    pos = _decode_tables_kernel(arr, tables, symbols)
    if pos < 0:
        raise CorruptStreamError("segment exhausted before all symbols decoded")
    return symbols


def image_pixel_cdfs(params_raw, K, y, x, prev_symbols):
    """The three CDF tables the coder uses at one pixel (test instrumentation)."""
    pi_l, mu, sraw, lam = split_image_params(params_raw, K)
    pi = np.empty(K, np.float64)
    mu_s = np.empty(K, np.float64)
    sig_s = np.empty(K, np.float64)
    pmf = np.empty(256, np.float64)
    counts = np.empty(256, np.int64)
    x1n = prev_symbols[0] / 127.5 - 1.0 if len(prev_symbols) > 0 else 0.0
    x2n = prev_symbols[1] / 127.5 - 1.0 if len(prev_symbols) > 1 else 0.0
    rows = []
    for ch in range(3):
        _image_pixel_channel_counts(pi_l, mu, sraw, lam, ch, y, x, x1n, x2n, pi, mu_s, sig_s, pmf, counts)
        cdf = np.zeros(257, np.uint32)
        cdf[1:] = np.cumsum(counts)
        rows.append(cdf)
    return rows
