"""Integer range coder driven by caller-supplied cumulative tables.

48-bit registers, byte-wise renormalization with carry counting, and a fixed
probability resolution of 2^16.  The coder itself is memoryless: every symbol
is coded against the table the caller passes in, which lets the model supply
context-dependent distributions as long as encoder and decoder walk the same
table sequence.  Integer-only arithmetic, so output bytes are identical across
platforms and runs.

A mismatched table desynchronizes the stream silently; corruption detection
is the container's job (CRC), not the coder's.
"""

from __future__ import annotations

import numpy as np

PROB_BITS = 16
PROB_TOTAL = 1 << PROB_BITS

_RC_BITS = 48
_MASK = (1 << _RC_BITS) - 1
_RENORM = 1 << (_RC_BITS - 8)
_TOP_THRESH = 0xFF << (_RC_BITS - 8)
_FLUSH_SHIFTS = _RC_BITS // 8 + 1  # cache byte + six register bytes


class CorruptStreamError(Exception):
    """Raised when a decoder runs out of bytes before its symbols."""


class RangeEncoder:
    """Streaming encoder; one instance per coded segment."""

    def __init__(self):
        self._low = 0
        self._range = _MASK
        self._cache = 0
        self._cache_size = 1
        self._out = bytearray()
        self._finished = False

    def encode_symbol(self, symbol, cdf):
        """Narrow the interval to [cdf[s], cdf[s+1]) / 2^16 and renormalize."""
        if self._finished:
            raise RuntimeError("encoder already finished")
        if symbol < 0 or symbol + 1 >= len(cdf):
            raise ValueError(f"symbol {symbol} out of range for alphabet {len(cdf) - 1}")
        self._encode(int(cdf[symbol]), int(cdf[symbol + 1]), int(cdf[-1]))

    def _encode(self, c_lo, c_hi, total):
        r = self._range // total
        self._low += r * c_lo
        if c_hi < total:
            self._range = r * (c_hi - c_lo)
        else:
            self._range -= r * c_lo
        while self._range < _RENORM:
            self._shift_low()
            self._range = (self._range << 8) & _MASK

    def _shift_low(self):
        low = self._low
        if low < _TOP_THRESH or low > _MASK:
            carry = low >> _RC_BITS
            self._out.append((self._cache + carry) & 0xFF)
            ff = (0xFF + carry) & 0xFF
            for _ in range(self._cache_size - 1):
                self._out.append(ff)
            self._cache_size = 0
            self._cache = (low >> (_RC_BITS - 8)) & 0xFF
        self._cache_size += 1
        self._low = (low << 8) & _MASK

    def finish(self):
        """Flush trailing state; at most 8 bytes. Idempotent result."""
        if not self._finished:
            for _ in range(_FLUSH_SHIFTS):
                self._shift_low()
            self._finished = True
        return bytes(self._out)


class RangeDecoder:
    """Streaming decoder over a byte segment produced by RangeEncoder."""

    def __init__(self, data):
        self._data = data
        self._pos = 0
        self._range = _MASK
        code = 0
        self._next_byte()  # leading cache byte carries no information
        for _ in range(_RC_BITS // 8):
            code = (code << 8) | self._next_byte()
        self._code = code

    def _next_byte(self):
        if self._pos >= len(self._data):
            raise CorruptStreamError(
                f"range stream exhausted at byte {self._pos} of {len(self._data)}"
            )
        b = self._data[self._pos]
        self._pos += 1
        return b

    @property
    def consumed(self):
        return self._pos

    def decode_symbol(self, cdf):
        """Return the next symbol under `cdf`; must mirror the encode table."""
        total = int(cdf[-1])
        r = self._range // total
        dv = self._code // r
        if dv >= total:
            dv = total - 1
        symbol = int(np.searchsorted(cdf, dv, side="right")) - 1
        c_lo = int(cdf[symbol])
        c_hi = int(cdf[symbol + 1])
        self._code -= r * c_lo
        if c_hi < total:
            self._range = r * (c_hi - c_lo)
        else:
            self._range -= r * c_lo
        while self._range < _RENORM:
            self._code = ((self._code << 8) | self._next_byte()) & _MASK
            self._range = (self._range << 8) & _MASK
        return symbol


def encode_symbols(symbols, tables):
    """Encode a sequence against per-symbol tables; returns the segment bytes."""
    enc = RangeEncoder()
    for s, t in zip(symbols, tables):
        enc.encode_symbol(int(s), t)
    return enc.finish()


def decode_symbols(data, tables):
    """Decode len(tables) symbols from a segment."""
    dec = RangeDecoder(data)
    return [dec.decode_symbol(t) for t in tables]
