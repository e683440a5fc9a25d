"""Writer for the codec's portable weight file format.

Layout (little-endian): magic "L3CW", version u8, config block (S u8, C u8,
hidden u16, K u8, D_max u16), entry count u32, then per entry in
lexicographic name order: name length u16 + UTF-8 name + rank u8 +
extents u32[rank] + raw float32 data; finally a 64-bit FNV-1a digest of all
preceding bytes.  The codec compares the content digest, an FNV-1a over the
serialized entries alone.
"""

from __future__ import annotations

import struct

import numpy as np

WEIGHT_MAGIC = b"L3CW"
WEIGHT_VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def _serialize_entries(tensors: dict[str, np.ndarray]) -> bytes:
    parts = []
    for name in sorted(tensors):
        t = np.ascontiguousarray(tensors[name], dtype=np.float32)
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<B", t.ndim))
        parts.append(struct.pack(f"<{t.ndim}I", *t.shape))
        parts.append(t.tobytes())
    return b"".join(parts)


def content_digest(tensors: dict[str, np.ndarray]) -> int:
    """The digest the codec embeds in containers and prints on load."""
    return fnv1a64(_serialize_entries(tensors))


def write_weight_file(path, tensors: dict[str, np.ndarray], cfg) -> int:
    """Write the checkpoint; returns the content digest."""
    body = bytearray()
    body += WEIGHT_MAGIC
    body += struct.pack("<B", WEIGHT_VERSION)
    body += struct.pack(
        "<BBHBH", cfg.scales, cfg.feature_channels, cfg.hidden, cfg.mixture_k, cfg.max_disparity
    )
    body += struct.pack("<I", len(tensors))
    entries = _serialize_entries(tensors)
    body += entries
    body += struct.pack("<Q", fnv1a64(bytes(body)))
    with open(path, "wb") as f:
        f.write(body)
    return fnv1a64(entries)
