"""On-disk container framing coded segments with integrity checks.

Layout (little-endian):

    magic "L3CS" | version u8 | width u32 | height u32 | S u8 | C u8 | K u8 |
    D_max u16 | weight digest u64 | segment count u16 |
    per segment: role u8, scale u8, view u8, byte length u32 |
    segment payloads | CRC32 u32 over all preceding bytes

Width and height are the true image dimensions before padding.  Role 0 is a
quantized feature plane (scale 1..S), role 1 an image plane (scale 0).  The
CRC covers the whole file because the range coder itself cannot detect a
desynchronized stream.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

from .errors import CrcError, FormatError, TruncatedError

CONTAINER_MAGIC = b"L3CS"
CONTAINER_VERSION = 1
ROLE_FEATURE = 0
ROLE_IMAGE = 1
VIEW_LEFT = 0
VIEW_RIGHT = 1

_HEADER = struct.Struct("<4sBIIBBBHQH")


@dataclass
class Segment:
    role: int
    scale: int
    view: int
    payload: bytes

    @property
    def tag(self):
        return (self.role, self.scale, self.view)


@dataclass
class Container:
    width: int
    height: int
    scales: int
    feature_channels: int
    mixture_k: int
    max_disparity: int
    weight_digest: int
    segments: list[Segment] = field(default_factory=list)

    def serialize(self) -> bytes:
        if not (1 <= self.width <= 0xFFFFFFFF and 1 <= self.height <= 0xFFFFFFFF):
            raise FormatError(f"dimensions {self.width}x{self.height} not representable")
        out = bytearray()
        out += _HEADER.pack(
            CONTAINER_MAGIC,
            CONTAINER_VERSION,
            self.width,
            self.height,
            self.scales,
            self.feature_channels,
            self.mixture_k,
            self.max_disparity,
            self.weight_digest,
            len(self.segments),
        )
        for seg in self.segments:
            out += struct.pack("<BBBI", seg.role, seg.scale, seg.view, len(seg.payload))
        for seg in self.segments:
            out += seg.payload
        out += struct.pack("<I", zlib.crc32(bytes(out)))
        return bytes(out)

    @classmethod
    def parse(cls, data: bytes) -> "Container":
        if len(data) < _HEADER.size + 4:
            raise TruncatedError(f"container is only {len(data)} bytes")
        magic, version, width, height, s, c, k, dmax, digest, nseg = _HEADER.unpack_from(data, 0)
        if magic != CONTAINER_MAGIC:
            raise FormatError(f"bad container magic {magic!r}")
        if version != CONTAINER_VERSION:
            raise FormatError(f"unknown container version {version}")
        pos = _HEADER.size
        dir_end = pos + 7 * nseg
        if dir_end + 4 > len(data):
            raise TruncatedError("container ends inside the segment directory")
        entries = []
        total_payload = 0
        for _ in range(nseg):
            role, scale, view, length = struct.unpack_from("<BBBI", data, pos)
            pos += 7
            entries.append((role, scale, view, length))
            total_payload += length
        expected = dir_end + total_payload + 4
        if len(data) < expected:
            raise TruncatedError(
                f"container declares {expected} bytes but holds {len(data)}"
            )
        if len(data) > expected:
            raise FormatError(f"{len(data) - expected} trailing bytes after container")
        (crc_stored,) = struct.unpack_from("<I", data, expected - 4)
        if zlib.crc32(data[: expected - 4]) != crc_stored:
            raise CrcError("container CRC mismatch")
        segments = []
        for role, scale, view, length in entries:
            segments.append(Segment(role, scale, view, bytes(data[pos : pos + length])))
            pos += length
        return cls(width, height, s, c, k, dmax, digest, segments)

    def has_feature_segments(self) -> bool:
        return any(seg.role == ROLE_FEATURE for seg in self.segments)

    def has_right_view(self) -> bool:
        return any(seg.view == VIEW_RIGHT for seg in self.segments)
