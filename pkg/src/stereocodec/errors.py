"""Codec error types; each maps to a distinct CLI exit code."""


class CodecError(Exception):
    """Base class for all codec failures."""


class FormatError(CodecError):
    """Malformed file: bad magic, unknown version, or inconsistent fields."""


class TruncatedError(FormatError):
    """File or stream ends before its declared contents."""


class CrcError(CodecError):
    """Container checksum does not match its payload."""


class DigestMismatchError(CodecError):
    """Weight digest does not match the container or the file trailer."""


class DimensionError(CodecError):
    """Input dimensions are unusable (view mismatch, zero-sized, overflow)."""
