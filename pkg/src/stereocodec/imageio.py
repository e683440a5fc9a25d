"""Image file ingestion and export: PPM/PGM (binary), PFM, and PNG.

PPM P6 is the canonical lossless interchange for tests; PNG is accepted for
convenience through Pillow.  Arrays are (3, H, W) uint8 for color and (H, W)
for single-plane formats.  PFM stores float32 rows bottom-to-top with a
negative scale marking little-endian data.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError


def _read_pnm_token(data, pos):
    while pos < len(data):
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("unexpected end of PNM header")
    return data[start:pos], pos


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM (P6) into a (3, H, W) uint8 array."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] != b"P6":
        raise FormatError(f"{path}: not a binary PPM (P6) file")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_pnm_token(data, pos)
        fields.append(int(tok))
    w, h, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PPM supported, maxval={maxval}")
    pos += 1  # single whitespace byte after maxval
    need = w * h * 3
    raw = data[pos : pos + need]
    if len(raw) != need:
        raise FormatError(f"{path}: PPM payload truncated ({len(raw)} of {need} bytes)")
    img = np.frombuffer(raw, np.uint8).reshape(h, w, 3)
    return np.ascontiguousarray(img.transpose(2, 0, 1))


def write_ppm(path, image):
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) image, got {image.shape}")
    if image.dtype != np.uint8:
        if image.min() < 0 or image.max() > 255:
            raise ValueError("image values outside 0..255")
        image = image.astype(np.uint8)
    h, w = image.shape[1], image.shape[2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(np.ascontiguousarray(image.transpose(1, 2, 0)).tobytes())


def write_pgm(path, plane):
    plane = np.asarray(plane)
    if plane.ndim != 2:
        raise ValueError(f"expected (H, W) plane, got {plane.shape}")
    if plane.dtype != np.uint8:
        plane = np.clip(np.rint(plane), 0, 255).astype(np.uint8)
    h, w = plane.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(np.ascontiguousarray(plane).tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_pnm_token(data, pos)
        fields.append(int(tok))
    w, h, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM supported")
    pos += 1
    raw = data[pos : pos + w * h]
    if len(raw) != w * h:
        raise FormatError(f"{path}: PGM payload truncated")
    return np.frombuffer(raw, np.uint8).reshape(h, w).copy()


def write_pfm(path, plane):
    """Write a single-channel float32 PFM (rows bottom-to-top, little-endian)."""
    plane = np.asarray(plane, dtype=np.float32)
    if plane.ndim != 2:
        raise ValueError(f"expected (H, W) plane, got {plane.shape}")
    h, w = plane.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode())
        f.write(np.ascontiguousarray(plane[::-1]).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] not in (b"Pf", b"PF"):
        raise FormatError(f"{path}: not a PFM file")
    color = data[:2] == b"PF"
    pos = 2
    tok_w, pos = _read_pnm_token(data, pos)
    tok_h, pos = _read_pnm_token(data, pos)
    tok_s, pos = _read_pnm_token(data, pos)
    w, h, scale = int(tok_w), int(tok_h), float(tok_s)
    pos += 1
    channels = 3 if color else 1
    count = w * h * channels
    dtype = "<f4" if scale < 0 else ">f4"
    raw = data[pos : pos + 4 * count]
    if len(raw) != 4 * count:
        raise FormatError(f"{path}: PFM payload truncated")
    arr = np.frombuffer(raw, dtype).reshape(h, w, channels)[::-1]
    arr = arr.astype(np.float32)
    return np.ascontiguousarray(arr[..., 0] if not color else arr.transpose(2, 0, 1))


def read_image(path) -> np.ndarray:
    """Read PPM or PNG into (3, H, W) uint8."""
    p = str(path)
    if p.lower().endswith((".ppm", ".pnm")):
        return read_ppm(p)
    if p.lower().endswith(".png"):
        from PIL import Image

        with Image.open(p) as im:
            arr = np.asarray(im.convert("RGB"), np.uint8)
        return np.ascontiguousarray(arr.transpose(2, 0, 1))
    raise FormatError(f"{path}: unsupported image format (use .ppm or .png)")


def write_image(path, image):
    """Write (3, H, W) uint8 as PPM or PNG based on the extension."""
    p = str(path)
    if p.lower().endswith((".ppm", ".pnm")):
        write_ppm(p, image)
        return
    if p.lower().endswith(".png"):
        from PIL import Image

        arr = np.asarray(image, np.uint8).transpose(1, 2, 0)
        Image.fromarray(arr, "RGB").save(p)
        return
    raise FormatError(f"{path}: unsupported image format (use .ppm or .png)")
