"""Training data ingestion: PPM/PNG stereo pairs, PFM ground-truth disparity,
random crops, and synthetic stereo generators for smoke experiments."""

from __future__ import annotations

import numpy as np


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
        raise ValueError("unexpected end of PNM header")
    return data[start:pos], pos


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] != b"P6":
        raise ValueError(f"{path}: not a binary PPM file")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_pnm_token(data, pos)
        fields.append(int(tok))
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PPM supported")
    pos += 1
    img = np.frombuffer(data[pos : pos + 3 * w * h], np.uint8).reshape(h, w, 3)
    return np.ascontiguousarray(img.transpose(2, 0, 1))


def write_ppm(path, image):
    image = np.asarray(image, np.uint8)
    h, w = image.shape[1], image.shape[2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(np.ascontiguousarray(image.transpose(1, 2, 0)).tobytes())


def read_image(path) -> np.ndarray:
    p = str(path)
    if p.lower().endswith((".ppm", ".pnm")):
        return read_ppm(p)
    if p.lower().endswith(".png"):
        from PIL import Image

        with Image.open(p) as im:
            arr = np.asarray(im.convert("RGB"), np.uint8)
        return np.ascontiguousarray(arr.transpose(2, 0, 1))
    raise ValueError(f"{path}: unsupported image format")


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] not in (b"Pf", b"PF"):
        raise ValueError(f"{path}: not a PFM file")
    color = data[:2] == b"PF"
    pos = 2
    tok_w, pos = _read_pnm_token(data, pos)
    tok_h, pos = _read_pnm_token(data, pos)
    tok_s, pos = _read_pnm_token(data, pos)
    w, h, scale = int(tok_w), int(tok_h), float(tok_s)
    pos += 1
    channels = 3 if color else 1
    dtype = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(data[pos : pos + 4 * w * h * channels], dtype)
    arr = arr.reshape(h, w, channels)[::-1].astype(np.float32)
    return np.ascontiguousarray(arr[..., 0])


def random_crop_pair(rng, left, right, crop_hw, gt=None):
    """Aligned random crop of both views (and the disparity map if given)."""
    ch, cw = crop_hw
    h, w = left.shape[1], left.shape[2]
    if h < ch or w < cw:
        raise ValueError(f"images {h}x{w} smaller than crop {ch}x{cw}")
    y = int(rng.integers(0, h - ch + 1))
    x = int(rng.integers(0, w - cw + 1))
    out = (left[:, y : y + ch, x : x + cw], right[:, y : y + ch, x : x + cw])
    if gt is not None:
        return out + (gt[y : y + ch, x : x + cw],)
    return out


def synthetic_stereo_pair(rng, height, width, shift=4, noise=3.0, texture="smooth"):
    """Textured scene whose right view is the left shifted by `shift` columns.

    Compressible by construction: periodic structure, a few rectangles, mild
    sensor noise.  The "sharp" texture uses fine vertical stripes so that
    pixel-level misalignment is expensive, which is what makes disparity
    warping earn its keep.  Returns (left, right, disparity) with a constant
    ground-truth disparity map.
    """
    pad = width + shift
    yy, xx = np.mgrid[0:height, 0:pad].astype(np.float64)
    if texture == "sharp":
        base = (
            110.0
            + 70.0 * np.sin(2 * np.pi * xx / 13.0)
            + 35.0 * np.cos(2 * np.pi * yy / 29.0)
            + 25.0 * np.sin(2 * np.pi * (2 * xx + yy) / 41.0)
        )
        boxes = 14
        channels = [base, np.roll(base, 5, axis=1), 255.0 - 0.7 * base]
    else:
        base = (
            96.0
            + 60.0 * np.sin(2 * np.pi * xx / 97.0)
            + 40.0 * np.cos(2 * np.pi * yy / 53.0)
            + 30.0 * np.sin(2 * np.pi * (xx + yy) / 151.0)
        )
        boxes = 6
        channels = [base, np.roll(base, 7, axis=1), 255.0 - base]
    scene = np.stack(channels)
    for _ in range(boxes):
        y0 = int(rng.integers(0, max(1, height - 8)))
        x0 = int(rng.integers(0, max(1, pad - 12)))
        hh = int(rng.integers(4, 12))
        ww = int(rng.integers(6, 16))
        scene[:, y0 : y0 + hh, x0 : x0 + ww] = rng.integers(0, 256, 3).reshape(3, 1, 1)
    scene = scene + rng.normal(0, noise, scene.shape)
    scene = np.clip(scene, 0, 255).astype(np.uint8)
    # matching convention: right(w) = left(w + d), objects sit further right
    # in the left view
    left = scene[:, :, :width]
    right = scene[:, :, shift : shift + width]
    disparity = np.full((height, width), float(shift), np.float32)
    return left, right, disparity
