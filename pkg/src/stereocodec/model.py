"""Network graph: encoders, decoders, probability heads, warp aggregation.

The architecture is a fixed recipe over the deterministic kernels:

* encoder stage  = residual block (3x3 stride 2) + residual block (3x3) +
  3x3 projection down to the quantized feature channels,
* decoder stage  = 3x3 stem over [features, coarser decoder output] + two
  residual blocks + 3x3 conv to 4x hidden channels + pixel shuffle x2,
* probability head = three dilated 3x3 convs (rates 1, 2, 4) concatenated,
  mixed by a 1x1 conv, then a linear 1x1 conv to the mixture parameters,
* warp aggregation = two 3x3x3 convs at width 16 and a 1x1x1 collapse to a
  single channel over the cost volume (plus the upsampled coarser volume),
* right-view fusion = channel concat + linear 1x1 conv back to hidden width.

Residual blocks are conv(3x3, stride) -> leaky-relu(0.2) -> conv(3x3) with an
additive skip (1x1 projection when shape changes).  Weights live in a named
WeightStore with a portable binary format and an FNV-1a content digest.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import kernels, warp
from .errors import DigestMismatchError, FormatError, TruncatedError
from .fastpath import fnv1a64
from .mixtures import feature_param_channels, image_param_channels
from .quantizer import QuantizerSpec, default_levels

WEIGHT_MAGIC = b"L3CW"
WEIGHT_VERSION = 1
AGG_HIDDEN = 16
LEAK = 0.2


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyper-parameters shared by weights and containers."""

    scales: int = 3
    feature_channels: int = 5
    hidden: int = 64
    mixture_k: int = 10
    max_disparity: int = 64
    levels: int = 25
    softness: float = 2.0

    def __post_init__(self):
        if self.scales < 1:
            raise ValueError("at least one scale is required")
        if self.feature_channels < 1 or self.hidden < 1 or self.mixture_k < 1:
            raise ValueError("channel counts and mixture size must be positive")
        if self.max_disparity < 1 or self.max_disparity % (1 << (self.scales - 1)) != 0:
            raise ValueError(
                f"max disparity {self.max_disparity} must be divisible by 2^(S-1)"
            )
        if self.levels < 2:
            raise ValueError("need at least two quantizer levels")

    @property
    def pad_multiple(self):
        return 1 << self.scales

    def quantizer(self):
        return QuantizerSpec(default_levels(self.levels), self.softness)

    def disparity_at_scale(self, s, width):
        """Search window at warp scale s, clipped to the plane width."""
        return max(1, min(self.max_disparity >> (s - 1), width))


def param_specs(config: ModelConfig):
    """Ordered (name, shape, init_fan_in) for every parameter of the graph."""
    S, C, h, K = config.scales, config.feature_channels, config.hidden, config.mixture_k
    specs = []

    def conv(name, out_ch, in_ch, *kernel):
        shape = (out_ch, in_ch) + kernel
        fan_in = in_ch * int(np.prod(kernel))
        specs.append((f"{name}.weight", shape, fan_in))
        specs.append((f"{name}.bias", (out_ch,), fan_in))

    def res_block(name, in_ch, out_ch, stride):
        conv(f"{name}.conv1", out_ch, in_ch, 3, 3)
        conv(f"{name}.conv2", out_ch, out_ch, 3, 3)
        if in_ch != out_ch or stride != 1:
            conv(f"{name}.proj", out_ch, in_ch, 1, 1)

    for s in range(1, S + 1):
        in_ch = 3 if s == 1 else h
        res_block(f"enc{s}.b1", in_ch, h, 2)
        res_block(f"enc{s}.b2", h, h, 1)
        conv(f"enc{s}.out", C, h, 3, 3)
    for s in range(1, S + 1):
        conv(f"dec{s}.stem", h, C + h, 3, 3)
        res_block(f"dec{s}.b1", h, h, 1)
        res_block(f"dec{s}.b2", h, h, 1)
        conv(f"dec{s}.up", 4 * h, h, 3, 3)
    for view in ("l", "r"):
        for s in range(1, S + 1):
            n_out = image_param_channels(K) if s == 1 else feature_param_channels(C, K)
            conv(f"p{view}{s}.dil1", h, h, 3, 3)
            conv(f"p{view}{s}.dil2", h, h, 3, 3)
            conv(f"p{view}{s}.dil4", h, h, 3, 3)
            conv(f"p{view}{s}.mix", h, 3 * h, 1, 1)
            conv(f"p{view}{s}.head", n_out, h, 1, 1)
    for s in range(1, S + 1):
        cv_ch = h + (0 if s == S else 1)
        conv(f"warp{s}.agg1", AGG_HIDDEN, cv_ch, 3, 3, 3)
        conv(f"warp{s}.agg2", AGG_HIDDEN, AGG_HIDDEN, 3, 3, 3)
        conv(f"warp{s}.agg3", 1, AGG_HIDDEN, 1, 1, 1)
        conv(f"fuse{s}", h, h + (3 if s == 1 else C), 1, 1)
    return specs


class WeightStore:
    """Immutable named float32 tensors plus a 64-bit content digest."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        self._tensors = {
            name: np.ascontiguousarray(t, dtype=np.float32) for name, t in tensors.items()
        }
        self._digest = fnv1a64(self._serialize_entries())

    def __getitem__(self, name):
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def names(self):
        return sorted(self._tensors)

    @property
    def digest(self) -> int:
        return self._digest

    def _serialize_entries(self) -> bytes:
        parts = []
        for name in self.names():
            t = self._tensors[name]
            nb = name.encode("utf-8")
            parts.append(struct.pack("<H", len(nb)))
            parts.append(nb)
            parts.append(struct.pack("<B", t.ndim))
            parts.append(struct.pack(f"<{t.ndim}I", *t.shape))
            parts.append(t.tobytes())
        return b"".join(parts)


def validate_store(config: ModelConfig, store: WeightStore):
    """Every parameter required by the config must be present and shaped right."""
    expected = {name: shape for name, shape, _ in param_specs(config)}
    for name, shape in expected.items():
        if name not in store:
            raise FormatError(f"weight store is missing parameter {name!r}")
        if store[name].shape != shape:
            raise FormatError(
                f"parameter {name!r} has shape {store[name].shape}, expected {shape}"
            )
    extra = set(store.names()) - set(expected)
    if extra:
        raise FormatError(f"weight store has unexpected parameters: {sorted(extra)[:4]}")


def init_weights(config: ModelConfig, seed: int) -> WeightStore:
    """Deterministic fan-in scaled uniform init; same seed, same digest."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape, fan_in in param_specs(config):
        bound = 1.0 / np.sqrt(fan_in)
        tensors[name] = rng.uniform(-bound, bound, shape).astype(np.float32)
    return WeightStore(tensors)


def _config_block(config: ModelConfig) -> bytes:
    return struct.pack(
        "<BBHBH",
        config.scales,
        config.feature_channels,
        config.hidden,
        config.mixture_k,
        config.max_disparity,
    )


def save_weights(store: WeightStore, config: ModelConfig, path):
    """Write the portable weight file; returns the store content digest.

    The file carries its own trailing FNV-1a digest over all preceding bytes;
    the content digest (entries only) is what containers embed and compare.
    """
    validate_store(config, store)
    body = bytearray()
    body += WEIGHT_MAGIC
    body += struct.pack("<B", WEIGHT_VERSION)
    body += _config_block(config)
    body += struct.pack("<I", len(store.names()))
    body += store._serialize_entries()
    body += struct.pack("<Q", fnv1a64(bytes(body)))
    with open(path, "wb") as f:
        f.write(body)
    return store.digest


def load_weights(path):
    """Read a weight file; returns (ModelConfig, WeightStore).

    Raises FormatError/TruncatedError/DigestMismatchError for bad files.
    """
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4 + 1 + 7 + 4 + 8:
        raise TruncatedError(f"weight file is only {len(raw)} bytes")
    if raw[:4] != WEIGHT_MAGIC:
        raise FormatError(f"bad weight magic {raw[:4]!r}")
    if raw[4] != WEIGHT_VERSION:
        raise FormatError(f"unknown weight file version {raw[4]}")
    stored_digest = struct.unpack("<Q", raw[-8:])[0]
    actual = fnv1a64(raw[:-8])
    if stored_digest != actual:
        raise DigestMismatchError(
            f"weight file digest {stored_digest:#018x} != computed {actual:#018x}"
        )
    S, C, hidden, K, dmax = struct.unpack("<BBHBH", raw[5:12])
    config = ModelConfig(scales=S, feature_channels=C, hidden=hidden, mixture_k=K, max_disparity=dmax)
    (count,) = struct.unpack("<I", raw[12:16])
    pos = 16
    end = len(raw) - 8
    tensors = {}
    for _ in range(count):
        if pos + 2 > end:
            raise TruncatedError("weight file ends inside an entry header")
        (nlen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos : pos + nlen].decode("utf-8")
        pos += nlen
        if pos + 1 > end:
            raise TruncatedError(f"weight file ends before shape of {name!r}")
        rank = raw[pos]
        pos += 1
        if pos + 4 * rank > end:
            raise TruncatedError(f"weight file ends inside shape of {name!r}")
        shape = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        nbytes = 4 * int(np.prod(shape)) if rank else 4
        if pos + nbytes > end:
            raise TruncatedError(f"weight file ends inside data of {name!r}")
        data = np.frombuffer(raw, np.dtype("<f4"), count=nbytes // 4, offset=pos)
        tensors[name] = data.reshape(shape).copy()
        pos += nbytes
    if pos != end:
        raise FormatError(f"{end - pos} unexpected trailing bytes in weight file")
    store = WeightStore(tensors)
    validate_store(config, store)
    return config, store


class CodecModel:
    """Forward passes over a validated (config, weights) pair."""

    def __init__(self, config: ModelConfig, store: WeightStore):
        validate_store(config, store)
        self.config = config
        self.store = store

    def _conv(self, x, name, stride=1, dilation=1, pad=0):
        return kernels.conv2d(
            x, self.store[f"{name}.weight"], self.store[f"{name}.bias"],
            stride=stride, dilation=dilation, zero_padding=pad,
        )

    def _res_block(self, x, name, stride):
        h = self._conv(x, f"{name}.conv1", stride=stride, pad=1)
        h = kernels.leaky_relu(h, LEAK)
        h = self._conv(h, f"{name}.conv2", pad=1)
        if f"{name}.proj.weight" in self.store:
            skip = self._conv(x, f"{name}.proj", stride=stride)
        else:
            skip = x
        return h + skip

    def encoder_forward(self, x, s):
        """One encoder stage: halves the resolution, returns (z_tilde, skip)."""
        h = self._res_block(x, f"enc{s}.b1", stride=2)
        h = self._res_block(h, f"enc{s}.b2", stride=1)
        z = self._conv(h, f"enc{s}.out", pad=1)
        return z, h

    def decoder_forward(self, z_values, f_next, s):
        """One decoder stage: doubles the resolution of the feature map."""
        n, _, hh, ww = z_values.shape
        if f_next is None:
            f_next = np.zeros((n, self.config.hidden, hh, ww), np.float32)
        if f_next.shape[2:] != (hh, ww):
            raise ValueError(
                f"scale-{s} decoder: features {z_values.shape} vs carry {f_next.shape}"
            )
        x = np.concatenate([z_values, f_next], axis=1)
        x = kernels.leaky_relu(self._conv(x, f"dec{s}.stem", pad=1), LEAK)
        x = self._res_block(x, f"dec{s}.b1", stride=1)
        x = self._res_block(x, f"dec{s}.b2", stride=1)
        x = self._conv(x, f"dec{s}.up", pad=1)
        return kernels.pixel_shuffle(x, 2)

    def prob_head_forward(self, f, s, view):
        """Mixture parameter planes for the plane coded below scale s."""
        v = view[0].lower()
        if v not in ("l", "r"):
            raise ValueError(f"view must be left or right, got {view!r}")
        name = f"p{v}{s}"
        d1 = kernels.leaky_relu(self._conv(f, f"{name}.dil1", dilation=1, pad=1), LEAK)
        d2 = kernels.leaky_relu(self._conv(f, f"{name}.dil2", dilation=2, pad=2), LEAK)
        d4 = kernels.leaky_relu(self._conv(f, f"{name}.dil4", dilation=4, pad=4), LEAK)
        m = kernels.leaky_relu(self._conv(np.concatenate([d1, d2, d4], axis=1), f"{name}.mix"), LEAK)
        return self._conv(m, f"{name}.head")

    def warp_block_forward(self, f_left, f_right, f_cv_next, left_plane, s, aggregation=None):
        """Cost volume -> aggregation -> softmax -> warp and soft-argmax.

        Returns (warped_plane, aggregated_volume, disparity_map); the
        aggregated (pre-softmax) volume feeds the next finer warp block.
        `aggregation` may override the conv block (test hook).
        """
        d = self.config.disparity_at_scale(s, f_left.shape[-1])
        cv = warp.build_cost_volume(f_left, f_right, d)
        if f_cv_next is not None:
            up = kernels.interpolate(f_cv_next[:, None], 2, mode="trilinear")
            if up.shape[2:] != cv.shape[2:]:
                raise ValueError(
                    f"carried volume {up.shape} does not match cost volume {cv.shape}"
                )
            cv = np.concatenate([cv, up], axis=1)
        if aggregation is not None:
            vol = aggregation(cv)
        else:
            a = kernels.leaky_relu(
                kernels.conv3d(cv, self.store[f"warp{s}.agg1.weight"], self.store[f"warp{s}.agg1.bias"], zero_padding=1),
                LEAK,
            )
            a = kernels.leaky_relu(
                kernels.conv3d(a, self.store[f"warp{s}.agg2.weight"], self.store[f"warp{s}.agg2.bias"], zero_padding=1),
                LEAK,
            )
            vol = kernels.conv3d(a, self.store[f"warp{s}.agg3.weight"], self.store[f"warp{s}.agg3.bias"])[:, 0]
        prob = warp.normalize_volume(vol)
        warped = warp.soft_warp(left_plane, prob)
        disparity = warp.disparity_from_volume(prob)
        return warped, vol, disparity

    def fuse_right(self, f_right, warped_plane, s):
        """Concat the warped plane onto the right features, 1x1 back to hidden."""
        if f_right.shape[2:] != warped_plane.shape[2:]:
            raise ValueError(
                f"fusion shapes differ: {f_right.shape} vs {warped_plane.shape}"
            )
        x = np.concatenate([f_right, warped_plane], axis=1)
        return self._conv(x, f"fuse{s}")
