"""Compression/decompression orchestration and the bpsp evaluator.

Coding order: the deepest feature planes of both views go first under the
uniform prior, then scale by scale (coarse to fine) the left feature plane is
coded from the left head and the right plane from warped-and-fused features;
the images come last, left before right, RGB interleaved per pixel.  Every
distribution is computed exactly as the decoder recomputes it: the context
walk below is one code path shared by compression, decompression, and
evaluation, with only the symbol transport swapped out.

Left-view planes never depend on right-view data, and right-view planes
condition only on already-decoded content (decoded left planes and the
coarser volumes), which is what makes the stream decodable.

Images whose sides are not multiples of 2^S are replicate-padded right and
bottom; the coded bits include the padding, the header records the true
dimensions, and decoding strips the padding again.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fastpath
from .container import (
    CONTAINER_MAGIC,
    ROLE_FEATURE,
    ROLE_IMAGE,
    VIEW_LEFT,
    VIEW_RIGHT,
    Container,
    Segment,
)
from .errors import DigestMismatchError, DimensionError, FormatError
from .mixtures import (
    CDF_TOTAL,
    IMAGE_ALPHABET,
    feature_plane_bits,
    image_plane_bits,
    split_feature_params,
    split_image_params,
    uniform_cdf,
)
from .model import CodecModel
from .quantizer import default_levels, quantize_hard

_VIEW_CODE = {"left": VIEW_LEFT, "right": VIEW_RIGHT}
_ROLE_NAME = {ROLE_FEATURE: "Z", ROLE_IMAGE: "X"}


@dataclass(frozen=True)
class StereoPair:
    """Two equally sized 8-bit RGB views as (3, H, W) arrays."""

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        left = _check_image(self.left, "left")
        right = _check_image(self.right, "right")
        if left.shape != right.shape:
            raise DimensionError(
                f"view dimensions differ: left {left.shape[1:]}, right {right.shape[1:]}"
            )
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def height(self):
        return self.left.shape[1]

    @property
    def width(self):
        return self.left.shape[2]


def _check_image(img, name):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] != 3:
        raise DimensionError(f"{name} view must be (3, H, W), got {img.shape}")
    if img.shape[1] < 1 or img.shape[2] < 1:
        raise DimensionError(f"{name} view has an empty dimension: {img.shape}")
    if img.dtype != np.uint8:
        if img.min() < 0 or img.max() > 255:
            raise DimensionError(f"{name} view has values outside 0..255")
        img = img.astype(np.uint8)
    return np.ascontiguousarray(img)


@dataclass
class SegmentStats:
    plane: str
    scale: int
    view: str
    symbols: int
    ideal_bits: float
    actual_bits: int | None = None
    table_bits: float | None = None


@dataclass
class CodingReport:
    width: int
    height: int
    views: tuple[str, ...]
    segments: list[SegmentStats] = field(default_factory=list)
    container_bytes: int | None = None
    psnr_warped: float | None = None
    ssim_warped: float | None = None

    def _bits(self, view, kind):
        vals = [getattr(s, f"{kind}_bits") for s in self.segments if s.view == view]
        if any(v is None for v in vals):
            return None
        return float(sum(vals))

    def bits(self, view="all", kind=None):
        """Total bits for one view or both.

        `kind` is "actual" (coded segment bytes), "ideal" (model float
        cross-entropy), or "table" (quantized-table cross-entropy); default
        is actual when available, else ideal.
        """
        if kind is None:
            kind = "actual" if all(s.actual_bits is not None for s in self.segments) else "ideal"
        views = self.views if view == "all" else (view,)
        total = 0.0
        for v in views:
            b = self._bits(v, kind)
            if b is None:
                return None
            total += b
        return total

    def bpsp(self, view="all", kind=None):
        """Bits per image subpixel; feature bits count as overhead."""
        denom = 3.0 * self.width * self.height
        if view == "all":
            denom *= len(self.views)
        bits = self.bits(view, kind)
        return None if bits is None else bits / denom

    @property
    def file_bpsp(self):
        """Whole-container bits per subpixel (includes header overhead)."""
        if self.container_bytes is None:
            return None
        return 8.0 * self.container_bytes / (3.0 * self.width * self.height * len(self.views))

    def as_record(self):
        rec = {
            "width": self.width,
            "height": self.height,
            "views": len(self.views),
        }
        for v in self.views:
            rec[f"bpsp_{v}"] = self.bpsp(v)
        rec["bpsp_all"] = self.bpsp("all")
        rec["ideal_bits"] = self.bits("all", kind="ideal")
        actual = self.bits("all", kind="actual")
        if actual is not None:
            rec["actual_bits"] = actual
        if self.container_bytes is not None:
            rec["container_bytes"] = self.container_bytes
            rec["file_bpsp"] = self.file_bpsp
        if self.psnr_warped is not None:
            psnr = self.psnr_warped
            rec["psnr_warped_right"] = "inf" if psnr == float("inf") else psnr
            rec["ssim_warped_right"] = self.ssim_warped
        rec["segments"] = [
            {
                "plane": s.plane,
                "scale": s.scale,
                "view": s.view,
                "symbols": s.symbols,
                "ideal_bits": s.ideal_bits,
                "actual_bits": s.actual_bits,
                "table_bits": s.table_bits,
            }
            for s in self.segments
        ]
        return rec


@dataclass
class DecodeResult:
    left: np.ndarray
    right: np.ndarray | None
    disparities: list[np.ndarray]
    warped_right: np.ndarray | None


@dataclass
class EvalResult:
    report: CodingReport
    disparities: list[np.ndarray]
    warped_right: np.ndarray | None


def _pad_to_multiple(img, mult):
    h, w = img.shape[-2:]
    hp = -(-h // mult) * mult
    wp = -(-w // mult) * mult
    if (hp, wp) == (h, w):
        return np.asarray(img)
    pad = [(0, 0)] * (img.ndim - 2) + [(0, hp - h), (0, wp - w)]
    return np.pad(img, pad, mode="edge")


def _normalize(img_u8):
    return (img_u8.astype(np.float32) / np.float32(127.5)) - np.float32(1.0)


def _uniform_table_bits(cdf, symbols):
    counts = np.diff(cdf.astype(np.int64))
    return float(-np.log2(counts[np.asarray(symbols).reshape(-1)] / CDF_TOTAL).sum())


# ---------------------------------------------------------------------------
# Symbol transports: one context walk, three ways to move the symbols.
# ---------------------------------------------------------------------------


class _TransportBase:
    def __init__(self, config):
        self.config = config
        self.levels = default_levels(config.levels)
        self.rows: list[SegmentStats] = []
        self.planes: dict[tuple, np.ndarray] = {}
        self.capture_params = False
        self.params_log: list[tuple] = []

    def _ideal_bits(self, role, params_raw, symbols):
        cfg = self.config
        if params_raw is None:
            alphabet = IMAGE_ALPHABET if role == ROLE_IMAGE else cfg.levels
            return _uniform_table_bits(uniform_cdf(alphabet), symbols)
        if role == ROLE_IMAGE:
            blocks = split_image_params(params_raw, cfg.mixture_k)
            return float(image_plane_bits(*blocks, symbols).sum())
        blocks = split_feature_params(params_raw, cfg.feature_channels, cfg.mixture_k)
        return float(feature_plane_bits(*blocks, symbols, self.levels).sum())

    def _record(self, role, scale, view, symbols, ideal, actual, params_raw=None, table_bits=None):
        self.rows.append(
            SegmentStats(
                _ROLE_NAME[role], scale, view, int(np.asarray(symbols).size), ideal, actual, table_bits
            )
        )
        self.planes[(role, scale, view)] = symbols
        if self.capture_params:
            self.params_log.append(((role, scale, view), params_raw))


class _EncodeTransport(_TransportBase):
    """Knows the symbols already; emits coded segments."""

    def __init__(self, config, symbols):
        super().__init__(config)
        self._symbols = symbols
        self.segments: list[Segment] = []

    def code_plane(self, role, scale, view, shape, params_raw):
        sym = self._symbols[(role, scale, view)]
        cfg = self.config
        if params_raw is None:
            cdf = uniform_cdf(IMAGE_ALPHABET if role == ROLE_IMAGE else cfg.levels)
            payload, tbits = fastpath.encode_shared_cdf(sym, cdf)
        elif role == ROLE_IMAGE:
            payload, tbits = fastpath.encode_image_plane(params_raw, cfg.mixture_k, sym)
        else:
            payload, tbits = fastpath.encode_feature_plane(
                params_raw, cfg.feature_channels, cfg.mixture_k, self.levels, sym
            )
        self.segments.append(Segment(role, scale, _VIEW_CODE[view], payload))
        ideal = self._ideal_bits(role, params_raw, sym)
        self._record(role, scale, view, sym, ideal, 8 * len(payload), params_raw, tbits)
        return sym


class _OneHotTransport(_TransportBase):
    """Test double: codes every plane with a one-hot table at the true symbol."""

    def __init__(self, config, symbols):
        super().__init__(config)
        self._symbols = symbols
        self.segments: list[Segment] = []

    def code_plane(self, role, scale, view, shape, params_raw):
        sym = self._symbols[(role, scale, view)]
        alphabet = IMAGE_ALPHABET if role == ROLE_IMAGE else self.config.levels
        flat = np.asarray(sym, dtype=np.int64).reshape(-1)
        counts = np.ones((flat.size, alphabet), np.uint32)
        counts[np.arange(flat.size), flat] = CDF_TOTAL - (alphabet - 1)
        tables = np.zeros((flat.size, alphabet + 1), np.uint32)
        tables[:, 1:] = np.cumsum(counts, axis=1)
        payload, tbits = fastpath.encode_with_tables(flat, tables)
        self.segments.append(Segment(role, scale, _VIEW_CODE[view], payload))
        ideal = flat.size * -np.log2((CDF_TOTAL - (alphabet - 1)) / CDF_TOTAL)
        self._record(role, scale, view, sym, float(ideal), 8 * len(payload), None, tbits)
        return sym


class _DecodeTransport(_TransportBase):
    """Pulls segments in walk order and decodes them."""

    def __init__(self, config, segments):
        super().__init__(config)
        self._segments = list(segments)
        self._next = 0

    def code_plane(self, role, scale, view, shape, params_raw):
        if self._next >= len(self._segments):
            raise FormatError("container is missing segments for the declared layout")
        seg = self._segments[self._next]
        self._next += 1
        if seg.tag != (role, scale, _VIEW_CODE[view]):
            raise FormatError(
                f"segment {self._next - 1} is {seg.tag}, expected {(role, scale, _VIEW_CODE[view])}"
            )
        cfg = self.config
        if params_raw is None:
            cdf = uniform_cdf(IMAGE_ALPHABET if role == ROLE_IMAGE else cfg.levels)
            sym = fastpath.decode_shared_cdf(seg.payload, cdf, int(np.prod(shape))).reshape(shape)
        elif role == ROLE_IMAGE:
            sym = fastpath.decode_image_plane(
                params_raw, cfg.mixture_k, seg.payload, shape[1], shape[2]
            )
        else:
            sym = fastpath.decode_feature_plane(
                params_raw, cfg.feature_channels, cfg.mixture_k, self.levels, seg.payload
            )
        self._record(role, scale, view, sym, 0.0, 8 * len(seg.payload), params_raw)
        return sym


class _EvalTransport(_TransportBase):
    """No coding: accounts ideal bits for the known symbols."""

    def __init__(self, config, symbols):
        super().__init__(config)
        self._symbols = symbols

    def code_plane(self, role, scale, view, shape, params_raw):
        sym = self._symbols[(role, scale, view)]
        ideal = self._ideal_bits(role, params_raw, sym)
        self._record(role, scale, view, sym, ideal, None, params_raw)
        return sym


# ---------------------------------------------------------------------------
# The shared context walk.
# ---------------------------------------------------------------------------


def _pipeline_walk(model: CodecModel, transport, views, padded_hw):
    cfg = model.config
    S = cfg.scales
    lv = transport.levels
    hp, wp = padded_hw
    stereo = len(views) == 2
    disparities = []
    warped_right = None

    def fshape(s):
        return (cfg.feature_channels, hp >> s, wp >> s)

    z_vals = {}
    for v in views:
        sym = transport.code_plane(ROLE_FEATURE, S, v, fshape(S), None)
        z_vals[v] = lv[sym]
    f = {v: model.decoder_forward(z_vals[v][None], None, S) for v in views}
    f_cv = None
    for s in range(S - 1, 0, -1):
        params_l = model.prob_head_forward(f["left"], s + 1, "left")[0]
        sym_l = transport.code_plane(ROLE_FEATURE, s, "left", fshape(s), params_l)
        z_l = lv[sym_l]
        z_r = None
        if stereo:
            warped, f_cv, disp = model.warp_block_forward(
                f["left"], f["right"], f_cv, z_l[None], s + 1
            )
            disparities.append(disp[0])
            fused = model.fuse_right(f["right"], warped, s + 1)
            params_r = model.prob_head_forward(fused, s + 1, "right")[0]
            sym_r = transport.code_plane(ROLE_FEATURE, s, "right", fshape(s), params_r)
            z_r = lv[sym_r]
        nxt = {"left": model.decoder_forward(z_l[None], f["left"], s)}
        if stereo:
            nxt["right"] = model.decoder_forward(z_r[None], f["right"], s)
        f = nxt
    params_l = model.prob_head_forward(f["left"], 1, "left")[0]
    img_l = transport.code_plane(ROLE_IMAGE, 0, "left", (3, hp, wp), params_l)
    images = {"left": img_l}
    if stereo:
        x_ln = _normalize(img_l)
        warped, f_cv, disp = model.warp_block_forward(f["left"], f["right"], f_cv, x_ln[None], 1)
        disparities.append(disp[0])
        warped_right = warped[0]
        fused = model.fuse_right(f["right"], warped, 1)
        params_r = model.prob_head_forward(fused, 1, "right")[0]
        images["right"] = transport.code_plane(ROLE_IMAGE, 0, "right", (3, hp, wp), params_r)
    return images, disparities, warped_right


def _encode_feature_symbols(model: CodecModel, x_norm):
    """Run the encoder chain and hard-quantize every scale's features."""
    spec = model.config.quantizer()
    symbols = {}
    cur = x_norm
    for s in range(1, model.config.scales + 1):
        z_tilde, cur = model.encoder_forward(cur, s)
        _, idx = quantize_hard(z_tilde[0], spec)
        symbols[s] = idx
    return symbols


def _gather_symbols(model, pair_or_image, views, padded_hw):
    symbols = {}
    for view in views:
        img = pair_or_image[view]
        padded = _pad_to_multiple(img, model.config.pad_multiple)
        symbols[(ROLE_IMAGE, 0, view)] = padded.astype(np.int64)
        feats = _encode_feature_symbols(model, _normalize(padded)[None])
        for s, idx in feats.items():
            symbols[(ROLE_FEATURE, s, view)] = idx
    return symbols


def _make_container(model, width, height, transport):
    cfg = model.config
    return Container(
        width=width,
        height=height,
        scales=cfg.scales,
        feature_channels=cfg.feature_channels,
        mixture_k=cfg.mixture_k,
        max_disparity=cfg.max_disparity,
        weight_digest=model.store.digest,
        segments=transport.segments,
    )


def _finish_report(transport, width, height, views, blob=None, quality=None):
    report = CodingReport(width=width, height=height, views=tuple(views))
    report.segments = transport.rows
    if blob is not None:
        report.container_bytes = len(blob)
    if quality is not None:
        report.psnr_warped, report.ssim_warped = quality
    return report


def compress(pair: StereoPair, model: CodecModel, mode="model"):
    """Compress a stereo pair; returns (container bytes, CodingReport).

    `mode` selects the distribution source: "model" is the real pipeline;
    "uniform" codes only the two image planes under flat tables (coder
    sanity diagnostic); "onehot" runs the real pipeline but injects oracle
    one-hot tables (size-accounting diagnostic, not decodable).
    """
    views = ("left", "right")
    data = {"left": pair.left, "right": pair.right}
    if mode == "uniform":
        return _compress_uniform(data, views, pair.width, pair.height, model)
    padded_hw = _padded_dims(pair.height, pair.width, model.config.pad_multiple)
    symbols = _gather_symbols(model, data, views, padded_hw)
    if mode == "onehot":
        transport = _OneHotTransport(model.config, symbols)
    elif mode == "model":
        transport = _EncodeTransport(model.config, symbols)
    else:
        raise ValueError(f"unknown compression mode {mode!r}")
    _pipeline_walk(model, transport, views, padded_hw)
    container = _make_container(model, pair.width, pair.height, transport)
    blob = container.serialize()
    return blob, _finish_report(transport, pair.width, pair.height, views, blob)


def compress_single(image, model: CodecModel):
    """Left-view-only pipeline (the single-image baseline path)."""
    image = _check_image(image, "left")
    views = ("left",)
    h, w = image.shape[1], image.shape[2]
    padded_hw = _padded_dims(h, w, model.config.pad_multiple)
    symbols = _gather_symbols(model, {"left": image}, views, padded_hw)
    transport = _EncodeTransport(model.config, symbols)
    _pipeline_walk(model, transport, views, padded_hw)
    container = _make_container(model, w, h, transport)
    blob = container.serialize()
    return blob, _finish_report(transport, w, h, views, blob)


def _padded_dims(height, width, mult):
    return (-(-height // mult) * mult, -(-width // mult) * mult)


def _compress_uniform(data, views, width, height, model=None):
    cfg = model.config if model is not None else None
    segments = []
    rows = []
    cdf = uniform_cdf(IMAGE_ALPHABET)
    for view in views:
        sym = data[view].astype(np.int64)
        payload, tbits = fastpath.encode_shared_cdf(sym, cdf)
        segments.append(Segment(ROLE_IMAGE, 0, _VIEW_CODE[view], payload))
        rows.append(
            SegmentStats("X", 0, view, sym.size, _uniform_table_bits(cdf, sym), 8 * len(payload), tbits)
        )
    container = Container(
        width=width,
        height=height,
        scales=cfg.scales if cfg else 1,
        feature_channels=cfg.feature_channels if cfg else 1,
        mixture_k=cfg.mixture_k if cfg else 1,
        max_disparity=cfg.max_disparity if cfg else 1,
        weight_digest=model.store.digest if model is not None else 0,
        segments=segments,
    )
    blob = container.serialize()
    report = CodingReport(width=width, height=height, views=tuple(views))
    report.segments = rows
    report.container_bytes = len(blob)
    return blob, report


def decompress(blob: bytes, model: CodecModel | None = None) -> DecodeResult:
    """Decode a container; verifies CRC, digest, and config before decoding."""
    container = Container.parse(blob)
    views = ("left", "right") if container.has_right_view() else ("left",)
    if not container.has_feature_segments():
        return _decompress_uniform(container, views)
    if model is None:
        raise ValueError("model-coded containers need the matching weights")
    cfg = model.config
    if container.weight_digest != model.store.digest:
        raise DigestMismatchError(
            f"container was coded with weight digest {container.weight_digest:#018x}, "
            f"loaded weights have {model.store.digest:#018x}"
        )
    declared = (container.scales, container.feature_channels, container.mixture_k, container.max_disparity)
    configured = (cfg.scales, cfg.feature_channels, cfg.mixture_k, cfg.max_disparity)
    if declared != configured:
        raise FormatError(
            f"container config {declared} does not match model config {configured}"
        )
    padded_hw = _padded_dims(container.height, container.width, cfg.pad_multiple)
    transport = _DecodeTransport(cfg, container.segments)
    images, disparities, warped = _pipeline_walk(model, transport, views, padded_hw)
    h, w = container.height, container.width
    left = images["left"][:, :h, :w].astype(np.uint8)
    right = images.get("right")
    if right is not None:
        right = right[:, :h, :w].astype(np.uint8)
    if warped is not None:
        warped = warped[:, :h, :w]
    return DecodeResult(left, right, disparities, warped)


def _decompress_uniform(container, views):
    cdf = uniform_cdf(IMAGE_ALPHABET)
    h, w = container.height, container.width
    out = {}
    for seg, view in zip(container.segments, views):
        sym = fastpath.decode_shared_cdf(seg.payload, cdf, 3 * h * w).reshape(3, h, w)
        out[view] = sym.astype(np.uint8)
    return DecodeResult(out["left"], out.get("right"), [], None)


def evaluate(pair: StereoPair, model: CodecModel, pmf_mode="model") -> EvalResult:
    """Ideal cross-entropy bits without running the coder, plus quality stats.

    With pmf_mode="uniform" every symbol is charged log2(alphabet) bits,
    the analytic no-model floor.
    """
    views = ("left", "right")
    width, height = pair.width, pair.height
    cfg = model.config
    padded_hw = _padded_dims(height, width, cfg.pad_multiple)
    if pmf_mode == "uniform":
        report = CodingReport(width=width, height=height, views=views)
        hp, wp = padded_hw
        for view in views:
            for s in range(cfg.scales, 0, -1):
                n = cfg.feature_channels * (hp >> s) * (wp >> s)
                report.segments.append(
                    SegmentStats("Z", s, view, n, n * float(np.log2(cfg.levels)), None)
                )
            n = 3 * hp * wp
            report.segments.append(
                SegmentStats("X", 0, view, n, n * float(np.log2(IMAGE_ALPHABET)), None)
            )
        return EvalResult(report, [], None)
    if pmf_mode != "model":
        raise ValueError(f"unknown pmf mode {pmf_mode!r}")
    data = {"left": pair.left, "right": pair.right}
    symbols = _gather_symbols(model, data, views, padded_hw)
    transport = _EvalTransport(cfg, symbols)
    _, disparities, warped = _pipeline_walk(model, transport, views, padded_hw)
    quality = None
    warped_u8 = None
    if warped is not None:
        from .metrics import psnr, ssim

        w_img = np.clip(np.rint((warped.astype(np.float64) + 1.0) * 127.5), 0, 255)
        warped_u8 = w_img[:, :height, :width].astype(np.uint8)
        quality = (psnr(warped_u8, pair.right), ssim(warped_u8, pair.right))
    report = _finish_report(transport, width, height, views, None, quality)
    return EvalResult(report, disparities, warped_u8)
