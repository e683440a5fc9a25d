"""Torch mirror of the codec architecture.

Module names follow the codec's canonical parameter names (with '/' in place
of '.' for ModuleDict), so exporting a checkpoint is a mechanical rename.
Every forward detail mirrors the inference side: leaky-relu 0.2 after the
first conv of a residual block and after decoder stems / head mixes, no
activation after residual adds, projections on shape-changing skips, dilated
head branches concatenated in rate order, cost aggregation at width 16, and
1x1 linear fusion of the warped plane into the right-view features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .quant import DEFAULT_SOFTNESS, level_grid, quantize_ste

AGG_HIDDEN = 16
LEAK = 0.2


@dataclass(frozen=True)
class ArchConfig:
    """Architecture hyper-parameters; must match the codec's ModelConfig."""

    scales: int = 3
    feature_channels: int = 5
    hidden: int = 64
    mixture_k: int = 10
    max_disparity: int = 64
    levels: int = 25
    softness: float = DEFAULT_SOFTNESS

    def __post_init__(self):
        if self.max_disparity % (1 << (self.scales - 1)) != 0:
            raise ValueError("max disparity must be divisible by 2^(S-1)")

    @property
    def pad_multiple(self):
        return 1 << self.scales

    def image_param_channels(self):
        return 4 * 3 * self.mixture_k

    def feature_param_channels(self):
        return 3 * self.feature_channels * self.mixture_k

    def disparity_at_scale(self, s, width):
        return max(1, min(self.max_disparity >> (s - 1), width))


class StereoModel(nn.Module):
    """The full graph; parameters addressable by their codec names."""

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.cfg = cfg
        self.register_buffer("levels", level_grid(cfg.levels))
        self.m = nn.ModuleDict()
        S, C, h, K = cfg.scales, cfg.feature_channels, cfg.hidden, cfg.mixture_k

        def conv2(name, out_c, in_c, k, stride=1, dilation=1, padding=0):
            self.m[name.replace(".", "/")] = nn.Conv2d(
                in_c, out_c, k, stride=stride, padding=padding, dilation=dilation
            )

        def conv3(name, out_c, in_c, k, padding=0):
            self.m[name.replace(".", "/")] = nn.Conv3d(in_c, out_c, k, padding=padding)

        def res_block(name, in_c, out_c, stride):
            conv2(f"{name}.conv1", out_c, in_c, 3, stride=stride, padding=1)
            conv2(f"{name}.conv2", out_c, out_c, 3, padding=1)
            if in_c != out_c or stride != 1:
                conv2(f"{name}.proj", out_c, in_c, 1, stride=stride)

        for s in range(1, S + 1):
            in_c = 3 if s == 1 else h
            res_block(f"enc{s}.b1", in_c, h, 2)
            res_block(f"enc{s}.b2", h, h, 1)
            conv2(f"enc{s}.out", C, h, 3, padding=1)
        for s in range(1, S + 1):
            conv2(f"dec{s}.stem", h, C + h, 3, padding=1)
            res_block(f"dec{s}.b1", h, h, 1)
            res_block(f"dec{s}.b2", h, h, 1)
            conv2(f"dec{s}.up", 4 * h, h, 3, padding=1)
        for view in ("l", "r"):
            for s in range(1, S + 1):
                n_out = cfg.image_param_channels() if s == 1 else cfg.feature_param_channels()
                conv2(f"p{view}{s}.dil1", h, h, 3, dilation=1, padding=1)
                conv2(f"p{view}{s}.dil2", h, h, 3, dilation=2, padding=2)
                conv2(f"p{view}{s}.dil4", h, h, 3, dilation=4, padding=4)
                conv2(f"p{view}{s}.mix", h, 3 * h, 1)
                conv2(f"p{view}{s}.head", n_out, h, 1)
        for s in range(1, S + 1):
            cv_ch = h + (0 if s == S else 1)
            conv3(f"warp{s}.agg1", AGG_HIDDEN, cv_ch, 3, padding=1)
            conv3(f"warp{s}.agg2", AGG_HIDDEN, AGG_HIDDEN, 3, padding=1)
            conv3(f"warp{s}.agg3", 1, AGG_HIDDEN, 1)
            conv2(f"fuse{s}", h, h + (3 if s == 1 else C), 1)

    def c(self, name):
        return self.m[name.replace(".", "/")]

    def _res(self, x, name, stride):
        h = self.c(f"{name}.conv2")(F.leaky_relu(self.c(f"{name}.conv1")(x), LEAK))
        key = f"{name}.proj".replace(".", "/")
        skip = self.m[key](x) if key in self.m else x
        return h + skip

    def encoder_forward(self, x, s):
        h = self._res(x, f"enc{s}.b1", 2)
        h = self._res(h, f"enc{s}.b2", 1)
        return self.c(f"enc{s}.out")(h), h

    def decoder_forward(self, z_values, f_next, s):
        if f_next is None:
            n, _, hh, ww = z_values.shape
            f_next = torch.zeros(n, self.cfg.hidden, hh, ww, dtype=z_values.dtype,
                                 device=z_values.device)
        x = torch.cat([z_values, f_next], dim=1)
        x = F.leaky_relu(self.c(f"dec{s}.stem")(x), LEAK)
        x = self._res(x, f"dec{s}.b1", 1)
        x = self._res(x, f"dec{s}.b2", 1)
        return F.pixel_shuffle(self.c(f"dec{s}.up")(x), 2)

    def prob_head_forward(self, f, s, view):
        name = f"p{view[0]}{s}"
        d1 = F.leaky_relu(self.c(f"{name}.dil1")(f), LEAK)
        d2 = F.leaky_relu(self.c(f"{name}.dil2")(f), LEAK)
        d4 = F.leaky_relu(self.c(f"{name}.dil4")(f), LEAK)
        mixed = F.leaky_relu(self.c(f"{name}.mix")(torch.cat([d1, d2, d4], dim=1)), LEAK)
        return self.c(f"{name}.head")(mixed)

    def build_cost_volume(self, f_left, f_right, d_max):
        w = f_left.shape[-1]
        slices = []
        for d in range(d_max):
            diff = (f_left[..., d:] - f_right[..., : w - d]).abs()
            slices.append(F.pad(diff, (0, d)))  # columns past the edge cost 0
        return torch.stack(slices, dim=2)  # (N, C, D, H, W)

    def soft_warp(self, left_plane, prob_volume):
        w = left_plane.shape[-1]
        cols = torch.arange(w, device=left_plane.device)
        out = None
        for d in range(prob_volume.shape[1]):
            idx = torch.clamp(cols + d, max=w - 1)
            term = prob_volume[:, None, d] * left_plane.index_select(-1, idx)
            out = term if out is None else out + term
        return out

    def warp_block_forward(self, f_left, f_right, f_cv_next, left_plane, s):
        d = self.cfg.disparity_at_scale(s, f_left.shape[-1])
        cv = self.build_cost_volume(f_left, f_right, d)
        if f_cv_next is not None:
            up = F.interpolate(f_cv_next[:, None], scale_factor=2, mode="trilinear",
                               align_corners=False)
            cv = torch.cat([cv, up], dim=1)
        a = F.leaky_relu(self.c(f"warp{s}.agg1")(cv), LEAK)
        a = F.leaky_relu(self.c(f"warp{s}.agg2")(a), LEAK)
        vol = self.c(f"warp{s}.agg3")(a)[:, 0]
        prob = torch.softmax(-vol, dim=1)
        warped = self.soft_warp(left_plane, prob)
        dgrid = torch.arange(prob.shape[1], dtype=prob.dtype, device=prob.device)
        disparity = (prob * dgrid.view(1, -1, 1, 1)).sum(dim=1)
        return warped, vol, disparity

    def fuse_right(self, f_right, warped_plane, s):
        return self.c(f"fuse{s}")(torch.cat([f_right, warped_plane], dim=1))

    def encode_features(self, x_norm):
        """Encoder chain with straight-through quantization.

        Returns per-scale (ste_values, indices) keyed 1..S.
        """
        out = {}
        cur = x_norm
        for s in range(1, self.cfg.scales + 1):
            z_tilde, cur = self.encoder_forward(cur, s)
            out[s] = quantize_ste(z_tilde, self.levels, self.cfg.softness)
        return out

    def export_tensors(self):
        """Codec-named float32 numpy arrays for the portable weight file."""
        tensors = {}
        for key, module in self.m.items():
            base = key.replace("/", ".")
            tensors[f"{base}.weight"] = module.weight.detach().cpu().numpy()
            tensors[f"{base}.bias"] = module.bias.detach().cpu().numpy()
        return tensors


@dataclass
class ForwardResult:
    plane_bits: dict = field(default_factory=dict)  # (plane, scale, view) -> tensor
    disparities: list = field(default_factory=list)  # coarse to fine
    warped_right: torch.Tensor | None = None

    def total_bits(self):
        return sum(b.sum() for b in self.plane_bits.values())

    def view_bits(self, view):
        return sum(b.sum() for k, b in self.plane_bits.items() if k[2] == view)


def run_pipeline(model: StereoModel, left_u8, right_u8, use_warp=True):
    """Differentiable replica of the coding walk; returns per-plane bit maps.

    `use_warp=False` reproduces the "use the left view directly" ablation:
    the reconstructed plane handed to the fusion conv is the unwarped
    left-view plane itself.
    """
    from .loss import feature_plane_bits, image_plane_bits, uniform_plane_bits

    cfg = model.cfg
    S = cfg.scales
    res = ForwardResult()
    x = {}
    for view, img in (("left", left_u8), ("right", right_u8)):
        x[view] = img.to(torch.float32) / 127.5 - 1.0
    feats = {v: model.encode_features(x[v]) for v in x}

    for v in x:
        res.plane_bits[("Z", S, v)] = uniform_plane_bits(feats[v][S][1], cfg.levels)
    f = {v: model.decoder_forward(feats[v][S][0], None, S) for v in x}
    f_cv = None
    for s in range(S - 1, 0, -1):
        z_l, idx_l = feats["left"][s]
        params_l = model.prob_head_forward(f["left"], s + 1, "left")
        res.plane_bits[("Z", s, "left")] = feature_plane_bits(
            params_l, z_l, idx_l, model.levels, cfg
        )
        if use_warp:
            warped, f_cv, disp = model.warp_block_forward(f["left"], f["right"], f_cv, z_l, s + 1)
            res.disparities.append(disp)
        else:
            warped = z_l
        fused = model.fuse_right(f["right"], warped, s + 1)
        z_r, idx_r = feats["right"][s]
        params_r = model.prob_head_forward(fused, s + 1, "right")
        res.plane_bits[("Z", s, "right")] = feature_plane_bits(
            params_r, z_r, idx_r, model.levels, cfg
        )
        f = {
            "left": model.decoder_forward(z_l, f["left"], s),
            "right": model.decoder_forward(z_r, f["right"], s),
        }
    params_l = model.prob_head_forward(f["left"], 1, "left")
    res.plane_bits[("X", 0, "left")] = image_plane_bits(params_l, left_u8, cfg)
    if use_warp:
        warped, f_cv, disp = model.warp_block_forward(f["left"], f["right"], f_cv, x["left"], 1)
        res.disparities.append(disp)
    else:
        warped = x["left"]
    res.warped_right = warped
    fused = model.fuse_right(f["right"], warped, 1)
    params_r = model.prob_head_forward(fused, 1, "right")
    res.plane_bits[("X", 0, "right")] = image_plane_bits(params_r, right_u8, cfg)
    return res
