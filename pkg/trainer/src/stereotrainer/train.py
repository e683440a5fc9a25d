"""Toy-scale training loop: fixed learning rate, random crops, loss logging.

This deliberately replaces full-dataset schedules with a desk-size recipe;
the point is a checkpoint whose exported weights drop into the codec and
beat the 8-bit floor on content they were fitted to.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .data import random_crop_pair
from .export import content_digest, write_weight_file
from .loss import supervised_disparity_term
from .model import ArchConfig, StereoModel, run_pipeline


@dataclass
class TrainConfig:
    crop_height: int = 64
    crop_width: int = 128
    batch_size: int = 1
    learning_rate: float = 1e-3
    steps: int = 2000
    seed: int = 0
    supervised: bool = False
    lam: float = 0.01
    alphas: tuple = (1.0, 0.5, 0.25)
    use_warp: bool = True
    arch: ArchConfig = field(default_factory=ArchConfig)
    log_every: int = 25
    target_bpsp: float | None = None  # stop early once eval bpsp beats this
    early_stop_after: int = 50  # earliest step for the target check

    def __post_init__(self):
        mult = self.arch.pad_multiple
        if self.crop_height % mult or self.crop_width % mult:
            raise ValueError(f"crop {self.crop_height}x{self.crop_width} not divisible by {mult}")
        # one weight per warp scale; shallow models use the leading weights
        self.alphas = tuple(self.alphas[: self.arch.scales])


@dataclass
class TrainResult:
    model: StereoModel
    loss_curve: list[float]
    bpsp: float
    steps_run: int
    seconds: float


def _to_batch(arrays, device):
    return torch.from_numpy(np.ascontiguousarray(np.stack(arrays))).to(device)


def evaluate_bpsp(model: StereoModel, left_u8, right_u8, use_warp=True):
    """Ideal bits per subpixel (per view and total) on one uncropped pair."""
    model.eval()
    with torch.no_grad():
        lt = torch.from_numpy(np.ascontiguousarray(left_u8))[None]
        rt = torch.from_numpy(np.ascontiguousarray(right_u8))[None]
        res = run_pipeline(model, lt, rt, use_warp=use_warp)
        denom = 3.0 * left_u8.shape[1] * left_u8.shape[2]
        left_bits = float(res.view_bits("left"))
        right_bits = float(res.view_bits("right"))
    model.train()
    return {
        "left": left_bits / denom,
        "right": right_bits / denom,
        "all": (left_bits + right_bits) / (2 * denom),
    }


def train(pairs, config: TrainConfig, gt_disparities=None, log_path=None, init_state=None):
    """Fit the architecture on (left, right) uint8 array pairs.

    `gt_disparities` supplies full-resolution ground truth per pair for the
    supervised mode; `init_state` warm-starts from a state_dict.  Returns the
    model plus the loss curve; raises on a non-finite loss with the offending
    step in the message.
    """
    if not pairs:
        raise ValueError("need at least one training pair")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model = StereoModel(config.arch)
    if init_state is not None:
        model.load_state_dict(init_state)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    curve = []
    lines = []
    crop_hw = (config.crop_height, config.crop_width)
    started = time.time()
    steps_run = 0
    for step in range(config.steps):
        lefts, rights, gts = [], [], []
        for _ in range(config.batch_size):
            i = int(rng.integers(0, len(pairs)))
            if config.supervised and gt_disparities is not None:
                l, r, g = random_crop_pair(rng, *pairs[i], crop_hw, gt=gt_disparities[i])
                gts.append(g)
            else:
                l, r = random_crop_pair(rng, *pairs[i], crop_hw)
            lefts.append(l)
            rights.append(r)
        left_b = _to_batch(lefts, "cpu")
        right_b = _to_batch(rights, "cpu")
        res = run_pipeline(model, left_b, right_b, use_warp=config.use_warp)
        denom = 6.0 * config.batch_size * config.crop_height * config.crop_width
        loss = res.total_bits() / denom
        if config.supervised and gts:
            gt_b = _to_batch(gts, "cpu").to(torch.float32)
            loss = loss + supervised_disparity_term(
                res.disparities, gt_b, config.lam, config.alphas
            )
        loss_val = float(loss.detach())
        if not math.isfinite(loss_val):
            raise RuntimeError(f"non-finite loss {loss_val} at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        curve.append(loss_val)
        steps_run = step + 1
        if step % config.log_every == 0 or step == config.steps - 1:
            lines.append(f"step {step} loss {loss_val:.4f}")
        if (
            config.target_bpsp is not None
            and step >= config.early_stop_after
            and step % config.log_every == 0
        ):
            b = evaluate_bpsp(model, pairs[0][0], pairs[0][1], config.use_warp)
            lines.append(f"step {step} eval bpsp {b['all']:.4f}")
            if b["all"] < config.target_bpsp:
                break
    bpsp = evaluate_bpsp(model, pairs[0][0], pairs[0][1], config.use_warp)["all"]
    seconds = time.time() - started
    lines.append(f"final eval bpsp {bpsp:.4f} after {steps_run} steps ({seconds:.1f}s)")
    if log_path is not None:
        with open(log_path, "w") as f:
            f.write("\n".join(lines) + "\n")
    return TrainResult(model, curve, bpsp, steps_run, seconds)


def export(model: StereoModel, path) -> int:
    """Write the portable weight file; returns the content digest."""
    digest = write_weight_file(path, model.export_tensors(), model.cfg)
    return digest


def exported_digest(model: StereoModel) -> int:
    return content_digest(model.export_tensors())
