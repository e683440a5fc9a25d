"""Trainer command line: fit a model on stereo pairs and export codec weights.

    stereotrainer synth --out-dir data/ --height 64 --width 192 --shift 4
    stereotrainer train --left L.ppm --right R.ppm --out w.l3cw --steps 800
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .data import read_image, read_pfm, synthetic_stereo_pair, write_ppm
from .model import ArchConfig
from .train import TrainConfig, evaluate_bpsp, export, train


def cmd_train(args):
    left = read_image(args.left)
    right = read_image(args.right)
    gts = None
    if args.gt_disparity:
        gts = [read_pfm(args.gt_disparity)]
    arch = ArchConfig(
        scales=args.scales,
        feature_channels=args.channels,
        hidden=args.hidden,
        mixture_k=args.K,
        max_disparity=args.dmax,
    )
    config = TrainConfig(
        crop_height=args.crop_height,
        crop_width=args.crop_width,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        steps=args.steps,
        seed=args.seed,
        supervised=args.gt_disparity is not None,
        use_warp=not args.no_warp,
        arch=arch,
        target_bpsp=args.target_bpsp,
    )
    result = train([(left, right)], config, gt_disparities=gts, log_path=args.loss_log)
    digest = export(result.model, args.out)
    print(f"steps={result.steps_run} final_loss={result.loss_curve[-1]:.4f} "
          f"eval_bpsp={result.bpsp:.4f}")
    print(f"exported {args.out} digest={digest:#018x}")
    return 0


def cmd_synth(args):
    rng = np.random.default_rng(args.seed)
    left, right, disparity = synthetic_stereo_pair(rng, args.height, args.width, args.shift)
    write_ppm(f"{args.out_dir}/left.ppm", left)
    write_ppm(f"{args.out_dir}/right.ppm", right)
    from .data import _read_pnm_token  # noqa: F401  (module import keeps io local)

    # write the constant ground-truth map as PFM
    h, w = disparity.shape
    with open(f"{args.out_dir}/disparity.pfm", "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode())
        f.write(np.ascontiguousarray(disparity[::-1]).astype("<f4").tobytes())
    print(f"wrote left.ppm right.ppm disparity.pfm to {args.out_dir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="stereotrainer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit on one pair and export codec weights")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--gt-disparity", default=None, help="PFM; enables the supervised term")
    p.add_argument("--out", required=True, help="output weight file")
    p.add_argument("--loss-log", default=None, help="plain-text loss curve")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--crop-height", type=int, default=64)
    p.add_argument("--crop-width", type=int, default=128)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--scales", type=int, default=3)
    p.add_argument("--channels", type=int, default=5)
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--dmax", type=int, default=8)
    p.add_argument("--no-warp", action="store_true", help="left-view ablation")
    p.add_argument("--target-bpsp", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="write a synthetic stereo pair for experiments")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=192)
    p.add_argument("--shift", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
