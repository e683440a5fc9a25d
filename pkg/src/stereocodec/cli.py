"""Command-line front end.

Subcommands: compress, decompress, verify, evaluate, init-weights.
Every failure path exits with a distinct code and one diagnostic line:

    0 success            5 weight digest mismatch
    1 unexpected error   6 container CRC failure
    2 I/O failure        7 truncated file/stream
    3 malformed format   8 verification failed
    4 dimension mismatch
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import imageio, metrics
from .errors import (
    CrcError,
    DigestMismatchError,
    DimensionError,
    FormatError,
    TruncatedError,
)
from .model import CodecModel, ModelConfig, init_weights, load_weights, save_weights
from .pipeline import StereoPair, compress, decompress, evaluate
from .rangecoder import CorruptStreamError

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_IO = 2
EXIT_FORMAT = 3
EXIT_DIMENSION = 4
EXIT_DIGEST = 5
EXIT_CRC = 6
EXIT_TRUNCATED = 7
EXIT_VERIFY_FAILED = 8


def _exit_code(exc) -> int:
    if isinstance(exc, (FileNotFoundError, PermissionError, IsADirectoryError, OSError)) and not isinstance(
        exc, (FormatError, CrcError)
    ):
        return EXIT_IO
    if isinstance(exc, TruncatedError):
        return EXIT_TRUNCATED
    if isinstance(exc, DigestMismatchError):
        return EXIT_DIGEST
    if isinstance(exc, CrcError):
        return EXIT_CRC
    if isinstance(exc, (FormatError, CorruptStreamError)):
        return EXIT_FORMAT
    if isinstance(exc, DimensionError):
        return EXIT_DIMENSION
    return EXIT_UNEXPECTED


def _load_model(args) -> CodecModel:
    config, store = load_weights(args.weights)
    for attr, field in (("dmax", "max_disparity"), ("K", "mixture_k")):
        override = getattr(args, attr, None)
        if override is not None and override != getattr(config, field):
            raise FormatError(
                f"--{attr} {override} does not match the weight file ({getattr(config, field)})"
            )
    return CodecModel(config, store)


def _print_report(report, fmt):
    rec = report.as_record()
    if fmt == "record":
        print(json.dumps(rec))
        return
    for key, value in rec.items():
        if key == "segments":
            continue
        if isinstance(value, float):
            print(f"{key}={value:.6f}")
        else:
            print(f"{key}={value}")


def _config_echo(config: ModelConfig) -> str:
    return (
        f"S={config.scales} C={config.feature_channels} hidden={config.hidden} "
        f"K={config.mixture_k} D_max={config.max_disparity}"
    )


def cmd_compress(args):
    model = _load_model(args)
    pair = StereoPair(imageio.read_image(args.left), imageio.read_image(args.right))
    blob, report = compress(pair, model)
    with open(args.output, "wb") as f:
        f.write(blob)
    print(f"config {_config_echo(model.config)} digest={model.store.digest:#018x}")
    _print_report(report, args.report)
    return EXIT_OK


def cmd_decompress(args):
    model = _load_model(args)
    with open(args.input, "rb") as f:
        blob = f.read()
    result = decompress(blob, model)
    imageio.write_image(args.out_left, result.left)
    if result.right is not None:
        if args.out_right is None:
            raise FormatError("container holds two views; pass an output path for the right view")
        imageio.write_image(args.out_right, result.right)
    if args.emit_disparity:
        base, _ = os.path.splitext(args.out_left)
        scales = len(result.disparities)
        for i, disp in enumerate(result.disparities):
            s = scales - i  # walk emits coarse to fine
            d_range = max(1, model.config.max_disparity >> (s - 1))
            if args.disparity_format == "pfm":
                imageio.write_pfm(f"{base}_disp_s{s}.pfm", disp)
            else:
                imageio.write_pgm(f"{base}_disp_s{s}.pgm", disp * (256.0 / d_range))
    return EXIT_OK


def cmd_verify(args):
    model = _load_model(args)
    failures = 0
    pairs = list(zip(args.images[0::2], args.images[1::2]))
    if not pairs:
        raise FormatError("verify needs LEFT RIGHT image paths")

    def run(paths):
        left_path, right_path = paths
        pair = StereoPair(imageio.read_image(left_path), imageio.read_image(right_path))
        blob, report = compress(pair, model)
        try:
            result = decompress(blob, model)
            ok = (result.left == pair.left).all() and (result.right == pair.right).all()
            note = ""
        except Exception as exc:  # corrupt in-memory stream is a FAIL, not a crash
            ok = False
            note = f" ({exc})"
        return left_path, right_path, ok, report, note

    jobs = max(1, args.jobs)
    if jobs == 1 or len(pairs) == 1:
        results = [run(p) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, pairs))
    for left_path, right_path, ok, report, note in results:
        status = "PASS" if ok else "FAIL"
        print(
            f"{status} {left_path} {right_path} bpsp={report.bpsp():.4f} "
            f"ideal_bits={report.bits(kind='ideal'):.1f} actual_bits={report.bits(kind='actual'):.0f}{note}"
        )
        failures += 0 if ok else 1
    return EXIT_OK if failures == 0 else EXIT_VERIFY_FAILED


def cmd_evaluate(args):
    model = _load_model(args)
    pair = StereoPair(imageio.read_image(args.left), imageio.read_image(args.right))
    result = evaluate(pair, model)
    print(f"config {_config_echo(model.config)} digest={model.store.digest:#018x}")
    _print_report(result.report, args.report)
    if args.report == "text" and result.report.psnr_warped is not None:
        gt = None
        if args.gt_disparity:
            gt = imageio.read_pfm(args.gt_disparity)
            pred = result.disparities[-1][: gt.shape[0], : gt.shape[1]]
            d = metrics.disparity_eval(pred, gt)
            print(f"epe={d.epe:.4f}")
            print(f"d3px={d.d3px:.4f}")
    return EXIT_OK


def cmd_init_weights(args):
    config = ModelConfig(
        max_disparity=args.dmax if args.dmax is not None else 64,
        mixture_k=args.K if args.K is not None else 10,
        hidden=args.hidden,
        scales=args.scales,
        feature_channels=args.channels,
    )
    store = init_weights(config, args.seed)
    digest = save_weights(store, config, args.weights)
    print(f"config {_config_echo(config)} digest={digest:#018x} -> {args.weights}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="stereocodec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_overrides=True):
        p.add_argument("--weights", required=True, help="path to a weight file")
        if with_overrides:
            p.add_argument("--dmax", type=int, default=None, help="must match the weight file")
            p.add_argument("--K", type=int, default=None, help="must match the weight file")
        p.add_argument("--report", choices=("text", "record"), default="text")

    p = sub.add_parser("compress", help="compress a stereo pair to a container")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("-o", "--output", required=True)
    common(p)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="decode a container back to images")
    p.add_argument("input")
    p.add_argument("out_left")
    p.add_argument("out_right", nargs="?", default=None)
    p.add_argument("--emit-disparity", action="store_true", help="write one disparity map per scale")
    p.add_argument("--disparity-format", choices=("pgm", "pfm"), default="pgm")
    common(p)
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("verify", help="compress+decompress in memory and compare")
    p.add_argument("images", nargs="+", help="LEFT RIGHT [LEFT RIGHT ...]")
    p.add_argument("--jobs", type=int, default=1, help="parallel pairs")
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("evaluate", help="model cross-entropy and warp quality, no coding")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("--gt-disparity", default=None, help="PFM ground truth for EPE/>3px")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("init-weights", help="write seeded random weights")
    p.add_argument("--weights", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dmax", type=int, default=None)
    p.add_argument("--K", type=int, default=None)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--scales", type=int, default=3)
    p.add_argument("--channels", type=int, default=5)
    p.set_defaults(func=cmd_init_weights)

    return parser


def main(argv=None):
    if os.environ.get("L3CS_THREADS"):
        os.environ.setdefault("NUMBA_NUM_THREADS", os.environ["L3CS_THREADS"])
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", None) is not None:
        cap = os.environ.get("L3CS_THREADS")
        if cap:
            args.jobs = min(args.jobs, max(1, int(cap)))
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single funnel to exit codes
        code = _exit_code(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
