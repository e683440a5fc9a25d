"""Toy-scale trainer for the stereo codec architecture.

Trains the identical network with a straight-through quantizer on the total
coding-cost objective (optionally plus a supervised multi-scale disparity
term) and exports checkpoints in the portable weight format the codec loads.
"""

from .model import ArchConfig, StereoModel, run_pipeline
from .train import TrainConfig, TrainResult, evaluate_bpsp, export, train

__all__ = [
    "ArchConfig",
    "StereoModel",
    "TrainConfig",
    "TrainResult",
    "evaluate_bpsp",
    "export",
    "run_pipeline",
    "train",
]
