"""Lossless stereo image codec with learned multi-scale probability models.

Compression runs both views through a shared hierarchical feature encoder,
codes the quantized features and the pixels with discretized logistic
mixtures through an integer range coder, and sharpens the right-view
distributions by warping decoded left-view content along an estimated
disparity map.  The round trip is bit exact for any weights.
"""

from .errors import (
    CodecError,
    CrcError,
    DigestMismatchError,
    DimensionError,
    FormatError,
    TruncatedError,
)
from .model import CodecModel, ModelConfig, WeightStore, init_weights, load_weights, save_weights
from .pipeline import (
    CodingReport,
    DecodeResult,
    EvalResult,
    StereoPair,
    compress,
    compress_single,
    decompress,
    evaluate,
)

__version__ = "0.1.0"

__all__ = [
    "CodecError",
    "CodecModel",
    "CodingReport",
    "CrcError",
    "DecodeResult",
    "DigestMismatchError",
    "DimensionError",
    "EvalResult",
    "FormatError",
    "ModelConfig",
    "StereoPair",
    "TruncatedError",
    "WeightStore",
    "compress",
    "compress_single",
    "decompress",
    "evaluate",
    "init_weights",
    "load_weights",
    "save_weights",
]
