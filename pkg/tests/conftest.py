import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stereocodec.model import CodecModel, ModelConfig, init_weights


@pytest.fixture(scope="session")
def tiny_config():
    return ModelConfig(scales=2, feature_channels=3, hidden=8, mixture_k=2, max_disparity=4)


@pytest.fixture(scope="session")
def tiny_model(tiny_config):
    return CodecModel(tiny_config, init_weights(tiny_config, 7))


def random_pair(rng, h, w):
    from stereocodec.pipeline import StereoPair

    return StereoPair(
        rng.integers(0, 256, (3, h, w), dtype=np.uint8),
        rng.integers(0, 256, (3, h, w), dtype=np.uint8),
    )


def shifted_pair(rng, h, w, shift):
    """Right view equals the left shifted `shift` columns left (plus noise-free wrap)."""
    from stereocodec.pipeline import StereoPair

    left = rng.integers(0, 256, (3, h, w), dtype=np.uint8)
    right = np.empty_like(left)
    right[:, :, : w - shift] = left[:, :, shift:]
    right[:, :, w - shift :] = left[:, :, w - 1 : w]
    return StereoPair(left, right)
