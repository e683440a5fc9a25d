import numpy as np
import pytest
import torch

from stereotrainer import ArchConfig, TrainConfig, train
from stereotrainer.data import synthetic_stereo_pair

OVERFIT_ARCH = ArchConfig(scales=3, feature_channels=5, hidden=16, mixture_k=3, max_disparity=8)


@pytest.fixture(scope="session")
def overfit_run():
    """One shared overfit on a 64x128 synthetic pair (budget: <=2000 steps).

    Early stopping may only trigger after step 200, so the loss curve always
    covers the smoothed-decrease criterion window.
    """
    rng = np.random.default_rng(5)
    left, right, _ = synthetic_stereo_pair(rng, 64, 128, shift=4)
    config = TrainConfig(
        crop_height=64,
        crop_width=128,
        steps=2000,
        learning_rate=2e-3,
        seed=1,
        arch=OVERFIT_ARCH,
        log_every=25,
        target_bpsp=7.5,
        early_stop_after=200,
    )
    torch.set_num_threads(2)
    result = train([(left, right)], config)
    return {"result": result, "pair": (left, right), "config": config}
