import struct

import numpy as np
import torch

from stereotrainer.export import content_digest, fnv1a64, write_weight_file
from stereotrainer.model import ArchConfig, StereoModel


def test_fnv1a64_known_vectors():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_weight_file_layout(tmp_path):
    cfg = ArchConfig(scales=1, feature_channels=2, hidden=4, mixture_k=1, max_disparity=2)
    torch.manual_seed(0)
    model = StereoModel(cfg)
    path = tmp_path / "w.l3cw"
    digest = write_weight_file(path, model.export_tensors(), cfg)
    raw = path.read_bytes()
    assert raw[:4] == b"L3CW"
    assert raw[4] == 1
    s, c, hidden, k, dmax = struct.unpack("<BBHBH", raw[5:12])
    assert (s, c, hidden, k, dmax) == (1, 2, 4, 1, 2)
    (count,) = struct.unpack("<I", raw[12:16])
    assert count == len(model.export_tensors())
    (trailer,) = struct.unpack("<Q", raw[-8:])
    assert trailer == fnv1a64(raw[:-8])
    assert digest == content_digest(model.export_tensors())


def test_digest_deterministic_and_content_sensitive(tmp_path):
    cfg = ArchConfig(scales=1, feature_channels=2, hidden=4, mixture_k=1, max_disparity=2)
    torch.manual_seed(1)
    model = StereoModel(cfg)
    t1 = model.export_tensors()
    assert content_digest(t1) == content_digest(model.export_tensors())
    t2 = {k: v.copy() for k, v in t1.items()}
    name = sorted(t2)[0]
    t2[name] = t2[name] + np.float32(1e-3)
    assert content_digest(t2) != content_digest(t1)


def test_export_covers_every_module(tmp_path):
    cfg = ArchConfig(scales=2, feature_channels=3, hidden=8, mixture_k=2, max_disparity=4)
    model = StereoModel(cfg)
    tensors = model.export_tensors()
    # every conv contributes a weight and a bias under its codec name
    assert len(tensors) == 2 * len(model.m)
    assert "enc1.b1.conv1.weight" in tensors
    assert "warp2.agg3.bias" in tensors
    assert "fuse1.weight" in tensors
    assert tensors["fuse1.weight"].shape == (8, 8 + 3, 1, 1)
