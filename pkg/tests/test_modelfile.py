import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crop.errors import StructureError
from crop.metrics import MetricKind
from crop.model import init_params
from crop.modelfile import ModelFile
from crop.pruning import prune

from conftest import random_model


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    model = random_model(rng, dims=[5, 9, 4])
    mf = ModelFile(model, MetricKind.BALANCED_ACCURACY, metadata='{"seed": 3, "note": "ünïcode"}')
    path = tmp_path / "m.cropmdl"
    mf.save(path)
    back = ModelFile.load(path)
    assert back.metric is MetricKind.BALANCED_ACCURACY
    assert back.metadata == mf.metadata
    assert back.mask is None
    assert all((a == b).all() for a, b in zip(back.model.weights, model.weights))
    assert all((a == b).all() for a, b in zip(back.model.biases, model.biases))
    # saving the loaded copy reproduces the identical bytes
    assert back.to_bytes() == mf.to_bytes()


def test_round_trip_with_mask(tmp_path):
    rng = np.random.default_rng(1)
    model = random_model(rng, dims=[4, 7, 3])
    pruned, mask = prune(model, 0.4)
    path = tmp_path / "p.cropmdl"
    ModelFile(pruned, MetricKind.ACCURACY, mask=mask).save(path)
    back = ModelFile.load(path)
    assert back.mask is not None
    assert all((a == b).all() for a, b in zip(back.mask.weight_masks, mask.weight_masks))


def test_bad_magic_rejected():
    with pytest.raises(StructureError):
        ModelFile.from_bytes(b"NOTMAGIC" + b"\x00" * 32)


def test_bad_version_rejected():
    blob = bytearray(ModelFile(init_params([3, 2], 0)).to_bytes())
    blob[7] = 99
    with pytest.raises(StructureError):
        ModelFile.from_bytes(bytes(blob))


def test_trailing_bytes_rejected():
    blob = ModelFile(init_params([3, 2], 0)).to_bytes() + b"x"
    with pytest.raises(StructureError):
        ModelFile.from_bytes(blob)


def test_mask_mismatch_rejected():
    from crop.pruning import Mask

    model = init_params([3, 4, 2], 0)
    bad_mask = Mask([np.ones((4, 3))])
    with pytest.raises(StructureError):
        ModelFile(model, mask=bad_mask).to_bytes()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.lists(st.integers(1, 7), min_size=2, max_size=4))
def test_round_trip_random_architectures(seed, dims):
    rng = np.random.default_rng(seed)
    model = random_model(rng, dims=dims)
    blob = ModelFile(model, MetricKind.F1_BINARY, metadata="x" * (seed % 5)).to_bytes()
    back = ModelFile.from_bytes(blob)
    assert back.model.layer_dims == model.layer_dims
    assert back.to_bytes() == blob
