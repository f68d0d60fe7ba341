import numpy as np
import pytest

from nucleusnet.checkpoint import (checkpoint_bytes, load_checkpoint,
                                   load_checkpoint_bytes, save_checkpoint)
from nucleusnet.errors import CheckpointError
from nucleusnet.model import build, miniature_config, standard_config
from nucleusnet.optim import init_adam
from nucleusnet.tensor import Tensor, as_array
from nucleusnet.train import TrainConfig, train

import nucleusnet as nn


@pytest.fixture(scope="module")
def mini_model():
    return build(miniature_config(), seed=42)


def test_round_trip_forward_bitwise(mini_model, tmp_path):
    path = tmp_path / "m.inuc"
    save_checkpoint(mini_model, path)
    loaded = load_checkpoint(path)
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = rng.standard_normal((2, 1, 512)).astype(np.float32)
        a, _ = mini_model.forward_batch(x)
        b, _ = loaded.model.forward_batch(x)
        np.testing.assert_array_equal(a, b)


def test_reserialization_is_byte_identical(mini_model):
    adam = init_adam(mini_model.store)
    adam.step = 17
    meta = {"epoch": 3, "seed": 9, "loss_digest": "abc123", "note": "x"}
    data1 = checkpoint_bytes(mini_model, adam=adam, metadata=meta)
    loaded = load_checkpoint_bytes(data1)
    data2 = checkpoint_bytes(loaded.model, adam=loaded.adam, metadata=loaded.metadata)
    assert data1 == data2


def test_adam_state_round_trips(mini_model):
    adam = init_adam(mini_model.store, lr=2e-3)
    for name in adam.m:
        adam.m[name] = adam.m[name] + 0.25
    adam.step = 5
    loaded = load_checkpoint_bytes(checkpoint_bytes(mini_model, adam=adam))
    assert loaded.adam.step == 5
    assert loaded.adam.lr == 2e-3
    for name in adam.m:
        np.testing.assert_array_equal(loaded.adam.m[name], adam.m[name])


def test_corrupt_magic(tmp_path):
    path = tmp_path / "bad.inuc"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(CheckpointError, match="not a checkpoint"):
        load_checkpoint(path)


def test_version_mismatch(mini_model):
    data = bytearray(checkpoint_bytes(mini_model))
    data[4:8] = (99).to_bytes(4, "little")
    with pytest.raises(CheckpointError, match="version 99"):
        load_checkpoint_bytes(bytes(data))


def test_truncated_blob(mini_model):
    data = checkpoint_bytes(mini_model)
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint_bytes(data[: len(data) - 32])


def test_load_into_differing_num_classes(mini_model):
    data = checkpoint_bytes(mini_model)
    other = miniature_config(num_classes=7)
    with pytest.raises(CheckpointError, match="shape"):
        load_checkpoint_bytes(data, config=other)


def test_float64_model_rejected():
    model = build(miniature_config(), seed=0, dtype=np.float64)
    with pytest.raises(CheckpointError, match="32-bit"):
        checkpoint_bytes(model)


def test_tensor_values_preserved_exactly(mini_model, tmp_path):
    path = tmp_path / "m.inuc"
    save_checkpoint(mini_model, path)
    loaded = load_checkpoint(path)
    for p in mini_model.store:
        np.testing.assert_array_equal(as_array(loaded.model.store[p.name].value),
                                      as_array(p.value))


def test_bn_initialized_flag_round_trips(tmp_path):
    model = build(miniature_config(batch_norm=True), seed=1)
    # fresh BN model cannot run inference
    x = np.random.default_rng(0).standard_normal((2, 1, 512)).astype(np.float32)
    with pytest.raises(ValueError, match="uninitialized running statistics"):
        model.forward_batch(x, mode="infer")
    # one training step initializes the running statistics
    samples = nn.synth_dataset(4, 2, seed=0, length=512)
    train(model, samples, TrainConfig(max_epochs=1, seed=0, patience=10))
    path = tmp_path / "bn.inuc"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    probs, _ = loaded.model.forward_batch(x, mode="infer")
    assert probs.shape == (2, 4)
    # forwards agree bitwise after the round trip
    a, _ = model.forward_batch(x, mode="infer")
    np.testing.assert_array_equal(a, probs)
