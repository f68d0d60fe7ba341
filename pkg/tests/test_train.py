import math

import numpy as np
import pytest

import nucleusnet as nn
from nucleusnet.errors import NumericalError
from nucleusnet.model import build, miniature_config
from nucleusnet.optim import RegConfig, add_l2_grad
from nucleusnet.tensor import Tensor, as_array
from nucleusnet.train import EvalResult, TrainConfig, evaluate, train


@pytest.fixture(scope="module")
def synth40():
    return nn.synth_dataset(4, 10, seed=0, length=512)


def test_one_epoch_step_count(synth40):
    # 40 samples at batch 32 -> ceil(40/32) = 2 optimizer steps per epoch
    model = build(miniature_config(), seed=0)
    _, reports, adam = train(model, synth40, TrainConfig(max_epochs=3, seed=0,
                                                         patience=100))
    assert adam.step == 3 * 2
    assert len(reports) == 3


def test_lr_zero_constant_loss(synth40):
    model = build(miniature_config(), seed=0)
    cfg = TrainConfig(max_epochs=4, seed=0, lr=0.0, patience=100)
    _, reports, _ = train(model, synth40, cfg)
    losses = [r.train_loss for r in reports]
    assert max(losses) - min(losses) < 1e-6


def test_initial_loss_near_log_num_classes():
    # ln(10) for a 10-class model on its first epoch
    samples = nn.synth_dataset(10, 3, seed=1, length=512)
    model = build(miniature_config(num_classes=10), seed=1)
    _, reports, _ = train(model, samples, TrainConfig(max_epochs=1, seed=1,
                                                      patience=10))
    assert abs(reports[0].train_loss - math.log(10)) < 0.2


def test_reported_loss_matches_independent_recompute(synth40):
    # with lr=0 the model never moves, so the epoch's mean loss must equal
    # a from-scratch recomputation over the dataset plus the L2 penalty
    model = build(miniature_config(), seed=3)
    cfg = TrainConfig(max_epochs=1, seed=3, lr=0.0, lambda_=1e-4, patience=10)
    _, reports, _ = train(model, synth40, cfg)
    result = evaluate(model, synth40)
    penalty = add_l2_grad(model.store, RegConfig(lambda_=1e-4))
    assert reports[0].train_loss == pytest.approx(result.mean_loss + penalty,
                                                  abs=1e-5)


def test_same_seed_bitwise_identical_losses(synth40):
    runs = []
    for _ in range(2):
        model = build(miniature_config(), seed=4)
        _, reports, _ = train(model, synth40, TrainConfig(max_epochs=3, seed=4,
                                                          patience=100))
        runs.append([r.train_loss for r in reports])
    assert runs[0] == runs[1]


def test_patience_stops_training(synth40):
    model = build(miniature_config(), seed=0)
    cfg = TrainConfig(max_epochs=50, seed=0, lr=0.0, patience=3)
    _, reports, _ = train(model, synth40, cfg)
    # epoch 1 sets the best loss; the next `patience` epochs never improve
    assert len(reports) == 4


def test_nan_weight_aborts_with_tensor_name(synth40):
    model = build(miniature_config(), seed=0)
    p = model.store["conv1.weight"]
    bad = as_array(p.value).copy()
    bad[0, 0, 0] = np.nan
    p.value = Tensor(bad)
    with pytest.raises(NumericalError, match="conv1.weight"):
        train(model, synth40, TrainConfig(max_epochs=1, seed=0, patience=10))


def test_empty_train_set_rejected():
    model = build(miniature_config(), seed=0)
    with pytest.raises(ValueError, match="empty"):
        train(model, [], TrainConfig(max_epochs=1))


def test_checkpoint_cadence(synth40, tmp_path):
    model = build(miniature_config(), seed=0)
    cfg = TrainConfig(max_epochs=5, seed=0, patience=100, checkpoint_every=2)
    train(model, synth40, cfg, checkpoint_dir=tmp_path)
    names = sorted(p.name for p in tmp_path.glob("*.inuc"))
    assert names == ["epoch0002.inuc", "epoch0004.inuc"]


class _StubModel:
    """Duck-typed stand-in whose logits are fixed, for evaluate()."""

    def __init__(self, logits_fn, num_classes):
        self.num_classes = num_classes
        self.dtype = np.dtype(np.float32)
        self._fn = logits_fn

    def logits_batch(self, xs, mode="infer"):
        return self._fn(xs)


def _balanced_samples(num_classes, per_class, length=16):
    rng = np.random.default_rng(0)
    out = []
    for c in range(num_classes):
        for i in range(per_class):
            out.append(nn.Sample(
                waveform=Tensor(rng.standard_normal((1, length)).astype(np.float32)),
                label=c, source_id=f"s{c}-{i}",
            ))
    return out


def test_evaluate_always_class_zero_on_balanced_set():
    logits = lambda xs: np.tile(np.array([[1.0] + [0.0] * 9], dtype=np.float32),
                                (xs.shape[0], 1))
    model = _StubModel(logits, 10)
    result = evaluate(model, _balanced_samples(10, 3))
    assert result.accuracy == pytest.approx(0.1)


def test_evaluate_confusion_row_sums():
    rng = np.random.default_rng(7)
    logits = lambda xs: rng.standard_normal((xs.shape[0], 4)).astype(np.float32)
    model = _StubModel(logits, 4)
    samples = _balanced_samples(4, 5)
    result = evaluate(model, samples)
    np.testing.assert_array_equal(result.confusion.sum(axis=1), [5, 5, 5, 5])
    assert result.confusion.sum() == len(samples)


def test_evaluate_tie_predicts_lowest_class():
    model = _StubModel(lambda xs: np.zeros((xs.shape[0], 4), dtype=np.float32), 4)
    samples = _balanced_samples(4, 2)
    result = evaluate(model, samples)
    # all predictions are class 0
    np.testing.assert_array_equal(result.confusion[:, 0], [2, 2, 2, 2])


@pytest.mark.slow
def test_mini_model_generalizes_on_synth_split():
    train_set = nn.synth_dataset(4, 30, seed=10, length=512)
    test_set = nn.synth_dataset(4, 10, seed=20, length=512)
    model = build(miniature_config(), seed=10)
    cfg = TrainConfig(max_epochs=150, seed=10, patience=1000)
    model, reports, _ = train(model, train_set, cfg)
    result = evaluate(model, test_set)
    assert result.accuracy > 0.9
