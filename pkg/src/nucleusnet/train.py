"""Training loop (Adam + L2, batch 32, patience-based convergence) and evaluation."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericalError
from .model import Model
from .ops import softmax_xent_array
from .optim import AdamState, RegConfig, add_l2_grad, adam_step, init_adam
from .tensor import Tensor, as_array


@dataclass
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 300
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lambda_: float = 1e-4
    patience: int = 20       # epochs without train-loss improvement
    min_delta: float = 1e-4  # improvement below this does not reset patience
    checkpoint_every: int = 0  # periodic checkpoint cadence in epochs (0 = off)
    micro_batch: int = 8     # forward/backward chunk for batchnorm-free models

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")


@dataclass
class EpochReport:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_accuracy: float | None
    wall_time_s: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
            "wall_time_s": self.wall_time_s,
        }


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # rows = true class, columns = predicted
    mean_loss: float


def _check_finite(model: Model, loss: float, epoch: int, step: int):
    if np.isfinite(loss):
        return
    name = "loss"
    for p in model.store:
        if not np.isfinite(as_array(p.value)).all():
            name = p.name
            break
        if p.grad is not None and not np.isfinite(as_array(p.grad)).all():
            name = f"{p.name}.grad"
            break
    raise NumericalError(
        f"non-finite loss at epoch {epoch} step {step}; first non-finite tensor: {name}",
        tensor_name=name,
    )


def _train_step(model: Model, xs, labels, reg: RegConfig, adam: AdamState,
                micro_batch: int):
    """One optimizer step on a batch; returns (loss incl. penalty, n correct).

    The batch is forwarded in micro-chunks to bound scratch memory unless the
    model carries batchnorm, whose train-mode statistics couple the whole
    batch. Per-sample losses are averaged over the batch, so chunking does
    not change the objective; chunk gradients are summed before the update.
    """
    n = xs.shape[0]
    chunk = n if model.has_batchnorm else max(1, min(micro_batch, n))
    total_xent = 0.0
    correct = 0
    accum: dict[str, np.ndarray] = {}
    single = chunk >= n
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        probs, tape = model.forward_batch(xs[sl], mode="train")
        losses, grad_logits = softmax_xent_array(tape.logits, labels[sl])
        total_xent += float(losses.sum())
        correct += int((probs.argmax(axis=1) == labels[sl]).sum())
        model.backward(tape, grad_logits / n)
        if not single:
            for p in model.store.trainable():
                g = as_array(p.grad)
                if p.name in accum:
                    accum[p.name] += g
                else:
                    accum[p.name] = g.copy()
    if not single:
        for p in model.store.trainable():
            p.grad = Tensor(accum[p.name])
    penalty = add_l2_grad(model.store, reg)
    loss = total_xent / n + penalty
    adam_step(model.store, adam)
    return loss, correct


def train(model: Model, train_set, config: TrainConfig, sink=None, test_set=None,
          adam: AdamState | None = None, checkpoint_dir=None):
    """Train in place; returns (model, list of EpochReports, AdamState).

    Each epoch reshuffles with the seeded RNG and takes exactly
    ceil(N / batch_size) optimizer steps (the final remainder is a smaller
    batch). Reported loss is the sample-weighted mean step loss, including
    the L2 penalty. Stops at max_epochs or when the best train loss has not
    improved by min_delta for ``patience`` consecutive epochs. ``sink`` is
    called with every EpochReport. With ``checkpoint_dir`` set and a nonzero
    ``config.checkpoint_every``, a checkpoint is written every N epochs.
    """
    if not train_set:
        raise ValueError("train_set is empty")
    reg = RegConfig(lambda_=config.lambda_)
    if adam is None:
        adam = init_adam(model.store, lr=config.lr, beta1=config.beta1,
                         beta2=config.beta2, eps=config.eps)
    rng = np.random.default_rng(config.seed)
    xs_all = np.stack([as_array(s.waveform) for s in train_set]).astype(model.dtype)
    labels_all = np.asarray([s.label for s in train_set], dtype=np.int64)
    n = len(train_set)
    reports = []
    best_loss = np.inf
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for step, start in enumerate(range(0, n, config.batch_size), start=1):
            idx = order[start : start + config.batch_size]
            loss, ok = _train_step(model, xs_all[idx], labels_all[idx], reg, adam,
                                   config.micro_batch)
            _check_finite(model, loss, epoch, step)
            loss_sum += loss * len(idx)
            correct += ok
        test_acc = None
        if test_set:
            test_acc = evaluate(model, test_set, batch_size=config.batch_size).accuracy
        report = EpochReport(
            epoch=epoch,
            train_loss=loss_sum / n,
            train_accuracy=correct / n,
            test_accuracy=test_acc,
            wall_time_s=time.perf_counter() - t0,
        )
        reports.append(report)
        if sink is not None:
            sink(report)
        if (checkpoint_dir is not None and config.checkpoint_every > 0
                and epoch % config.checkpoint_every == 0):
            from .checkpoint import save_checkpoint  # deferred: checkpoint builds models
            path = Path(checkpoint_dir)
            path.mkdir(parents=True, exist_ok=True)
            save_checkpoint(model, path / f"epoch{epoch:04d}.inuc", adam=adam)
        if report.train_loss < best_loss - config.min_delta:
            best_loss = report.train_loss
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return model, reports, adam


def evaluate(model: Model, samples, batch_size: int = 32) -> EvalResult:
    """Accuracy (argmax prediction, ties to the lowest class index),
    per-true-class confusion matrix, and mean cross-entropy."""
    if not samples:
        raise ValueError("evaluation set is empty")
    k = model.num_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    loss_sum = 0.0
    for start in range(0, len(samples), batch_size):
        batch = samples[start : start + batch_size]
        xs = np.stack([as_array(s.waveform) for s in batch]).astype(model.dtype)
        labels = np.asarray([s.label for s in batch], dtype=np.int64)
        logits = model.logits_batch(xs, mode="infer")
        losses, _ = softmax_xent_array(logits, labels)
        loss_sum += float(losses.sum())
        preds = logits.argmax(axis=1)
        np.add.at(confusion, (labels, preds), 1)
    accuracy = float(np.trace(confusion)) / len(samples)
    return EvalResult(accuracy=accuracy, confusion=confusion,
                      mean_loss=loss_sum / len(samples))
