"""Optimizers, gradient clipping, learning-rate decay, and the epoch loop."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from . import tensor as T
from .data import CharCorpus, SequenceBatch, SequenceDataset, batch_iter, classification_batches
from .layers import Module
from .model import model_record, save_checkpoint
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)

LN2 = math.log(2.0)


class TrainingDivergedError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# optimizers


def sgd_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float) -> None:
    """In-place ``p -= lr * g``."""
    for p, g in zip(params, grads):
        p -= lr * g


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


class Optimizer:
    def __init__(self, params: Sequence[Tensor], lr: float):
        self.params = list(params)
        self.lr = lr

    def grads(self) -> list[np.ndarray]:
        return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    def step(self) -> None:
        sgd_step([p.data for p in self.params], self.grads(), self.lr)


class Adam(Optimizer):
    def __init__(self, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        super().__init__(params, lr)
        self.betas = betas
        self.eps = eps
        self.state = AdamState.zeros_like([p.data for p in self.params])

    def step(self) -> None:
        adam_step([p.data for p in self.params], self.grads(), self.state, self.lr, *self.betas, self.eps)


def make_optimizer(name: str, params: Sequence[Tensor], lr: float) -> Optimizer:
    if name == "adam":
        return Adam(params, lr)
    if name == "sgd":
        return SGD(params, lr)
    raise ValueError(f"unknown optimizer {name!r}")


def clip_grad_norm(grads: Sequence[np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``.

    Returns the norm observed before clipping.
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


# ---------------------------------------------------------------------------
# learning-rate decay


@dataclass
class TrainState:
    learning_rate: float
    recent_test_losses: tuple[float, ...] = ()
    epoch: int = 0
    seed: int = 0
    best_valid_loss: float = math.inf


def lr_decay_check(state: TrainState, new_test_loss: float) -> TrainState:
    """Divide the learning rate by 10 when the new loss exceeds the max of the previous three.

    The window always shifts in ``new_test_loss`` and keeps at most three entries.
    """
    lr = state.learning_rate
    window = state.recent_test_losses
    if len(window) == 3 and new_test_loss > max(window):
        lr = lr / 10.0
    window = (window + (new_test_loss,))[-3:]
    return dataclasses.replace(state, learning_rate=lr, recent_test_losses=window)


# ---------------------------------------------------------------------------
# losses and metrics


def bpc(mean_loss: float) -> float:
    """Bits per character from a mean natural-log cross-entropy."""
    return mean_loss / LN2


def lm_loss(log_probs: Tensor, targets: np.ndarray, valid_length: int) -> Tensor:
    """Cross-entropy over the final ``valid_length`` positions only."""
    n = log_probs.shape[-2]
    if not 1 <= valid_length <= n:
        raise ValueError(f"valid_length {valid_length} outside [1, {n}]")
    start = n - valid_length
    if start == 0:
        return T.cross_entropy(log_probs, targets)
    return T.cross_entropy(log_probs[..., start:, :], np.asarray(targets)[..., start:])


def batch_loss(model: Module, batch: SequenceBatch, rng=None) -> Tensor:
    out = model(batch.inputs, rng)
    if out.ndim == 3:
        return lm_loss(out, batch.targets, batch.valid_length)
    return T.cross_entropy(out, batch.targets)


def train_epoch(
    model: Module,
    batches: Iterable[SequenceBatch],
    optimizer: Optimizer,
    clip: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """One pass of forward / masked loss / backward / clip / step; returns the mean batch loss."""
    model.train()
    total, count = 0.0, 0
    for i, batch in enumerate(batches):
        optimizer.zero_grad()
        loss = batch_loss(model, batch, rng)
        value = loss.item()
        loss.backward()
        grads = optimizer.grads()
        norm = clip_grad_norm(grads, clip) if clip else math.sqrt(sum(float(np.vdot(g, g)) for g in grads))
        if not math.isfinite(value) or not math.isfinite(norm):
            raise TrainingDivergedError(f"non-finite loss at batch {i}: loss={value} lr={optimizer.lr} grad_norm={norm}")
        for p, g in zip(optimizer.params, grads):
            p.grad = g
        optimizer.step()
        total += value
        count += 1
    model.eval()
    if count == 0:
        raise ValueError("no batches")
    return total / count


def evaluate(model: Module, batches: Iterable[SequenceBatch]) -> dict[str, float]:
    """Mean loss plus top-1 accuracy (classification) or bpc (language modelling)."""
    model.eval()
    loss_sum, weight, correct, items, is_lm = 0.0, 0, 0, 0, False
    with no_grad():
        for batch in batches:
            out = model(batch.inputs)
            if out.ndim == 3:
                is_lm = True
                n_scored = out.shape[0] * batch.valid_length
                loss_sum += lm_loss(out, batch.targets, batch.valid_length).item() * n_scored
                weight += n_scored
            else:
                loss_sum += T.cross_entropy(out, batch.targets).item() * len(batch.targets)
                weight += len(batch.targets)
                correct += int((out.data.argmax(axis=-1) == batch.targets).sum())
                items += len(batch.targets)
    if weight == 0:
        raise ValueError("empty dataset")
    mean_loss = loss_sum / weight
    if is_lm:
        return {"mean_loss": mean_loss, "bpc": bpc(mean_loss)}
    return {"mean_loss": mean_loss, "top1_accuracy": correct / items}


# ---------------------------------------------------------------------------
# full runs


@dataclass
class TaskData:
    """Train/valid/test splits plus how to batch them."""

    kind: str  # "classification" or "language-model"
    train: Union[SequenceDataset, np.ndarray]
    valid: Union[SequenceDataset, np.ndarray]
    test: Union[SequenceDataset, np.ndarray]
    seq_len: int = 0
    valid_len: int = 0
    corpus: Optional[CharCorpus] = None

    def batches(self, split: str, batch_size: int, rng=None) -> Iterable[SequenceBatch]:
        data = getattr(self, split)
        if self.kind == "language-model":
            return batch_iter(data, self.seq_len, self.valid_len, batch_size, rng)
        return classification_batches(data, batch_size, rng)


@dataclass
class FitConfig:
    epochs: int
    batch_size: int
    lr: float
    optimizer: str = "adam"
    clip: Optional[float] = None
    seed: int = 0


METRIC_FIELDS = ("epoch", "train_loss", "valid_loss", "lr", "metric", "value")


def fit(
    model: Module,
    data: TaskData,
    cfg: FitConfig,
    out_dir: Optional[Union[str, Path]] = None,
    record_extra: Optional[dict] = None,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> list[dict]:
    """Train for ``cfg.epochs`` epochs with validation-driven lr decay.

    When ``out_dir`` is given, writes ``metrics.csv`` (deterministic columns
    only), ``timing.csv`` (wall-clock seconds per epoch), ``best.ckpt`` and
    ``last.ckpt``.
    """
    _, shuffle_seq, dropout_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)
    optimizer = make_optimizer(cfg.optimizer, model.parameters(), cfg.lr)
    state = TrainState(learning_rate=cfg.lr, seed=cfg.seed)
    metric = "bpc" if data.kind == "language-model" else "top1_accuracy"
    out = Path(out_dir) if out_dir is not None else None
    record = model_record(model, **(record_extra or {}))
    history = []
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        metrics_fh = open(out / "metrics.csv", "w", newline="")
        timing_fh = open(out / "timing.csv", "w", newline="")
        metrics_csv = csv.writer(metrics_fh)
        timing_csv = csv.writer(timing_fh)
        metrics_csv.writerow(METRIC_FIELDS)
        timing_csv.writerow(("epoch", "wall_seconds"))
    try:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            optimizer.lr = state.learning_rate
            train_loss = train_epoch(model, data.batches("train", cfg.batch_size, shuffle_rng), optimizer, cfg.clip, dropout_rng)
            scores = evaluate(model, data.batches("valid", cfg.batch_size))
            wall = time.perf_counter() - t0
            row = {
                "epoch": epoch,
                "train_loss": train_loss,
                "valid_loss": scores["mean_loss"],
                "lr": state.learning_rate,
                "metric": metric,
                "value": scores[metric],
            }
            history.append(row)
            log.info("epoch %d train %.4f valid %.4f %s %.4f lr %g (%.1fs)", epoch, train_loss, row["valid_loss"], metric, row["value"], row["lr"], wall)
            improved = scores["mean_loss"] < state.best_valid_loss
            state = lr_decay_check(state, scores["mean_loss"])
            state = dataclasses.replace(state, epoch=epoch, best_valid_loss=min(state.best_valid_loss, scores["mean_loss"]))
            if out is not None:
                metrics_csv.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in METRIC_FIELDS])
                timing_csv.writerow((epoch, f"{wall:.3f}"))
                metrics_fh.flush()
                timing_fh.flush()
                if improved:
                    save_checkpoint(out / "best.ckpt", model, {**record, "epoch": epoch})
            if on_epoch:
                on_epoch(row)
        if out is not None:
            save_checkpoint(out / "last.ckpt", model, {**record, "epoch": cfg.epochs})
    finally:
        if out is not None:
            metrics_fh.close()
            timing_fh.close()
    return history
