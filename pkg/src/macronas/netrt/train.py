"""SGD training and evaluation of compiled plans.

Mini-batch SGD with momentum, L2 weight decay folded into the gradients,
and a restart-free cosine learning-rate schedule annealed to zero over
the run.  Cutout augmentation, when enabled, is applied per image in
train mode only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..data import cutout
from .plan import NetworkPlan
from .runtime import Params, backward, forward, forward_with_tape, trainable_names


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int = 96
    learning_rate: float = 0.025
    momentum: float = 0.9
    weight_decay: float = 3e-4
    cutout_size: Optional[int] = None  # None disables cutout

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.cutout_size is not None and self.cutout_size <= 0:
            raise ValueError("cutout_size must be positive")


@dataclass
class Batch:
    inputs: np.ndarray  # (I, C, H, W)
    labels: np.ndarray  # (I,) integer classes


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the global step index."""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"training diverged at step {step}")


def default_cutout_size(image_side: int) -> int:
    """Default hole size: a quarter of the image side, at least 1."""
    return max(1, image_side // 4)


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    """Cosine annealing from ``base_lr`` at step 0 to zero at the last step."""
    if total_steps <= 0:
        return base_lr
    frac = min(max(step / total_steps, 0.0), 1.0)
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * frac))


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient with respect to the logits."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = -log_probs[np.arange(n), labels].mean()
    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def train(plan: NetworkPlan, params: Params, train_set, cfg: TrainConfig, rng: np.random.Generator):
    """Train in place; returns ``(params, per-epoch stats)``.

    ``train_set`` needs ``images`` (N,C,H,W) and ``labels`` (N,) fields.
    The schedule length is the full run (epochs x batches), so the rate
    starts at ``cfg.learning_rate`` and reaches zero only at the end.
    """
    images = np.asarray(train_set.images)
    labels = np.asarray(train_set.labels)
    n = labels.shape[0]
    if n < 1:
        raise ValueError("empty training set")
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    names = trainable_names(params)
    velocity = {name: np.zeros_like(params[name]) for name in names}

    history: list[EpochStats] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            xb = images[idx].astype(np.float64)
            yb = labels[idx]
            if cfg.cutout_size:
                for i in range(xb.shape[0]):
                    xb[i] = cutout(xb[i], cfg.cutout_size, rng)
            logits, tape = forward_with_tape(plan, params, xb, mode="train", rng=rng)
            loss, dlogits = softmax_cross_entropy(logits, yb)
            if not math.isfinite(loss):
                raise TrainingDivergedError(step)
            _, grads = backward(plan, params, tape, dlogits)
            lr = cosine_lr(step, total_steps, cfg.learning_rate)
            for name in names:
                g = grads[name] + cfg.weight_decay * params[name]
                v = velocity[name]
                v *= cfg.momentum
                v += g
                params[name] -= lr * v
            step += 1
            loss_sum += loss * len(idx)
            correct += int((logits.argmax(axis=1) == yb).sum())
        history.append(EpochStats(epoch=epoch, loss=loss_sum / n, accuracy=correct / n))
    return params, history


def evaluate(plan: NetworkPlan, params: Params, dataset, batch_size: int = 256) -> float:
    """Eval-mode accuracy; argmax ties resolve to the lowest class index."""
    images = np.asarray(dataset.images)
    labels = np.asarray(dataset.labels)
    n = labels.shape[0]
    if n < 1:
        raise ValueError("empty dataset")
    correct = 0
    for start in range(0, n, batch_size):
        xb = images[start : start + batch_size].astype(np.float64)
        preds = forward(plan, params, xb, mode="eval").argmax(axis=1)
        correct += int((preds == labels[start : start + batch_size]).sum())
    return correct / n
