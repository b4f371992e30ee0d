"""Label-smoothed loss, SGD with momentum, and the training loop."""
import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import ops
from .core.tensor import Tape, Tensor, as_tensor, no_grad
from .errors import InputError, NumericError
from .metrics import evaluate

log = logging.getLogger(__name__)


def smooth_labels(y, num_classes, eps=0.1):
    """(1 - eps) * onehot(y) + eps / K. Accepts a scalar label or an array."""
    y_arr = np.asarray(y)
    if np.any(y_arr < 0) or np.any(y_arr >= num_classes):
        raise InputError(f"label {y} outside 0..{num_classes - 1}")
    q = np.full(y_arr.shape + (num_classes,), eps / num_classes)
    np.put_along_axis(q, y_arr[..., None].astype(int), 1.0 - eps + eps / num_classes, axis=-1)
    return q


def smoothed_ce(logits, y, eps=0.1):
    """Mean cross-entropy of softmax(logits) against smoothed targets."""
    logits = as_tensor(logits)
    if logits.ndim == 1:
        logits = ops.reshape(logits, (1, -1))
    y = np.atleast_1d(np.asarray(y))
    q = smooth_labels(y, logits.shape[-1], eps).astype(logits.dtype)
    logp = ops.log_softmax(logits, axis=-1)
    return ops.sum(logp * Tensor(-q / len(y), dtype=logits.dtype))


class SGD:
    """velocity = momentum * velocity + grad + weight_decay * param;
    param -= lr * velocity."""

    def __init__(self, params, lr=0.1, momentum=0.9, weight_decay=0.0):
        self.params = list(params.values()) if isinstance(params, dict) else list(params)
        self.lr, self.momentum, self.weight_decay = lr, momentum, weight_decay
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        for p in self.params:
            if p.grad is None or not np.all(np.isfinite(p.grad)):
                raise NumericError(f"non-finite gradient for parameter {p.name or p.shape}")
        for p, v in zip(self.params, self.velocity):
            v *= self.momentum
            v += p.grad
            if self.weight_decay:
                v += self.weight_decay * p.data
            p.data -= (lr * v).astype(p.dtype)

    def zero_grad(self):
        for p in self.params:
            p.grad = np.zeros_like(p.data)


def sgd_step(params, lr, momentum=0.0, weight_decay=0.0, velocity=None):
    """Functional single step; returns the updated velocity buffers."""
    opt = SGD(params, lr, momentum, weight_decay)
    if velocity is not None:
        opt.velocity = velocity
    opt.step()
    return opt.velocity


def cosine_lr(base, step, total, warmup=0):
    if warmup and step < warmup:
        return base * (step + 1) / warmup
    progress = min(max(step - warmup, 0) / max(total - warmup, 1), 1.0)
    return 0.5 * base * (1.0 + math.cos(math.pi * progress))


@dataclass
class TrainConfig:
    steps: int = 500
    batch_size: int = 16
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    label_smoothing: float = 0.1
    warmup: int = 10
    eval_every: int = 25
    target_top1: float = None  # stop early once train top-1 reaches this
    seed: int = 0


def predict(model, x, batch_size=64):
    """Eval-mode logits for an (N, ...) array, in batches."""
    was_training = model.training
    model.eval()
    outs = []
    with no_grad():
        for i in range(0, len(x), batch_size):
            outs.append(model(x[i:i + batch_size]).data)
    model.train(was_training)
    return np.concatenate(outs).astype(np.float64)


def fit(model, x, y, cfg, rng=None, start_step=0, on_eval=None, optimizer=None):
    """Minibatch SGD on smoothed CE with a cosine schedule.

    Returns (history, optimizer); history rows are dicts with step, loss,
    lr and (at eval points) train top-1.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    params = model.parameters()
    opt = optimizer or SGD(params, cfg.lr, cfg.momentum, cfg.weight_decay)
    history = []
    n = len(x)
    order = rng.permutation(n)
    cursor = 0
    model.train()
    for step in range(start_step, cfg.steps):
        if cursor + cfg.batch_size > n:
            order, cursor = rng.permutation(n), 0
        idx = order[cursor:cursor + cfg.batch_size]
        cursor += cfg.batch_size
        lr = cosine_lr(cfg.lr, step, cfg.steps, cfg.warmup)
        opt.zero_grad()
        with Tape(params) as tape:
            loss = smoothed_ce(model(x[idx]), y[idx], cfg.label_smoothing)
        tape.backward(loss)
        opt.step(lr)
        row = {"step": step + 1, "loss": float(loss.data), "lr": lr}
        done = step + 1 == cfg.steps
        if cfg.eval_every and ((step + 1) % cfg.eval_every == 0 or done):
            row["train_top1"] = evaluate(predict(model, x), y).top1
            log.info("step %d loss %.4f train top-1 %.3f", step + 1, row["loss"], row["train_top1"])
            if on_eval is not None:
                on_eval(row)
            history.append(row)
            model.train()
            if cfg.target_top1 is not None and row["train_top1"] >= cfg.target_top1:
                break
        else:
            history.append(row)
    return history, opt
