"""Mini-batch training loop with Adam, evaluation and checkpointing.

Per epoch the training set is shuffled with an rng derived from (seed, epoch),
so a run resumed from a checkpoint replays exactly the same order as an
uninterrupted one.  Gradients are averaged over each batch and applied with
one Adam step per batch.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .gat import forward, load_model, predict, save_model


@dataclass
class TrainConfig:
    epochs: int
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("epochs, learning_rate and batch_size must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float
    seconds: float


class AdamState:
    """First/second moment buffers and a shared step counter."""

    def __init__(self, params):
        self.step = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place."""
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


def evaluate(model, dataset):
    """Fraction of graphs whose predicted class equals the stored label."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    correct = sum(1 for g in dataset if predict(model, g) == g.label)
    return correct / len(dataset)


def train(model, train_set, val_set, cfg, start_epoch=0, opt_state=None,
          log=None):
    """Train in place; returns (model, list of EpochMetrics, AdamState).

    ``start_epoch``/``opt_state`` allow resuming from a checkpoint with
    metrics identical to an uninterrupted run at the same seed.
    """
    if not train_set:
        raise ValueError("empty training set")
    if any(g.label is None for g in train_set):
        raise ValueError("training graphs must carry labels")
    params = model.parameters()
    if opt_state is None:
        opt_state = AdamState(params)
    history = []
    for epoch in range(start_epoch, cfg.epochs):
        t0 = time.monotonic()
        rng = np.random.default_rng([cfg.seed, epoch])
        order = rng.permutation(len(train_set))
        losses = []
        correct = 0
        for bstart in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[bstart:bstart + cfg.batch_size]]
            grads = {k: np.zeros_like(v) for k, v in params.items()}
            for g in batch:
                art = forward(model, g)
                loss = art.tape.cross_entropy(art.logits, g.label)
                if not np.isfinite(loss.values):
                    raise RuntimeError(
                        f"non-finite loss at epoch {epoch}, label {g.label}")
                art.tape.backward(loss)
                losses.append(float(loss.values))
                correct += int(np.argmax(art.logits.values)) == g.label
                for name, t in art.param_tensors.items():
                    if t.grad is not None:
                        grads[name] += t.grad / len(batch)
            adam_step(params, grads, opt_state, cfg.learning_rate,
                      cfg.beta1, cfg.beta2, cfg.eps)
        val_acc = evaluate(model, val_set) if val_set else float("nan")
        metrics = EpochMetrics(epoch=epoch, loss=float(np.mean(losses)),
                               train_acc=correct / len(train_set),
                               val_acc=val_acc,
                               seconds=time.monotonic() - t0)
        history.append(metrics)
        if log:
            log(metrics)
    return model, history, opt_state


# ---- metrics / checkpoint plumbing -------------------------------------------

METRICS_FIELDS = ("epoch", "loss", "train_acc", "val_acc", "seconds")


def write_metrics_csv(path, history):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRICS_FIELDS)
        for m in history:
            w.writerow([m.epoch, repr(m.loss), repr(m.train_acc),
                        repr(m.val_acc), f"{m.seconds:.3f}"])


def save_checkpoint(path, model, opt_state, history):
    extra = {
        "epochs_done": opt_state_epochs(history),
        "adam_step": opt_state.step,
        "metrics": [[m.epoch, m.loss, m.train_acc, m.val_acc, m.seconds]
                    for m in history],
    }
    arrays = {}
    for k in opt_state.m:
        arrays[f"adam.m.{k}"] = opt_state.m[k]
        arrays[f"adam.v.{k}"] = opt_state.v[k]
    save_model(path, model, extra=extra, arrays_extra=arrays)


def opt_state_epochs(history):
    return history[-1].epoch + 1 if history else 0


def load_checkpoint(path):
    """Returns (model, opt_state, history)."""
    model, extra, arrays = load_model(path)
    opt_state = AdamState(model.parameters())
    opt_state.step = extra.get("adam_step", 0)
    for k in opt_state.m:
        if f"adam.m.{k}" in arrays:
            opt_state.m[k] = arrays[f"adam.m.{k}"]
            opt_state.v[k] = arrays[f"adam.v.{k}"]
    history = [EpochMetrics(int(e), l, ta, va, s)
               for e, l, ta, va, s in extra.get("metrics", [])]
    return model, opt_state, history
