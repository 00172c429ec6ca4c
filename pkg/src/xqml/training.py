"""Device-oriented training: noiseless, topology-aware and noisy phases."""

from __future__ import annotations

import csv
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import model as hm
from .dataio import Dataset, split
from .sim import make_rng

PHASES = ("noiseless", "topology", "noisy")
OPTIMIZERS = ("adam", "spsa")
CLAMP = 1e-12


class TrainingError(RuntimeError):
    pass


def bce_loss(outputs, labels):
    """Mean binary cross-entropy; outputs are clamped to ``[1e-12, 1 - 1e-12]``."""
    y = np.asarray(outputs, dtype=float).ravel()
    lab = np.asarray(labels, dtype=float).ravel()
    if y.size != lab.size:
        raise ValueError(f"length mismatch: {y.size} outputs, {lab.size} labels")
    if y.size == 0:
        raise ValueError("empty batch")
    if not np.isfinite(y).all() or (y < 0).any() or (y > 1).any():
        raise ValueError("outputs must be probabilities in [0, 1]")
    if (y < CLAMP).any() or (y > 1 - CLAMP).any():
        warnings.warn("outputs at 0 or 1 clamped to avoid log(0)", RuntimeWarning, stacklevel=2)
        y = np.clip(y, CLAMP, 1 - CLAMP)
    return float(-np.mean(lab * np.log(y) + (1 - lab) * np.log1p(-y)))


def bce_score_gradient(outputs, labels):
    """``dL/ds`` per sample for ``y = sigmoid(s)`` under mean BCE: ``(y - l) / N``."""
    y = np.asarray(outputs, dtype=float).ravel()
    lab = np.asarray(labels, dtype=float).ravel()
    if y.size != lab.size:
        raise ValueError(f"length mismatch: {y.size} outputs, {lab.size} labels")
    return (y - lab) / y.size


@dataclass(frozen=True)
class TrainConfig:
    phase: str = "noiseless"
    optimizer: str = "adam"
    lr: float = 0.01
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    spsa_a: float = 0.2
    spsa_c: float = 0.1
    spsa_alpha: float = 0.602
    spsa_gamma: float = 0.101
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    patience: int | None = None
    val_fraction: float = 0.2
    device: object = None
    layout: tuple | None = None
    route_seed: int = 0

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}; expected one of {PHASES}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZERS}")
        if self.phase != "noiseless" and self.device is None:
            raise ValueError(f"phase {self.phase!r} needs a device spec")
        if not (self.lr >= 0 and math.isfinite(self.lr)):
            raise ValueError("lr must be a finite non-negative number")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must lie in [0, 1)")
        if self.spsa_a <= 0 or self.spsa_c <= 0:
            raise ValueError("SPSA gains must be positive")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1")

    def execution(self):
        if self.phase == "noiseless":
            return hm.ExecutionConfig.noiseless()
        if self.phase == "topology":
            return hm.ExecutionConfig.topology(self.device, self.layout, self.route_seed)
        return hm.ExecutionConfig.noisy(self.device, self.layout, self.route_seed)

    def as_dict(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["betas"] = list(self.betas)
        out["layout"] = None if self.layout is None else list(self.layout)
        dev = self.device
        out["device"] = None if dev is None else (dev if isinstance(dev, str) else dev.name)
        return out


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int | None = None

    def __len__(self):
        return len(self.loss)

    def rows(self):
        return [
            {"epoch": i + 1, "loss": l, "accuracy": a, "seconds": s}
            for i, (l, a, s) in enumerate(zip(self.loss, self.accuracy, self.seconds))
        ]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["epoch", "loss", "accuracy", "seconds"], lineterminator="\n")
            w.writeheader()
            for r in self.rows():
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


class Adam:
    def __init__(self, lr=0.01, betas=(0.9, 0.999), eps=1e-8):
        self.lr, (self.b1, self.b2), self.eps = lr, betas, eps
        self.m = self.v = None
        self.t = 0

    def step(self, params, grad):
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def spsa_gains(k, a, c, alpha=0.602, gamma=0.101):
    """``(a_k, c_k) = (a / k^alpha, c / k^gamma)`` for iteration ``k >= 1``."""
    if k < 1:
        raise ValueError("SPSA iterations start at 1")
    return a / k ** alpha, c / k ** gamma


def rademacher(size, rng):
    return rng.choice(np.array([-1.0, 1.0]), size=size)


def spsa_update(f, x, k, a, c, alpha=0.602, gamma=0.101, rng=None):
    """One simultaneous-perturbation step on a scalar function ``f``."""
    rng = make_rng(0) if rng is None else rng
    ak, ck = spsa_gains(k, a, c, alpha, gamma)
    delta = rademacher(x.size, rng)
    fp, fm = f(x + ck * delta), f(x - ck * delta)
    if not (math.isfinite(fp) and math.isfinite(fm)):
        raise TrainingError(f"non-finite SPSA evaluation at iteration {k}: f+={fp}, f-={fm}")
    # 1/delta_i == delta_i for +-1 entries
    ghat = (fp - fm) / (2 * ck) * delta
    return x - ak * ghat


def spsa_minimize(f, x0, iterations, a=0.2, c=0.1, alpha=0.602, gamma=0.101, seed=0):
    rng = make_rng(seed)
    x = np.asarray(x0, dtype=float).copy()
    for k in range(1, iterations + 1):
        x = spsa_update(f, x, k, a, c, alpha, gamma, rng)
    return x


def spsa_step(model, features, labels, iteration, cfg, exec_cfg=None):
    """SPSA update of all model parameters on one batch."""
    exec_cfg = exec_cfg or cfg.execution()
    rng = make_rng([cfg.seed, iteration])

    def f(p):
        return hm.loss(model.with_parameters(p), features, labels, exec_cfg)

    new = spsa_update(f, model.parameters(), iteration, cfg.spsa_a, cfg.spsa_c,
                      cfg.spsa_alpha, cfg.spsa_gamma, rng)
    return model.with_parameters(new)


def _evaluate(model, data, exec_cfg):
    out = np.atleast_1d(hm.forward(model, data.features, exec_cfg))
    loss = bce_loss(out, data.labels)
    acc = float(np.mean((out >= 0.5).astype(int) == data.labels))
    return loss, acc


def train(model, dataset, cfg, log=None):
    """Train ``model`` and return ``(best model, TrainHistory)``.

    A seeded stratified split holds out ``val_fraction`` of the data; the
    returned weights are those of the epoch with the lowest validation loss.
    """
    if not isinstance(dataset, Dataset) or len(dataset) == 0:
        raise ValueError("training needs a non-empty Dataset")
    if dataset.n_features != model.in_dim:
        raise ValueError(f"dataset has {dataset.n_features} features, model expects {model.in_dim}")
    exec_cfg = cfg.execution()
    train_set, val_set = dataset, dataset
    counts = dataset.class_counts()
    if cfg.val_fraction > 0 and min(counts) * cfg.val_fraction >= 0.5:
        train_set, val_set = split(dataset, 1 - cfg.val_fraction, seed=[cfg.seed, 1])
    rng = make_rng([cfg.seed, 2])
    adam = Adam(cfg.lr, cfg.betas, cfg.eps)
    params = model.parameters()
    history = TrainHistory()
    best, best_loss, stale, iteration = model, math.inf, 0, 0
    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        order = rng.permutation(len(train_set))
        for lo in range(0, order.size, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            xb, yb = train_set.features[idx], train_set.labels[idx]
            current = model.with_parameters(params)
            iteration += 1
            if cfg.optimizer == "adam":
                batch_loss, grad = hm.gradient(current, xb, yb, exec_cfg)
                if not (math.isfinite(batch_loss) and np.isfinite(grad).all()):
                    raise TrainingError(
                        f"non-finite loss/gradient at epoch {epoch + 1}, batch {lo // cfg.batch_size + 1}"
                    )
                params = adam.step(params, grad)
            else:
                params = spsa_step(current, xb, yb, iteration, cfg, exec_cfg).parameters()
        current = model.with_parameters(params)
        tr_loss, tr_acc = _evaluate(current, train_set, exec_cfg)
        va_loss = tr_loss if val_set is train_set else _evaluate(current, val_set, exec_cfg)[0]
        if not (math.isfinite(tr_loss) and math.isfinite(va_loss)):
            raise TrainingError(f"non-finite loss after epoch {epoch + 1}")
        history.loss.append(tr_loss)
        history.accuracy.append(tr_acc)
        history.val_loss.append(va_loss)
        history.seconds.append(time.perf_counter() - start)
        if log:
            log(f"epoch {epoch + 1}: loss {tr_loss:.5f} acc {tr_acc:.4f} val {va_loss:.5f}")
        if va_loss < best_loss:
            best, best_loss, stale = current, va_loss, 0
            history.best_epoch = epoch + 1
        else:
            stale += 1
            if cfg.patience is not None and stale >= cfg.patience:
                break
    return best, history
