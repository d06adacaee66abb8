"""Optimizers, deterministic data handling, and the training loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .checkpoint import save_checkpoint
from .data import SegSample, augment
from .errors import ConfigError, NonFiniteError, TrainingDiverged
from .losses import LossWeights, combined_loss
from .module import Module
from .tensor import Tensor, default_dtype, no_grad


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 4
    learning_rate: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"
    momentum: float = 0.99
    val_fraction: float = 0.2
    save_every: int = 0
    flip: bool = True
    rot90: bool = True
    intensity: bool = True

    def validate(self) -> "TrainConfig":
        if self.optimizer not in ("adam", "sgd_momentum"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in [0, 1)")
        return self


class SGDMomentum:
    def __init__(self, params, lr: float, momentum: float = 0.99):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            v *= self.momentum
            v += p.grad
            p.data -= (self.lr * v).astype(p.data.dtype, copy=False)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class Adam:
    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            p.data -= update.astype(p.data.dtype, copy=False)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def make_optimizer(model: Module, cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return Adam(model.parameters(), lr=cfg.learning_rate)
    return SGDMomentum(model.parameters(), lr=cfg.learning_rate, momentum=cfg.momentum)


def split_dataset(samples: list[SegSample], val_fraction: float, seed: int):
    """Deterministic shuffle then tail split; val may be empty."""
    order = np.random.default_rng(seed).permutation(len(samples))
    n_val = int(round(len(samples) * val_fraction))
    if val_fraction > 0 and n_val == 0:
        n_val = 1
    train_idx = order[: len(samples) - n_val]
    val_idx = order[len(samples) - n_val:]
    return [samples[i] for i in train_idx], [samples[i] for i in val_idx]


def _batch(samples: list[SegSample]):
    dt = default_dtype()
    images = np.stack([s.image for s in samples]).astype(dt)
    masks = np.stack([s.mask for s in samples])
    return Tensor(images), masks


def evaluate_dsc(model: Module, samples: list[SegSample]) -> list[float]:
    """Per-class DSC (percent) of argmax predictions, averaged over samples."""
    was_training = model.training
    model.eval()
    k = samples[0].num_classes
    per_class = np.zeros(k)
    with no_grad():
        for s in samples:
            x, _ = _batch([s])
            pred = np.argmax(model(x).data[0], axis=0)
            for c in range(k):
                per_class[c] += metrics.dsc(pred, s.mask, c)
    model.train(was_training)
    return list(per_class / len(samples))


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    dsc_mean: float
    dsc_per_class: list[float]
    lr: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    num_classes: int = 0

    def to_csv(self) -> str:
        cols = ",".join(f"dsc_class_{k}" for k in range(self.num_classes))
        lines = [f"epoch,loss,dsc_mean,{cols},lr"]
        for r in self.records:
            per = ",".join(f"{v:.6f}" for v in r.dsc_per_class)
            lines.append(f"{r.epoch},{r.loss:.10g},{r.dsc_mean:.6f},{per},{r.lr:.10g}")
        return "\n".join(lines) + "\n"


def foreground_mean(per_class: list[float]) -> float:
    return float(np.mean(per_class[1:])) if len(per_class) > 1 else float(per_class[0])


def fit(model: Module, samples: list[SegSample], cfg: TrainConfig,
        weights: LossWeights | None = None, *, out_dir=None,
        progress=None) -> TrainLog:
    """Train the model; deterministic for a fixed seed and thread count.

    Per-epoch DSC is measured on the held-out split (on the training set
    when val_fraction is 0).  Checkpoints are written every ``save_every``
    epochs plus a final one when ``out_dir`` is given.
    """
    cfg.validate()
    if not samples:
        raise ConfigError("dataset is empty")
    weights = weights or LossWeights()
    train_set, val_set = split_dataset(samples, cfg.val_fraction, cfg.seed)
    if not train_set:
        raise ConfigError(
            f"{len(samples)} sample(s) leave no training data after the "
            f"{cfg.val_fraction:.0%} validation split; lower val_fraction"
        )
    eval_set = val_set if val_set else train_set
    opt = make_optimizer(model, cfg)
    rng = np.random.default_rng(cfg.seed)
    log = TrainLog(num_classes=samples[0].num_classes)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    for epoch in range(1, cfg.epochs + 1):
        model.train()
        order = rng.permutation(len(train_set))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = []
            for i in idx:
                seed_seq = np.random.SeedSequence((cfg.seed, epoch, int(i)))
                batch.append(augment(
                    train_set[i], np.random.default_rng(seed_seq),
                    flip=cfg.flip, rot90=cfg.rot90, intensity=cfg.intensity,
                ))
            x, masks = _batch(batch)
            opt.zero_grad()
            try:
                loss = combined_loss(model(x), masks, weights)
                loss_value = loss.item()
                if not np.isfinite(loss_value):
                    raise NonFiniteError("loss is non-finite")
                loss.backward()
            except NonFiniteError as err:
                raise TrainingDiverged(
                    f"aborted at epoch {epoch}: {err}"
                ) from err
            opt.step()
            epoch_loss += loss_value
            n_batches += 1
        per_class = evaluate_dsc(model, eval_set)
        record = EpochRecord(
            epoch=epoch,
            loss=epoch_loss / n_batches,
            dsc_mean=foreground_mean(per_class),
            dsc_per_class=per_class,
            lr=cfg.learning_rate,
        )
        log.records.append(record)
        if progress is not None:
            progress(record)
        if out is not None and cfg.save_every and epoch % cfg.save_every == 0:
            save_checkpoint(model, out / f"ckpt_epoch_{epoch:04d}.cpck")

    if out is not None:
        save_checkpoint(model, out / "ckpt_final.cpck")
        log_path = out / "log.csv"
        tmp = out / "log.csv.tmp"
        tmp.write_text(log.to_csv())
        tmp.replace(log_path)
    return log
