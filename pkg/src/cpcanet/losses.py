"""Segmentation losses: soft Dice, pixel cross-entropy, and their
weighted combination (defaults 1.2 and 0.8)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass
class LossWeights:
    lambda_dc: float = 1.2
    lambda_ce: float = 0.8

    def validate(self) -> "LossWeights":
        if self.lambda_dc < 0 or self.lambda_ce < 0:
            raise ConfigError("loss weights must be non-negative")
        return self


def one_hot(mask: np.ndarray, num_classes: int, dtype) -> np.ndarray:
    """(N, H, W) integer labels to (N, K, H, W) one-hot planes."""
    mask = np.asarray(mask)
    if mask.ndim != 3:
        raise ShapeError(f"mask must be (N, H, W), got shape {mask.shape}")
    if mask.min() < 0 or mask.max() >= num_classes:
        raise ShapeError(
            f"mask labels must lie in [0, {num_classes}), got range "
            f"[{mask.min()}, {mask.max()}]"
        )
    n, h, w = mask.shape
    out = np.zeros((n, num_classes, h, w), dtype=dtype)
    np.put_along_axis(out, mask[:, None].astype(np.int64), 1, axis=1)
    return out


def _check_batch(logits: Tensor, mask: np.ndarray):
    if logits.ndim != 4:
        raise ShapeError(f"logits must be (N, K, H, W), got shape {logits.shape}")
    n, k, h, w = logits.shape
    if n == 0:
        raise ShapeError("empty batch")
    if k < 2:
        raise ShapeError(f"need at least 2 classes, got {k}")
    if np.asarray(mask).shape != (n, h, w):
        raise ShapeError(
            f"mask shape {np.asarray(mask).shape} does not match logits {(n, h, w)}"
        )


def dice_loss(logits: Tensor, mask: np.ndarray, *, smooth: float = 1e-5,
              include_background: bool = True) -> Tensor:
    """1 - mean per-class soft Dice of softmax probabilities vs one-hot."""
    _check_batch(logits, mask)
    k = logits.shape[1]
    targets = Tensor(one_hot(mask, k, logits.dtype))
    probs = ops.log_softmax(logits, axis=1).exp()
    inter = (probs * targets).sum(axis=(0, 2, 3))
    psum = probs.sum(axis=(0, 2, 3))
    tsum = targets.sum(axis=(0, 2, 3))
    dice = (2.0 * inter + smooth) / (psum + tsum + smooth)
    if include_background:
        return 1.0 - dice.mean()
    sel = np.ones(k, dtype=logits.dtype)
    sel[0] = 0.0
    return 1.0 - (dice * Tensor(sel)).sum() * (1.0 / (k - 1))


def cross_entropy_loss(logits: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over pixels of negative log-softmax at the target label."""
    _check_batch(logits, mask)
    n, k, h, w = logits.shape
    targets = Tensor(one_hot(mask, k, logits.dtype))
    lsm = ops.log_softmax(logits, axis=1)
    return -((targets * lsm).sum()) * (1.0 / (n * h * w))


def combined_loss(logits: Tensor, mask: np.ndarray, weights: LossWeights, *,
                  include_background: bool = True) -> Tensor:
    return (weights.lambda_dc * dice_loss(logits, mask, include_background=include_background)
            + weights.lambda_ce * cross_entropy_loss(logits, mask))
