"""Sliding-window prediction with Gaussian-weighted patch voting.

Windows are placed at stride steps over the (reflect-padded) image with
the final window snapped to the border; per-window softmax probabilities
are accumulated as a weighted average, so the result stays on the
probability simplex at every pixel.  Window order is fixed (sorted by
top-left corner), keeping the accumulation bitwise deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .module import Module
from .tensor import Tensor, default_dtype, no_grad

WEIGHT_FLOOR = 1e-8


@dataclass
class SlidingWindowConfig:
    crop_h: int = 224
    crop_w: int = 224
    stride_factor: float = 0.5
    sigma_factor: float = 0.125

    def validate(self) -> "SlidingWindowConfig":
        if self.crop_h < 1 or self.crop_w < 1:
            raise ConfigError("crop size must be >= 1")
        if not 0.0 < self.stride_factor <= 1.0:
            raise ConfigError("stride_factor must lie in (0, 1]")
        if self.sigma_factor <= 0:
            raise ConfigError("sigma_factor must be > 0")
        if min(self.stride()) < 1:
            raise ConfigError(
                f"stride floor(stride_factor * crop) must be >= 1, got {self.stride()}"
            )
        return self

    def stride(self) -> tuple[int, int]:
        return (int(self.stride_factor * self.crop_h),
                int(self.stride_factor * self.crop_w))


def gaussian_weight_map(cfg: SlidingWindowConfig) -> np.ndarray:
    """Separable Gaussian centered on the crop, max-normalized to 1 and
    floored at a small positive value so every pixel keeps weight."""
    cfg.validate()

    def axis(n: int) -> np.ndarray:
        center = (n - 1) / 2.0
        sigma = n * cfg.sigma_factor
        i = np.arange(n, dtype=np.float64)
        return np.exp(-((i - center) ** 2) / (2.0 * sigma * sigma))

    g = np.outer(axis(cfg.crop_h), axis(cfg.crop_w))
    g = g / g.max()
    return np.maximum(g, WEIGHT_FLOOR)


def _starts(span: int, crop: int, stride: int) -> list[int]:
    last = span - crop
    starts = list(range(0, last + 1, stride))
    if starts[-1] != last:
        starts.append(last)
    return starts


def _softmax_np(logits: np.ndarray, axis: int = 0) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def sliding_window_predict(model: Module, image, cfg: SlidingWindowConfig):
    """Predict one (Cin, H, W) image; returns (prob (K, H, W), mask (H, W)).

    The image is reflect-padded when smaller than the crop; windows never
    extend past the padded border.
    """
    cfg.validate()
    img = image.data if isinstance(image, Tensor) else np.asarray(image)
    if img.ndim != 3:
        raise ShapeError(f"image must be (Cin, H, W), got shape {img.shape}")
    _, h, w = img.shape
    ch, cw = cfg.crop_h, cfg.crop_w
    pad_h = max(0, ch - h)
    pad_w = max(0, cw - w)
    if pad_h >= h or pad_w >= w:
        raise ShapeError(
            f"crop {ch}x{cw} needs reflect padding of ({pad_h}, {pad_w}) "
            f"which exceeds the image size {h}x{w}; use a smaller crop "
            f"or pad the image beforehand"
        )
    if pad_h or pad_w:
        img = np.pad(img, ((0, 0), (0, pad_h), (0, pad_w)), mode="reflect")
    ph, pw = img.shape[1], img.shape[2]
    sh, sw = cfg.stride()

    weight = gaussian_weight_map(cfg)
    was_training = model.training
    model.eval()
    num = None
    den = np.zeros((ph, pw), dtype=np.float64)
    with no_grad():
        for y0 in _starts(ph, ch, sh):
            for x0 in _starts(pw, cw, sw):
                patch = img[:, y0:y0 + ch, x0:x0 + cw]
                xt = Tensor(patch[None].astype(default_dtype()))
                logits = model(xt).data[0]
                probs = _softmax_np(logits.astype(np.float64), axis=0)
                if num is None:
                    num = np.zeros((probs.shape[0], ph, pw), dtype=np.float64)
                num[:, y0:y0 + ch, x0:x0 + cw] += weight * probs
                den[y0:y0 + ch, x0:x0 + cw] += weight
    model.train(was_training)
    prob = (num / den)[:, :h, :w]
    mask = np.argmax(prob, axis=0)
    return prob, mask
