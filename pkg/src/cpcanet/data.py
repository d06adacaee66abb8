"""Sample container, congruent augmentation, and dataset-directory loading."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, NonFiniteError
from .pgm import read_image_pgm, read_mask_pgm


@dataclass
class SegSample:
    """Paired image (Cin, H, W) and integer label mask (H, W)."""

    image: np.ndarray
    mask: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.image = np.asarray(self.image)
        self.mask = np.asarray(self.mask)
        if self.image.ndim != 3:
            raise ConfigError(f"image must be (Cin, H, W), got shape {self.image.shape}")
        if self.mask.shape != self.image.shape[1:]:
            raise ConfigError(
                f"mask shape {self.mask.shape} does not match image {self.image.shape[1:]}"
            )
        if not np.all(np.isfinite(self.image)):
            raise NonFiniteError("sample image contains non-finite values")
        if self.mask.min() < 0 or self.mask.max() >= self.num_classes:
            raise ConfigError(
                f"mask labels must lie in [0, {self.num_classes})"
            )


def augment(sample: SegSample, seed, *, flip: bool = True, rot90: bool = True,
            intensity: bool = True) -> SegSample:
    """Random flips, 90-degree rotations, and multiplicative intensity
    jitter in [0.9, 1.1]; the mask is transformed congruently.

    ``seed`` may be an int or a numpy Generator; the same seed always
    produces the same result.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    img, mask = sample.image, sample.mask
    if flip:
        if rng.integers(2):
            img = img[:, :, ::-1]
            mask = mask[:, ::-1]
        if rng.integers(2):
            img = img[:, ::-1, :]
            mask = mask[::-1, :]
    if rot90:
        h, w = mask.shape
        k = int(rng.integers(4)) if h == w else int(rng.integers(2)) * 2
        if k:
            img = np.rot90(img, k=k, axes=(1, 2))
            mask = np.rot90(mask, k=k, axes=(0, 1))
    if intensity:
        img = img * rng.uniform(0.9, 1.1)
    return SegSample(np.ascontiguousarray(img), np.ascontiguousarray(mask),
                     sample.num_classes)


def load_dataset(directory) -> list[SegSample]:
    """Load img_NNNN.pgm / msk_NNNN.pgm pairs; class count from manifest.txt."""
    d = Path(directory)
    manifest = d / "manifest.txt"
    if not manifest.exists():
        raise ConfigError(f"{d}: missing manifest.txt")
    meta = {}
    for line in manifest.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    if "num_classes" not in meta:
        raise ConfigError(f"{manifest}: missing num_classes")
    num_classes = int(meta["num_classes"])
    samples = []
    for img_path in sorted(d.glob("img_*.pgm")):
        msk_path = d / img_path.name.replace("img_", "msk_")
        if not msk_path.exists():
            raise ConfigError(f"missing mask for {img_path.name}")
        samples.append(SegSample(read_image_pgm(img_path), read_mask_pgm(msk_path),
                                 num_classes))
    if not samples:
        raise ConfigError(f"{d}: no img_*.pgm files found")
    return samples
