"""Deterministic synthetic segmentation datasets.

Images are piecewise-constant class intensities plus optional Gaussian
noise, clipped to [0, 1]; masks are exact.  The ring family produces
topologically nested annuli (each foreground class enclosed by the
previous one), the disks family scattered filled circles, and the strips
family parallel bands.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import SegSample
from .errors import ConfigError
from .pgm import write_image_pgm, write_mask_pgm

FAMILIES = ("disks", "rings", "strips")


@dataclass
class SynthSpec:
    num_samples: int = 8
    image_size: int = 64
    num_classes: int = 4
    family: str = "rings"
    noise_sigma: float = 0.02
    seed: int = 0

    def validate(self) -> "SynthSpec":
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown shape family {self.family!r}; expected one of {FAMILIES}")
        if self.num_samples < 1:
            raise ConfigError("num_samples must be >= 1")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.image_size < 16:
            raise ConfigError("image_size must be >= 16")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        return self


def class_intensity(class_id: int, num_classes: int) -> float:
    """Distinct gray level per class; background (class 0) included."""
    return (class_id + 1) / (num_classes + 1)


def _ring_mask(size: int, num_classes: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    jitter = size / 10
    cy = size / 2 + rng.uniform(-jitter, jitter)
    cx = size / 2 + rng.uniform(-jitter, jitter)
    dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    n_fg = num_classes - 1
    outer = rng.uniform(0.3, 0.42) * size
    radii = [outer * (n_fg - i) / n_fg for i in range(n_fg + 1)]  # descending, last 0
    mask = np.zeros((size, size), dtype=np.int64)
    for k in range(1, n_fg + 1):
        mask[dist <= radii[k - 1]] = k
    return mask


def _disk_mask(size: int, num_classes: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    mask = np.zeros((size, size), dtype=np.int64)
    for k in range(1, num_classes):
        r = rng.uniform(0.1, 0.2) * size
        cy = rng.uniform(r, size - r)
        cx = rng.uniform(r, size - r)
        mask[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = k
    return mask


def _strip_mask(size: int, num_classes: int, rng: np.random.Generator) -> np.ndarray:
    horizontal = bool(rng.integers(2))
    n_bands = int(rng.integers(num_classes, 2 * num_classes))
    edges = np.sort(rng.choice(np.arange(1, size), size=n_bands - 1, replace=False))
    bounds = [0, *edges.tolist(), size]
    mask = np.zeros((size, size), dtype=np.int64)
    for i in range(n_bands):
        k = i % num_classes
        if horizontal:
            mask[bounds[i]:bounds[i + 1], :] = k
        else:
            mask[:, bounds[i]:bounds[i + 1]] = k
    return mask


def synth_dataset(spec: SynthSpec) -> list[SegSample]:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    makers = {"disks": _disk_mask, "rings": _ring_mask, "strips": _strip_mask}
    make = makers[spec.family]
    samples = []
    for _ in range(spec.num_samples):
        mask = make(spec.image_size, spec.num_classes, rng)
        image = np.empty((spec.image_size, spec.image_size), dtype=np.float64)
        for k in range(spec.num_classes):
            image[mask == k] = class_intensity(k, spec.num_classes)
        if spec.noise_sigma > 0:
            image = image + rng.normal(0.0, spec.noise_sigma, image.shape)
            image = np.clip(image, 0.0, 1.0)
        samples.append(SegSample(image[None], mask, spec.num_classes))
    return samples


def manifest_text(spec: SynthSpec) -> str:
    return (
        f"num_samples = {spec.num_samples}\n"
        f"image_size = {spec.image_size}\n"
        f"num_classes = {spec.num_classes}\n"
        f"family = {spec.family}\n"
        f"noise_sigma = {spec.noise_sigma!r}\n"
        f"seed = {spec.seed}\n"
    )


def write_dataset(spec: SynthSpec, directory) -> list[SegSample]:
    """Generate and write img_NNNN.pgm / msk_NNNN.pgm plus manifest.txt."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    samples = synth_dataset(spec)
    for i, s in enumerate(samples):
        write_image_pgm(d / f"img_{i:04d}.pgm", s.image)
        write_mask_pgm(s.mask, d / f"msk_{i:04d}.pgm")
    tmp = d / "manifest.txt.tmp"
    tmp.write_text(manifest_text(spec))
    tmp.replace(d / "manifest.txt")
    return samples
