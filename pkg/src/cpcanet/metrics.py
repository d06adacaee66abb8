"""Segmentation overlap and boundary-distance metrics.

DSC and IoU are percentages with the both-empty convention of 100.  HD95
is the 95th percentile (linear interpolation between order statistics) of
the combined set of directed boundary-to-boundary nearest-neighbour
distances in both directions; boundary pixels are foreground pixels with a
4-neighbourhood background neighbour (outside the image counts as
background).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeError


def _binary(mask: np.ndarray, class_id) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ShapeError(f"mask must be 2D, got shape {mask.shape}")
    if class_id is None:
        return mask.astype(bool)
    return mask == class_id


def dsc(pred: np.ndarray, gt: np.ndarray, class_id=None) -> float:
    """Dice similarity coefficient in percent: 100 * 2|P & G| / (|P| + |G|)."""
    p = _binary(pred, class_id)
    g = _binary(gt, class_id)
    if p.shape != g.shape:
        raise ShapeError(f"mask shapes differ: {p.shape} vs {g.shape}")
    psum = int(p.sum())
    gsum = int(g.sum())
    if psum + gsum == 0:
        return 100.0
    inter = int(np.logical_and(p, g).sum())
    return 100.0 * 2.0 * inter / (psum + gsum)


def iou(pred: np.ndarray, gt: np.ndarray, class_id=None) -> float:
    """Intersection over union in percent: 100 * |P & G| / |P | G|."""
    p = _binary(pred, class_id)
    g = _binary(gt, class_id)
    if p.shape != g.shape:
        raise ShapeError(f"mask shapes differ: {p.shape} vs {g.shape}")
    union = int(np.logical_or(p, g).sum())
    if union == 0:
        return 100.0
    inter = int(np.logical_and(p, g).sum())
    return 100.0 * inter / union


def boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """(M, 2) row/col indices of foreground pixels with a 4-neighbourhood
    background neighbour; image borders count as background."""
    m = mask.astype(bool)
    padded = np.pad(m, 1)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    edge = m & ~interior
    return np.argwhere(edge)


def percentile_linear(sorted_values: np.ndarray, q: float) -> float:
    """q-th percentile with linear interpolation between order statistics."""
    n = sorted_values.shape[0]
    if n == 0:
        raise ValueError("percentile of an empty set")
    pos = (q / 100.0) * (n - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    lo_v = float(sorted_values[lo])
    return lo_v + frac * (float(sorted_values[hi]) - lo_v)


def hd95(pred: np.ndarray, gt: np.ndarray, spacing=(1.0, 1.0), class_id=None) -> float:
    """95th-percentile symmetric boundary distance.

    Both masks empty returns 0; exactly one empty returns the image
    diagonal (in spacing units) as a bounded sentinel.
    """
    p = _binary(pred, class_id)
    g = _binary(gt, class_id)
    if p.shape != g.shape:
        raise ShapeError(f"mask shapes differ: {p.shape} vs {g.shape}")
    pb = boundary_pixels(p)
    gb = boundary_pixels(g)
    if pb.shape[0] == 0 and gb.shape[0] == 0:
        return 0.0
    if pb.shape[0] == 0 or gb.shape[0] == 0:
        h, w = p.shape
        return math.sqrt((h * spacing[0]) ** 2 + (w * spacing[1]) ** 2)
    s0, s1 = float(spacing[0]), float(spacing[1])
    dr = (pb[:, None, 0] - gb[None, :, 0]) * s0
    dc = (pb[:, None, 1] - gb[None, :, 1]) * s1
    sq = dr * dr + dc * dc
    d_pg = np.sqrt(sq.min(axis=1))
    d_gp = np.sqrt(sq.min(axis=0))
    combined = np.sort(np.concatenate([d_pg, d_gp]))
    return percentile_linear(combined, 95.0)
