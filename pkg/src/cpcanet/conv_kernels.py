"""Raw NumPy kernels shared by convolution, transpose convolution, and
their gradients.

All three entry points work on grouped NCHW data and reduce to batched
BLAS matmuls over an im2col layout:

* ``gather``  — correlation: out[n,d,x,y] = sum_{c,i,j} w[g,d,c,i,j] * xpad[n,c,x*s+i,y*s+j]
* ``scatter`` — its adjoint: the input is scattered through the kernel onto
  a (possibly larger) output grid; used for conv input-gradients and for
  transpose-conv forward.
* ``outer``   — the weight gradient of ``gather`` (and, with swapped
  arguments, of ``scatter``).

Weight layout conventions:
    gather:  (groups, dst_per_group, src_per_group, kh, kw)
    scatter: (groups, src_per_group, dst_per_group, kh, kw)

Padding is (top, bottom, left, right) zero padding.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided


def pad_nchw(x: np.ndarray, padding: tuple[int, int, int, int]) -> np.ndarray:
    pt, pb, pl, pr = padding
    if pt == pb == pl == pr == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))


def out_size(size: int, k: int, stride: int, pad0: int, pad1: int) -> int:
    return (size + pad0 + pad1 - k) // stride + 1


def _window_view(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    """Read-only strided view (N, C, OH, OW, kh, kw) over padded input."""
    n, c, hp, wp = xp.shape
    oh = (hp - kh) // sh + 1
    ow = (wp - kw) // sw + 1
    s0, s1, s2, s3 = xp.strides
    return as_strided(
        xp,
        shape=(n, c, oh, ow, kh, kw),
        strides=(s0, s1, s2 * sh, s3 * sw, s2, s3),
        writeable=False,
    )


def _columns(x: np.ndarray, groups: int, kh: int, kw: int, stride, padding):
    """(N, G, src*kh*kw, OH*OW) column matrix plus the output spatial size."""
    n = x.shape[0]
    src = x.shape[1] // groups
    xp = pad_nchw(x, padding)
    view = _window_view(xp, kh, kw, stride[0], stride[1])
    oh, ow = view.shape[2], view.shape[3]
    cols = view.transpose(0, 1, 4, 5, 2, 3).reshape(n, groups, src * kh * kw, oh * ow)
    return cols, oh, ow


def gather(
    x: np.ndarray,
    w: np.ndarray,
    stride: tuple[int, int],
    padding: tuple[int, int, int, int],
) -> np.ndarray:
    """Grouped cross-correlation. x: (N, G*src, H, W), w: (G, dst, src, kh, kw)."""
    g, dst, src, kh, kw = w.shape
    n = x.shape[0]
    cols, oh, ow = _columns(x, g, kh, kw, stride, padding)
    out = np.matmul(w.reshape(g, dst, src * kh * kw), cols)
    return np.ascontiguousarray(out.reshape(n, g * dst, oh, ow))


def scatter(
    x: np.ndarray,
    w: np.ndarray,
    stride: tuple[int, int],
    padding: tuple[int, int, int, int],
    out_hw: tuple[int, int],
) -> np.ndarray:
    """Adjoint of gather. x: (N, G*src, H, W), w: (G, src, dst, kh, kw)."""
    g, src, dst, kh, kw = w.shape
    n, _, h, wdt = x.shape
    sh, sw = stride
    pt, pb, pl, pr = padding
    oh, ow = out_hw
    xg = np.ascontiguousarray(x.reshape(n, g, src, h * wdt))
    wt = np.ascontiguousarray(w.transpose(0, 2, 1, 3, 4))  # (G, dst, src, kh, kw)
    full = np.zeros((n, g, dst, oh + pt + pb, ow + pl + pr), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            contrib = np.matmul(wt[:, :, :, i, j], xg).reshape(n, g, dst, h, wdt)
            full[:, :, :, i : i + sh * h : sh, j : j + sw * wdt : sw] += contrib
    out = full[:, :, :, pt : pt + oh, pl : pl + ow]
    return np.ascontiguousarray(out.reshape(n, g * dst, oh, ow))


def outer(
    gout: np.ndarray,
    x: np.ndarray,
    stride: tuple[int, int],
    padding: tuple[int, int, int, int],
    kh: int,
    kw: int,
    groups: int,
) -> np.ndarray:
    """Weight gradient of gather: (G, dst, src, kh, kw).

    gout: (N, G*dst, OH, OW) cotangent of the gather output.
    x:    (N, G*src, H, W) gather input (unpadded).
    """
    n = x.shape[0]
    oh, ow = gout.shape[2], gout.shape[3]
    cols, voh, vow = _columns(x, groups, kh, kw, stride, padding)
    if (voh, vow) != (oh, ow):
        # stride did not divide the padded size exactly; trailing windows
        # received no output
        cols = cols.reshape(n, groups, -1, voh, vow)[:, :, :, :oh, :ow]
        cols = cols.reshape(n, groups, -1, oh * ow)
    gg = gout.reshape(n, groups, gout.shape[1] // groups, oh * ow)
    gw = np.matmul(gg, cols.transpose(0, 1, 3, 2)).sum(axis=0)
    src = x.shape[1] // groups
    return gw.reshape(groups, gout.shape[1] // groups, src, kh, kw)
