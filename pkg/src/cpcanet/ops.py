"""Differentiable NCHW operations built on the tensor tape.

Each function validates shapes, computes the forward result with the raw
kernels, and registers an analytic backward closure.  FLOP accounting for
the cost ledger hooks in here; see the ``flops`` module for the convention.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from . import conv_kernels as ck
from . import flops
from .errors import ShapeError
from .tensor import Tensor, make_op

_SQRT2 = float(np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))

# ------------------------------------------------------------- FLOP hooks
def _count(kind: str, n: int):
    flops.add(kind, n)


def count_elementwise(kind: str, numel: int):
    """Public hook for composite layers that add elementwise passes."""
    flops.add(kind, numel)


# ------------------------------------------------------------ convolution
def _norm_padding(padding) -> tuple[int, int, int, int]:
    if isinstance(padding, int):
        return (padding, padding, padding, padding)
    if len(padding) == 2:
        return (padding[0], padding[0], padding[1], padding[1])
    if len(padding) == 4:
        return tuple(padding)
    raise ShapeError(f"padding must be int, (ph, pw) or 4-tuple, got {padding!r}")


def _norm_stride(stride) -> tuple[int, int]:
    if isinstance(stride, int):
        return (stride, stride)
    return tuple(stride)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride=1,
    padding=0,
    groups: int = 1,
) -> Tensor:
    """Grouped 2D cross-correlation.

    x: (N, Cin, H, W); weight: (Cout, Cin/groups, kh, kw); bias: (Cout,).
    """
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be rank 4, got shape {x.shape}")
    if weight.ndim != 4:
        raise ShapeError(f"conv2d weight must be rank 4, got shape {weight.shape}")
    n, cin, h, w = x.shape
    cout, cin_g, kh, kw = weight.shape
    if cin % groups or cout % groups:
        raise ShapeError(
            f"groups={groups} must divide in_channels={cin} and out_channels={cout}"
        )
    if cin_g != cin // groups:
        raise ShapeError(
            f"weight expects {cin_g} input channels per group, input has "
            f"{cin // groups} (in_channels={cin}, groups={groups})"
        )
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"bias must have shape ({cout},), got {bias.shape}")
    stride = _norm_stride(stride)
    pad = _norm_padding(padding)
    if h + pad[0] + pad[1] < kh or w + pad[2] + pad[3] < kw:
        raise ShapeError(
            f"kernel ({kh}x{kw}) larger than padded input "
            f"({h + pad[0] + pad[1]}x{w + pad[2] + pad[3]})"
        )

    wg = weight.data.reshape(groups, cout // groups, cin_g, kh, kw)
    out = ck.gather(x.data, wg, stride, pad)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    oh, ow = out.shape[2], out.shape[3]
    _count("conv", 2 * n * oh * ow * cout * cin_g * kh * kw
           + (n * oh * ow * cout if bias is not None else 0))

    inputs = (x, weight) if bias is None else (x, weight, bias)
    result = make_op(out, inputs, "conv2d")
    if result.requires_grad:
        xd = x.data

        def bw(g):
            if x.requires_grad:
                gx = ck.scatter(g, wg, stride, pad, (h, w))
                x._accumulate(gx)
            if weight.requires_grad:
                gw = ck.outer(g, xd, stride, pad, kh, kw, groups)
                weight._accumulate(gw.reshape(weight.shape))
            if bias is not None and bias.requires_grad:
                bias._accumulate(g.sum(axis=(0, 2, 3)))

        result._backward = bw
    return result


def conv_transpose2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride=1,
    padding=0,
    groups: int = 1,
) -> Tensor:
    """Transpose (gradient-of-conv) 2D convolution.

    x: (N, Cin, H, W); weight: (Cin, Cout/groups, kh, kw); bias: (Cout,).
    Output spatial size = (size - 1) * stride + k - 2 * padding.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError("conv_transpose2d expects rank-4 input and weight")
    n, cin, h, w = x.shape
    wcin, cout_g, kh, kw = weight.shape
    if wcin != cin:
        raise ShapeError(
            f"weight expects {wcin} input channels, input has {cin}"
        )
    if cin % groups:
        raise ShapeError(f"groups={groups} must divide in_channels={cin}")
    cout = cout_g * groups
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"bias must have shape ({cout},), got {bias.shape}")
    stride = _norm_stride(stride)
    pad = _norm_padding(padding)
    oh = (h - 1) * stride[0] + kh - pad[0] - pad[1]
    ow = (w - 1) * stride[1] + kw - pad[2] - pad[3]
    if oh < 1 or ow < 1:
        raise ShapeError("transpose conv output would be empty")

    wg = weight.data.reshape(groups, cin // groups, cout_g, kh, kw)
    out = ck.scatter(x.data, wg, stride, pad, (oh, ow))
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    _count("conv_transpose", 2 * n * h * w * cin * cout_g * kh * kw
           + (n * oh * ow * cout if bias is not None else 0))

    inputs = (x, weight) if bias is None else (x, weight, bias)
    result = make_op(out, inputs, "conv_transpose2d")
    if result.requires_grad:
        xd = x.data

        def bw(g):
            if x.requires_grad:
                gx = ck.gather(g, wg, stride, pad)
                x._accumulate(gx)
            if weight.requires_grad:
                gw = ck.outer(xd, g, stride, pad, kh, kw, groups)
                weight._accumulate(gw.reshape(weight.shape))
            if bias is not None and bias.requires_grad:
                bias._accumulate(g.sum(axis=(0, 2, 3)))

        result._backward = bw
    return result


def depthwise_strip_conv(x: Tensor, weight: Tensor) -> Tensor:
    """Per-channel 1D convolution along one spatial axis, same padding.

    weight: (C, 1, 1, k) horizontal or (C, 1, k, 1) vertical, k odd.
    """
    if weight.ndim != 4 or weight.shape[1] != 1:
        raise ShapeError(f"strip weight must be (C, 1, 1, k) or (C, 1, k, 1), got {weight.shape}")
    c, _, kh, kw = weight.shape
    if kh != 1 and kw != 1:
        raise ShapeError(f"strip kernel must be one-dimensional, got {kh}x{kw}")
    k = max(kh, kw)
    if k % 2 == 0:
        raise ShapeError(f"strip kernel size must be odd for same padding, got {k}")
    if x.shape[1] != c:
        raise ShapeError(f"input has {x.shape[1]} channels, weight has {c}")
    pad = ((kh - 1) // 2, (kw - 1) // 2)
    return conv2d(x, weight, stride=1, padding=pad, groups=c)


# ---------------------------------------------------------------- pooling
def global_pool(x: Tensor, mode: str = "avg") -> Tensor:
    """Reduce each channel over all H*W positions to (N, C, 1, 1)."""
    if x.ndim != 4:
        raise ShapeError(f"global_pool expects rank-4 input, got {x.shape}")
    n, c, h, w = x.shape
    _count("pool", n * c * h * w)
    if mode == "avg":
        out = make_op(x.data.mean(axis=(2, 3), keepdims=True), (x,), "global_avg_pool")
        if out.requires_grad:
            def bw(g):
                x._accumulate(np.broadcast_to(g / (h * w), x.shape).copy())
            out._backward = bw
        return out
    if mode == "max":
        flat = x.data.reshape(n, c, h * w)
        idx = np.argmax(flat, axis=2)  # first max in row-major order
        out = make_op(
            np.take_along_axis(flat, idx[:, :, None], axis=2).reshape(n, c, 1, 1),
            (x,),
            "global_max_pool",
        )
        if out.requires_grad:
            def bw(g):
                gx = np.zeros((n, c, h * w), dtype=g.dtype)
                np.put_along_axis(gx, idx[:, :, None], g.reshape(n, c, 1), axis=2)
                x._accumulate(gx.reshape(x.shape))
            out._backward = bw
        return out
    raise ValueError(f"unknown pool mode {mode!r}")


def channel_reduce(x: Tensor, mode: str) -> Tensor:
    """Reduce over the channel axis to (N, 1, H, W); mode 'avg' or 'max'."""
    n, c, h, w = x.shape
    _count("pool", n * c * h * w)
    if mode == "avg":
        out = make_op(x.data.mean(axis=1, keepdims=True), (x,), "channel_avg")
        if out.requires_grad:
            def bw(g):
                x._accumulate(np.broadcast_to(g / c, x.shape).copy())
            out._backward = bw
        return out
    if mode == "max":
        idx = np.argmax(x.data, axis=1)[:, None]  # first max on ties
        out = make_op(np.take_along_axis(x.data, idx, axis=1), (x,), "channel_max")
        if out.requires_grad:
            def bw(g):
                gx = np.zeros_like(x.data)
                np.put_along_axis(gx, idx, g, axis=1)
                x._accumulate(gx)
            out._backward = bw
        return out
    raise ValueError(f"unknown reduce mode {mode!r}")


# ------------------------------------------------------------ activations
def activation(x: Tensor, kind: str) -> Tensor:
    _count("activation", x.size)
    if kind == "relu":
        out = make_op(np.maximum(x.data, 0), (x,), "relu")
        if out.requires_grad:
            mask = x.data > 0
            out._backward = lambda g: x._accumulate(g * mask)
        return out
    if kind == "sigmoid":
        y = 1.0 / (1.0 + np.exp(-x.data))
        out = make_op(y, (x,), "sigmoid")
        if out.requires_grad:
            out._backward = lambda g: x._accumulate(g * y * (1.0 - y))
        return out
    if kind == "gelu":
        # exact Gaussian-CDF form: x * Phi(x)
        phi = 0.5 * (1.0 + erf(x.data / _SQRT2))
        out = make_op(x.data * phi, (x,), "gelu")
        if out.requires_grad:
            xd = x.data

            def bw(g):
                pdf = _INV_SQRT_2PI * np.exp(-0.5 * xd * xd)
                x._accumulate(g * (phi + xd * pdf))

            out._backward = bw
        return out
    raise ValueError(f"unknown activation {kind!r}")


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


def gelu(x: Tensor) -> Tensor:
    return activation(x, "gelu")


# ---------------------------------------------------------- normalization
def layer_norm(x: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the channel axis at each spatial position.

    x: (N, C, H, W); scale, shift: (C,).
    """
    if x.ndim != 4:
        raise ShapeError(f"layer_norm expects rank-4 input, got {x.shape}")
    c = x.shape[1]
    if c == 0:
        raise ShapeError("layer_norm over an empty channel axis")
    if scale.shape != (c,) or shift.shape != (c,):
        raise ShapeError(f"scale/shift must have shape ({c},)")
    _count("norm", x.size)
    mu = x.data.mean(axis=1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    gam = scale.data[None, :, None, None]
    out = make_op(xhat * gam + shift.data[None, :, None, None], (x, scale, shift), "layer_norm")
    if out.requires_grad:
        def bw(g):
            if x.requires_grad:
                gh = g * gam
                m1 = gh.mean(axis=1, keepdims=True)
                m2 = (gh * xhat).mean(axis=1, keepdims=True)
                x._accumulate(inv * (gh - m1 - xhat * m2))
            if scale.requires_grad:
                scale._accumulate((g * xhat).sum(axis=(0, 2, 3)))
            if shift.requires_grad:
                shift._accumulate(g.sum(axis=(0, 2, 3)))
        out._backward = bw
    return out


def batch_norm(
    x: Tensor,
    scale: Tensor,
    shift: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization over (N, H, W).

    In training mode batch statistics are used and the running buffers are
    updated in place; in eval mode the running statistics are used.
    """
    if x.ndim != 4:
        raise ShapeError(f"batch_norm expects rank-4 input, got {x.shape}")
    n, c, h, w = x.shape
    if n * h * w == 0:
        raise ShapeError("batch_norm over an empty reduction axis")
    _count("norm", x.size)
    gam = scale.data[None, :, None, None]
    if training:
        mu = x.data.mean(axis=(0, 2, 3))
        var = ((x.data - mu[None, :, None, None]) ** 2).mean(axis=(0, 2, 3))
        cnt = n * h * w
        unbiased = var * (cnt / (cnt - 1)) if cnt > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
        out = make_op(xhat * gam + shift.data[None, :, None, None], (x, scale, shift), "batch_norm")
        if out.requires_grad:
            def bw(g):
                if x.requires_grad:
                    gh = g * gam
                    m1 = gh.mean(axis=(0, 2, 3), keepdims=True)
                    m2 = (gh * xhat).mean(axis=(0, 2, 3), keepdims=True)
                    x._accumulate(inv[None, :, None, None] * (gh - m1 - xhat * m2))
                if scale.requires_grad:
                    scale._accumulate((g * xhat).sum(axis=(0, 2, 3)))
                if shift.requires_grad:
                    shift._accumulate(g.sum(axis=(0, 2, 3)))
            out._backward = bw
        return out

    inv = 1.0 / np.sqrt(running_var + eps)
    xhat = (x.data - running_mean[None, :, None, None]) * inv[None, :, None, None]
    out = make_op(xhat * gam + shift.data[None, :, None, None], (x, scale, shift), "batch_norm")
    if out.requires_grad:
        def bw(g):
            if x.requires_grad:
                x._accumulate(g * gam * inv[None, :, None, None])
            if scale.requires_grad:
                scale._accumulate((g * xhat).sum(axis=(0, 2, 3)))
            if shift.requires_grad:
                shift._accumulate(g.sum(axis=(0, 2, 3)))
        out._backward = bw
    return out


# ----------------------------------------------------------------- linear
def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map: x (N, Cin) @ weight (Cout, Cin)^T + bias."""
    if x.ndim != 2 or weight.ndim != 2:
        raise ShapeError(f"linear expects rank-2 input and weight, got {x.shape}, {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"inner dimensions disagree: input has {x.shape[1]} features, "
            f"weight expects {weight.shape[1]}"
        )
    out_d = x.data @ weight.data.T
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"bias must have shape ({weight.shape[0]},), got {bias.shape}")
        out_d = out_d + bias.data
    _count("linear", 2 * x.shape[0] * weight.shape[0] * weight.shape[1]
           + (x.shape[0] * weight.shape[0] if bias is not None else 0))
    inputs = (x, weight) if bias is None else (x, weight, bias)
    out = make_op(out_d, inputs, "linear")
    if out.requires_grad:
        def bw(g):
            if x.requires_grad:
                x._accumulate(g @ weight.data)
            if weight.requires_grad:
                weight._accumulate(g.T @ x.data)
            if bias is not None and bias.requires_grad:
                bias._accumulate(g.sum(axis=0))
        out._backward = bw
    return out


# ------------------------------------------------------------ shape utils
def concat(tensors: list[Tensor], axis: int) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = make_op(data, tuple(tensors), "concat")
    if out.requires_grad:
        sizes = [t.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]

        def bw(g):
            for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
                if t.requires_grad:
                    t._accumulate(piece)

        out._backward = bw
    return out


def log_softmax(x: Tensor, axis: int = 1) -> Tensor:
    """Numerically stabilized log-softmax along one axis."""
    m = x.data.max(axis=axis, keepdims=True)
    z = x.data - m
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    _count("softmax", x.size)
    out = make_op(z - lse, (x,), "log_softmax")
    if out.requires_grad:
        y = out.data

        def bw(g):
            x._accumulate(g - np.exp(y) * g.sum(axis=axis, keepdims=True))

        out._backward = bw
    return out


def softmax(x: Tensor, axis: int = 1) -> Tensor:
    return log_softmax(x, axis=axis).exp()
