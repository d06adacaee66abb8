"""Learnable layer modules wrapping the functional ops.

Weights use fan-in-scaled uniform init; all biases start at zero; norm
scales start at 1 and shifts at 0.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .module import Module, Parameter, uniform_fan_in
from .tensor import Tensor, default_dtype


def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, *, stride=1,
                 padding=0, groups=1, bias=True, rng: np.random.Generator):
        super().__init__()
        kh, kw = _pair(kernel_size)
        fan_in = (in_channels // groups) * kh * kw
        self.weight = uniform_fan_in(rng, (out_channels, in_channels // groups, kh, kw), fan_in)
        self.bias = Parameter(np.zeros(out_channels)) if bias else None
        self.stride = stride
        self.padding = padding
        self.groups = groups

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride,
                          padding=self.padding, groups=self.groups)


class ConvTranspose2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, *, stride=1,
                 padding=0, groups=1, bias=True, rng: np.random.Generator):
        super().__init__()
        kh, kw = _pair(kernel_size)
        fan_in = (in_channels // groups) * kh * kw
        self.weight = uniform_fan_in(rng, (in_channels, out_channels // groups, kh, kw), fan_in)
        self.bias = Parameter(np.zeros(out_channels)) if bias else None
        self.stride = stride
        self.padding = padding
        self.groups = groups

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv_transpose2d(x, self.weight, self.bias, stride=self.stride,
                                    padding=self.padding, groups=self.groups)


class LayerNorm2d(Module):
    """Channel-axis layer norm at each spatial position of an NCHW map."""

    def __init__(self, channels, eps: float = 1e-5):
        super().__init__()
        self.scale = Parameter(np.ones(channels))
        self.shift = Parameter(np.zeros(channels))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.scale, self.shift, eps=self.eps)


class BatchNorm2d(Module):
    def __init__(self, channels, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.scale = Parameter(np.ones(channels))
        self.shift = Parameter(np.zeros(channels))
        self.running_mean = Tensor(np.zeros(channels, dtype=default_dtype()))
        self.running_var = Tensor(np.ones(channels, dtype=default_dtype()))
        self.eps = eps
        self.momentum = momentum

    def forward(self, x: Tensor) -> Tensor:
        return ops.batch_norm(
            x, self.scale, self.shift,
            self.running_mean.data, self.running_var.data,
            training=self.training, momentum=self.momentum, eps=self.eps,
        )


class Linear(Module):
    def __init__(self, in_features, out_features, *, bias=True, rng: np.random.Generator):
        super().__init__()
        self.weight = uniform_fan_in(rng, (out_features, in_features), in_features)
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)
