"""Channel-prior convolutional attention and baseline attention blocks.

The channel stage gates each channel with a sigmoid of a shared two-layer
MLP applied to global average- and max-pooled descriptors.  The spatial
stage runs the channel-gated features through a depth-wise base convolution
and a bank of multi-scale depth-wise strip-pair branches (plus an identity
branch), sums the branches, and mixes channels with a 1x1 convolution.
Because the spatial stage is depth-wise, the resulting spatial map is a
full per-channel volume rather than a single map broadcast across channels
(the CBAM baseline below has the broadcast behaviour).
"""

from __future__ import annotations

import numpy as np

from . import ops
from .errors import ConfigError
from .module import Module, Parameter, uniform_fan_in
from .tensor import Tensor

VARIANTS = (
    "cpca_sequential",
    "cpca_parallel",
    "channel_only",
    "spatial_only",
    "cpca_no_mix",
    "cbam",
    "se",
)


class ChannelAttention(Module):
    """Per-channel sigmoid gate from pooled descriptors through a shared MLP.

    ``forward`` returns the (N, C, 1, 1) attention map, not the gated input.
    """

    def __init__(self, channels, reduction: int = 16, *, bias: bool = True,
                 use_max: bool = True, rng: np.random.Generator):
        super().__init__()
        if channels % reduction:
            raise ConfigError(
                f"reduction ratio {reduction} must divide channel count {channels}"
            )
        hidden = channels // reduction
        self.squeeze = uniform_fan_in(rng, (hidden, channels), channels)
        self.squeeze_bias = Parameter(np.zeros(hidden)) if bias else None
        self.excite = uniform_fan_in(rng, (channels, hidden), hidden)
        self.excite_bias = Parameter(np.zeros(channels)) if bias else None
        self.use_max = use_max

    def _mlp(self, d: Tensor) -> Tensor:
        h = ops.relu(ops.linear(d, self.squeeze, self.squeeze_bias))
        return ops.linear(h, self.excite, self.excite_bias)

    def forward(self, x: Tensor) -> Tensor:
        n, c = x.shape[0], x.shape[1]
        avg = ops.global_pool(x, "avg").reshape(n, c)
        z = self._mlp(avg)
        if self.use_max:
            z = z + self._mlp(ops.global_pool(x, "max").reshape(n, c))
        return ops.sigmoid(z).reshape(n, c, 1, 1)


class StripPair(Module):
    """Vertical k x 1 then horizontal 1 x k depth-wise strip convolutions."""

    def __init__(self, channels, kernel_size, *, rng: np.random.Generator):
        super().__init__()
        if kernel_size % 2 == 0:
            raise ConfigError(f"strip kernel size must be odd, got {kernel_size}")
        self.vertical = uniform_fan_in(rng, (channels, 1, kernel_size, 1), kernel_size)
        self.horizontal = uniform_fan_in(rng, (channels, 1, 1, kernel_size), kernel_size)

    def forward(self, x: Tensor) -> Tensor:
        return ops.depthwise_strip_conv(ops.depthwise_strip_conv(x, self.vertical),
                                        self.horizontal)


class SpatialAttention(Module):
    """Multi-scale depth-wise spatial attention map over all channels.

    ``forward`` returns the (N, C, H, W) map; its values are not passed
    through a sigmoid and may take either sign.
    """

    def __init__(self, channels, branch_kernels=(7, 11, 21), *, base_kernel: int = 5,
                 channel_mix: bool = True, rng: np.random.Generator):
        super().__init__()
        if base_kernel % 2 == 0:
            raise ConfigError(f"base kernel size must be odd, got {base_kernel}")
        self.channels = channels
        self.base = uniform_fan_in(
            rng, (channels, 1, base_kernel, base_kernel), base_kernel * base_kernel
        )
        self.base_pad = (base_kernel - 1) // 2
        self.branches = [StripPair(channels, k, rng=rng) for k in branch_kernels]
        self.mix = uniform_fan_in(rng, (channels, channels, 1, 1), channels) if channel_mix else None

    def forward(self, x: Tensor) -> Tensor:
        shared = ops.conv2d(x, self.base, padding=self.base_pad, groups=self.channels)
        total = shared  # identity branch
        for branch in self.branches:
            total = total + branch(shared)
        if self.mix is not None:
            total = ops.conv2d(total, self.mix)
        return total


class CPCA(Module):
    """Channel-prior convolutional attention over an NCHW feature map.

    Variants select which stages exist and how they compose:
    sequential gates channels first and computes the spatial map from the
    channel-gated features; parallel computes both maps from the raw input.
    """

    def __init__(self, channels, variant: str = "cpca_sequential", *,
                 reduction: int = 16, branch_kernels=(7, 11, 21),
                 mlp_bias: bool = True, rng: np.random.Generator):
        super().__init__()
        if variant not in ("cpca_sequential", "cpca_parallel", "channel_only",
                           "spatial_only", "cpca_no_mix"):
            raise ConfigError(f"unknown attention variant {variant!r}")
        self.variant = variant
        self.channel = None
        self.spatial = None
        if variant != "spatial_only":
            self.channel = ChannelAttention(channels, reduction, bias=mlp_bias, rng=rng)
        if variant != "channel_only":
            self.spatial = SpatialAttention(
                channels, branch_kernels,
                channel_mix=(variant != "cpca_no_mix"), rng=rng,
            )

    def forward(self, x: Tensor) -> Tensor:
        if self.variant == "channel_only":
            return self.channel(x) * x
        if self.variant == "spatial_only":
            return self.spatial(x) * x
        if self.variant == "cpca_parallel":
            return self.channel(x) * (self.spatial(x) * x)
        gated = self.channel(x) * x
        return self.spatial(gated) * gated


class CBAM(Module):
    """Sequential channel then single-map spatial attention baseline.

    The spatial map is computed by compressing channels (per-position
    average and maximum), so the same spatial weights apply to every
    channel of the output.
    """

    def __init__(self, channels, reduction: int = 16, *, spatial_kernel: int = 7,
                 mlp_bias: bool = True, rng: np.random.Generator):
        super().__init__()
        if spatial_kernel % 2 == 0:
            raise ConfigError(f"spatial kernel size must be odd, got {spatial_kernel}")
        self.channel = ChannelAttention(channels, reduction, bias=mlp_bias, rng=rng)
        self.spatial_weight = uniform_fan_in(
            rng, (1, 2, spatial_kernel, spatial_kernel), 2 * spatial_kernel * spatial_kernel
        )
        self.spatial_pad = (spatial_kernel - 1) // 2

    def spatial_map(self, gated: Tensor) -> Tensor:
        stats = ops.concat([channel_reduce_avg(gated), channel_reduce_max(gated)], axis=1)
        return ops.sigmoid(ops.conv2d(stats, self.spatial_weight, padding=self.spatial_pad))

    def forward(self, x: Tensor) -> Tensor:
        gated = self.channel(x) * x
        return self.spatial_map(gated) * gated


def channel_reduce_avg(x: Tensor) -> Tensor:
    return ops.channel_reduce(x, "avg")


def channel_reduce_max(x: Tensor) -> Tensor:
    return ops.channel_reduce(x, "max")


class SE(Module):
    """Squeeze-and-excitation: channel gate from the average-pool path only."""

    def __init__(self, channels, reduction: int = 16, *, mlp_bias: bool = True,
                 rng: np.random.Generator):
        super().__init__()
        self.channel = ChannelAttention(channels, reduction, bias=mlp_bias,
                                        use_max=False, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.channel(x) * x


def build_attention(variant: str, channels, *, reduction: int = 16,
                    branch_kernels=(7, 11, 21), rng: np.random.Generator) -> Module:
    """Factory for the attention block used inside network blocks."""
    if variant == "cbam":
        return CBAM(channels, reduction, rng=rng)
    if variant == "se":
        return SE(channels, reduction, rng=rng)
    if variant in VARIANTS:
        return CPCA(channels, variant, reduction=reduction,
                    branch_kernels=branch_kernels, rng=rng)
    raise ConfigError(f"unknown attention variant {variant!r}; expected one of {VARIANTS}")
