"""Encoder-decoder segmentation network built around the attention blocks.

Layout: a convolution stem downsamples by the factor M (log2(M) blocks of
stride-2 + stride-1 convs, each conv followed by GELU and channel layer
norm), a four-stage pyramid encoder of attention blocks with stride-2
downsampling between stages, a three-stage plain-conv decoder with
transpose-conv upsampling and additive skip connections, a de-convolution
stem ((log2(M) - 2) upsampling blocks plus one stride-4 transpose conv),
and a 1x1 classifier head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import flops, ops
from .attention import build_attention
from .errors import ConfigError, ShapeError
from .layers import BatchNorm2d, Conv2d, ConvTranspose2d, LayerNorm2d
from .module import Module, Parameter
from .tensor import Tensor, no_grad, zeros


@dataclass
class NetworkConfig:
    embed_dim: int = 96
    m: int = 4
    stage_depths: tuple = (2, 2, 2, 2)
    stage_widths: tuple = (96, 192, 384, 768)
    decoder_blocks: tuple = (2, 2, 1)
    num_classes: int = 2
    branch_kernels: tuple = (7, 11, 21)
    reduction: int = 16
    in_channels: int = 1
    conv_block_bn_first: bool = False

    def validate(self) -> "NetworkConfig":
        m = self.m
        if m < 4 or (m & (m - 1)) != 0:
            raise ConfigError(f"downsampling factor m must be a power of two >= 4, got {m}")
        if len(self.stage_depths) != 4 or len(self.stage_widths) != 4:
            raise ConfigError("stage_depths and stage_widths must have 4 entries")
        if len(self.decoder_blocks) != 3:
            raise ConfigError("decoder_blocks must have 3 entries")
        if self.stage_widths[0] != self.embed_dim:
            raise ConfigError(
                f"stage_widths[0] ({self.stage_widths[0]}) must equal embed_dim ({self.embed_dim})"
            )
        for w in self.stage_widths:
            if w % self.reduction:
                raise ConfigError(
                    f"stage width {w} must be divisible by reduction ratio {self.reduction}"
                )
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.in_channels < 1:
            raise ConfigError(f"in_channels must be >= 1, got {self.in_channels}")
        for d in (*self.stage_depths, *self.decoder_blocks):
            if d < 1:
                raise ConfigError("block counts must be >= 1")
        return self

    @property
    def spatial_divisor(self) -> int:
        """Input H and W must be divisible by this (stem + 3 downsamples)."""
        return self.m * 8


class StemBlock(Module):
    """Stride-2 conv then stride-1 conv, each followed by GELU and LN."""

    def __init__(self, in_ch, out_ch, *, rng):
        super().__init__()
        self.down = Conv2d(in_ch, out_ch, 3, stride=2, padding=1, rng=rng)
        self.norm1 = LayerNorm2d(out_ch)
        self.conv = Conv2d(out_ch, out_ch, 3, stride=1, padding=1, rng=rng)
        self.norm2 = LayerNorm2d(out_ch)

    def forward(self, x):
        x = self.norm1(ops.gelu(self.down(x)))
        return self.norm2(ops.gelu(self.conv(x)))


class ConvStem(Module):
    """log2(M) stem blocks taking the input to embed_dim at 1/M resolution."""

    def __init__(self, in_ch, embed_dim, m, *, rng):
        super().__init__()
        n = int(math.log2(m))
        widths = [embed_dim >> (n - 1 - i) for i in range(n)]
        chans = [in_ch] + widths
        self.blocks = [StemBlock(chans[i], chans[i + 1], rng=rng) for i in range(n)]

    def forward(self, x):
        for b in self.blocks:
            x = b(x)
        return x


class DeConvStemBlock(Module):
    """Stride-2 transpose conv then stride-1 conv, each with GELU and LN."""

    def __init__(self, in_ch, out_ch, *, rng):
        super().__init__()
        self.up = ConvTranspose2d(in_ch, out_ch, 2, stride=2, rng=rng)
        self.norm1 = LayerNorm2d(out_ch)
        self.conv = Conv2d(out_ch, out_ch, 3, stride=1, padding=1, rng=rng)
        self.norm2 = LayerNorm2d(out_ch)

    def forward(self, x):
        x = self.norm1(ops.gelu(self.up(x)))
        return self.norm2(ops.gelu(self.conv(x)))


class DeConvStem(Module):
    """(log2(M) - 2) upsampling blocks plus one stride-4 transpose conv."""

    def __init__(self, embed_dim, m, *, rng):
        super().__init__()
        n = int(math.log2(m)) - 2
        self.blocks = []
        ch = embed_dim
        for _ in range(n):
            self.blocks.append(DeConvStemBlock(ch, ch // 2, rng=rng))
            ch //= 2
        self.out_channels = max(ch // 2, 1)
        self.final_up = ConvTranspose2d(ch, self.out_channels, 4, stride=4, rng=rng)
        self.final_norm = LayerNorm2d(self.out_channels)

    def forward(self, x):
        for b in self.blocks:
            x = b(x)
        return self.final_norm(ops.gelu(self.final_up(x)))


class FeedForward(Module):
    """1x1 expansion by 4, GELU, 1x1 projection."""

    def __init__(self, channels, *, rng):
        super().__init__()
        hidden = channels * 4
        self.expand = Conv2d(channels, hidden, 1, rng=rng)
        self.project = Conv2d(hidden, channels, 1, rng=rng)

    def forward(self, x):
        return self.project(ops.gelu(self.expand(x)))


class AttentionBlock(Module):
    """Pre-norm residual block: attention sub-layer then feed-forward
    sub-layer, each scaled by a small per-channel factor so residual paths
    start near identity."""

    def __init__(self, channels, variant, *, reduction, branch_kernels, rng,
                 residual_scale_init: float = 0.1):
        super().__init__()
        self.norm1 = LayerNorm2d(channels)
        self.attn = build_attention(variant, channels, reduction=reduction,
                                    branch_kernels=branch_kernels, rng=rng)
        self.scale1 = Parameter(np.full(channels, residual_scale_init))
        self.norm2 = LayerNorm2d(channels)
        self.ffn = FeedForward(channels, rng=rng)
        self.scale2 = Parameter(np.full(channels, residual_scale_init))
        self._c = channels

    def forward(self, x):
        c = self._c
        x = x + self.scale1.reshape(1, c, 1, 1) * self.attn(self.norm1(x))
        return x + self.scale2.reshape(1, c, 1, 1) * self.ffn(self.norm2(x))


class ConvBlock(Module):
    """3x3 conv, ReLU, BatchNorm (flag restores the conv-BN-ReLU order)."""

    def __init__(self, in_ch, out_ch, *, bn_first: bool = False, rng):
        super().__init__()
        self.conv = Conv2d(in_ch, out_ch, 3, padding=1, rng=rng)
        self.norm = BatchNorm2d(out_ch)
        self.bn_first = bn_first

    def forward(self, x):
        x = self.conv(x)
        if self.bn_first:
            return ops.relu(self.norm(x))
        return self.norm(ops.relu(x))


class EncoderStage(Module):
    def __init__(self, blocks):
        super().__init__()
        self.blocks = blocks

    def forward(self, x):
        for b in self.blocks:
            x = b(x)
        return x


class Downsample(Module):
    """Stride-2 3x3 conv plus LN between encoder stages."""

    def __init__(self, in_ch, out_ch, *, rng):
        super().__init__()
        self.conv = Conv2d(in_ch, out_ch, 3, stride=2, padding=1, rng=rng)
        self.norm = LayerNorm2d(out_ch)

    def forward(self, x):
        return self.norm(self.conv(x))


class DecoderStage(Module):
    """Transpose-conv upsample, additive projected skip, then conv blocks."""

    def __init__(self, in_ch, out_ch, num_blocks, *, bn_first, rng):
        super().__init__()
        self.up = ConvTranspose2d(in_ch, out_ch, 2, stride=2, rng=rng)
        self.skip_proj = Conv2d(out_ch, out_ch, 1, rng=rng)
        self.blocks = [ConvBlock(out_ch, out_ch, bn_first=bn_first, rng=rng)
                       for _ in range(num_blocks)]

    def forward(self, x, skip):
        x = self.up(x) + self.skip_proj(skip)
        for b in self.blocks:
            x = b(x)
        return x


class CPCANet(Module):
    def __init__(self, cfg: NetworkConfig, variant: str = "cpca_sequential", *,
                 seed: int = 0):
        super().__init__()
        cfg.validate()
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.variant = variant
        w = cfg.stage_widths
        self.stem = ConvStem(cfg.in_channels, cfg.embed_dim, cfg.m, rng=rng)
        self.stages = [
            EncoderStage([
                AttentionBlock(w[i], variant, reduction=cfg.reduction,
                               branch_kernels=cfg.branch_kernels, rng=rng)
                for _ in range(cfg.stage_depths[i])
            ])
            for i in range(4)
        ]
        self.downs = [Downsample(w[i], w[i + 1], rng=rng) for i in range(3)]
        self.decoder = [
            DecoderStage(w[3 - k], w[2 - k], cfg.decoder_blocks[k],
                         bn_first=cfg.conv_block_bn_first, rng=rng)
            for k in range(3)
        ]
        self.deconv_stem = DeConvStem(cfg.embed_dim, cfg.m, rng=rng)
        self.head = Conv2d(self.deconv_stem.out_channels, cfg.num_classes, 1, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4:
            raise ShapeError(f"expected NCHW input, got shape {x.shape}")
        div = self.cfg.spatial_divisor
        n, c, h, w = x.shape
        if c != self.cfg.in_channels:
            raise ShapeError(f"expected {self.cfg.in_channels} input channels, got {c}")
        if h % div or w % div:
            raise ShapeError(
                f"input spatial size {h}x{w} must be divisible by {div} "
                f"(m * 8); pad the image before calling forward"
            )
        feats = []
        x = self.stem(x)
        for i in range(4):
            x = self.stages[i](x)
            feats.append(x)
            if i < 3:
                x = self.downs[i](x)
        for k, stage in enumerate(self.decoder):
            x = stage(x, feats[2 - k])
        x = self.deconv_stem(x)
        return self.head(x)


def build_network(cfg: NetworkConfig, variant: str = "cpca_sequential", *,
                  seed: int = 0) -> CPCANet:
    return CPCANet(cfg, variant, seed=seed)


def count_params(module: Module) -> int:
    """Exact number of learnable scalars."""
    return sum(p.size for _, p in module.named_parameters())


@dataclass
class LedgerRow:
    name: str
    kind: str
    params: int = 0
    flops: int = 0


@dataclass
class CostReport:
    input_shape: tuple
    total_params: int
    total_flops: int
    rows: list = field(default_factory=list)
    convention: str = flops.CONVENTION

    def to_text(self) -> str:
        name_w = max([len(r.name) for r in self.rows] + [len("layer")])
        kind_w = max([len(r.kind) for r in self.rows] + [len("kind")])
        lines = [
            f"input shape: {self.input_shape}",
            f"convention: {self.convention}",
            f"{'layer':<{name_w}}  {'kind':<{kind_w}}  {'params':>12}  {'flops':>16}",
        ]
        for r in self.rows:
            lines.append(f"{r.name:<{name_w}}  {r.kind:<{kind_w}}  {r.params:>12}  {r.flops:>16}")
        lines.append(f"{'total':<{name_w}}  {'':<{kind_w}}  {self.total_params:>12}  {self.total_flops:>16}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = ["layer,kind,params,flops"]
        for r in self.rows:
            lines.append(f"{r.name},{r.kind},{r.params},{r.flops}")
        lines.append(f"total,,{self.total_params},{self.total_flops}")
        return "\n".join(lines) + "\n"


def count_flops(model: Module, input_shape: tuple) -> CostReport:
    """Analytic cost of one eval-mode forward pass, with per-layer rows.

    The count is shape-driven and deterministic; running statistics and
    mode flags are restored afterwards.
    """
    model.assign_qualnames()
    was_training = model.training
    saved_buffers = [(b, b.data.copy()) for _, b in model.named_buffers()]
    model.eval()
    counter = flops.FlopCounter()
    x = zeros(*input_shape)
    with no_grad(), flops.flops_scope(counter):
        model(x)
    model.train(was_training)
    for buf, data in saved_buffers:
        buf.data[...] = data

    per_scope_flops: dict[str, int] = {}
    per_scope_kind: dict[str, str] = {}
    for scope, kind, n in counter.records:
        per_scope_flops[scope] = per_scope_flops.get(scope, 0) + n
        per_scope_kind.setdefault(scope, kind)

    module_kind = {name: type(m).__name__ for name, m in model.named_modules()}
    per_scope_params: dict[str, int] = {}
    for pname, p in model.named_parameters():
        owner = pname.rsplit(".", 1)[0] if "." in pname else ""
        per_scope_params[owner] = per_scope_params.get(owner, 0) + p.size

    names = sorted(set(per_scope_flops) | set(per_scope_params))
    rows = [
        LedgerRow(
            name=name or "(root)",
            kind=module_kind.get(name, per_scope_kind.get(name, "")),
            params=per_scope_params.get(name, 0),
            flops=per_scope_flops.get(name, 0),
        )
        for name in names
    ]
    return CostReport(
        input_shape=tuple(input_shape),
        total_params=count_params(model),
        total_flops=counter.total,
        rows=rows,
    )
