"""Central finite-difference gradient verification.

Relative error per element is |analytic - numeric| / max(|analytic|,
|numeric|, 1e-8); a check passes when the maximum over all elements of all
inputs stays below the tolerance.  Run at float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, no_grad


@dataclass
class GradCheckReport:
    name: str
    tol: float
    max_rel_error: float = 0.0
    per_input: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def numerical_gradient(fn, inputs: list[Tensor], index: int, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar fn w.r.t. inputs[index], elementwise."""
    x = inputs[index]
    grad = np.zeros_like(x.data)
    gflat = grad.reshape(-1)
    with no_grad():
        for i in range(x.data.size):
            pos = np.unravel_index(i, x.data.shape)
            old = x.data[pos]
            x.data[pos] = old + h
            hi = float(fn(*inputs).data)
            x.data[pos] = old - h
            lo = float(fn(*inputs).data)
            x.data[pos] = old
            gflat[i] = (hi - lo) / (2.0 * h)
    return grad


def grad_check(fn, inputs: list[Tensor], h: float = 1e-5, tol: float = 1e-4,
               name: str = "") -> GradCheckReport:
    """Compare analytic gradients of scalar-valued fn against central
    finite differences; returns the max relative error per input."""
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    loss = fn(*inputs)
    loss.backward()
    report = GradCheckReport(name=name or getattr(fn, "__name__", "fn"), tol=tol)
    for i, t in enumerate(inputs):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numerical_gradient(fn, inputs, i, h=h)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        err = float(np.max(np.abs(analytic - numeric) / denom)) if t.size else 0.0
        report.per_input.append(err)
        report.max_rel_error = max(report.max_rel_error, err)
    return report


class _WeightedSum:
    """Fixed random cotangent turning a tensor output into a scalar loss,
    so gradient checks exercise non-constant output gradients."""

    def __init__(self, seed: int):
        self._rng = np.random.default_rng(seed)
        self._w = None

    def __call__(self, out: Tensor) -> Tensor:
        if self._w is None:
            self._w = Tensor(self._rng.standard_normal(out.shape))
        return (out * self._w).sum()


def default_suite(seed: int = 0):
    """(name, fn, inputs) cases covering every differentiable op plus the
    attention blocks end to end.  Intended to run at float64."""
    from . import ops
    from .attention import CBAM, CPCA, SE, ChannelAttention, SpatialAttention
    from .losses import cross_entropy_loss, dice_loss

    rng = np.random.default_rng(seed)

    def t(*shape, scale=1.0):
        return Tensor(scale * rng.standard_normal(shape))

    cases = []

    def add(name, fn, inputs):
        cases.append((name, fn, inputs))

    for kind in ("relu", "sigmoid", "gelu"):
        ws = _WeightedSum(seed + 1)
        add(kind, lambda x, k=kind, w=ws: w(ops.activation(x, k)), [t(3, 5)])

    ws = _WeightedSum(seed + 2)
    add("exp_log", lambda x, w=ws: w((x.exp() + 1.0).log()), [t(4, 4)])

    ws = _WeightedSum(seed + 3)
    add("elementwise_broadcast",
        lambda a, b, w=ws: w(a * b + a - b * 0.5), [t(2, 3, 1, 1), t(2, 3, 4, 5)])

    ws = _WeightedSum(seed + 4)
    add("linear", lambda x, wt, b, w=ws: w(ops.linear(x, wt, b)),
        [t(3, 5), t(4, 5), t(4)])

    ws = _WeightedSum(seed + 5)
    add("conv2d_3x3", lambda x, wt, b, w=ws: w(ops.conv2d(x, wt, b, stride=1, padding=1)),
        [t(2, 3, 5, 5), t(4, 3, 3, 3), t(4)])

    ws = _WeightedSum(seed + 6)
    add("conv2d_strided_grouped",
        lambda x, wt, w=ws: w(ops.conv2d(x, wt, stride=2, padding=1, groups=2)),
        [t(1, 4, 6, 6), t(6, 2, 3, 3)])

    ws = _WeightedSum(seed + 7)
    add("depthwise_strip_pair",
        lambda x, v, hz, w=ws: w(ops.depthwise_strip_conv(
            ops.depthwise_strip_conv(x, v), hz)),
        [t(1, 3, 6, 6), t(3, 1, 7, 1), t(3, 1, 1, 7)])

    ws = _WeightedSum(seed + 8)
    add("conv_transpose_s2",
        lambda x, wt, b, w=ws: w(ops.conv_transpose2d(x, wt, b, stride=2, padding=1)),
        [t(1, 3, 4, 4), t(3, 2, 4, 4), t(2)])

    ws = _WeightedSum(seed + 9)
    add("conv_transpose_s4",
        lambda x, wt, w=ws: w(ops.conv_transpose2d(x, wt, stride=4)),
        [t(1, 2, 3, 3), t(2, 2, 4, 4)])

    for mode in ("avg", "max"):
        ws = _WeightedSum(seed + 10)
        add(f"global_{mode}_pool",
            lambda x, m=mode, w=ws: w(ops.global_pool(x, m)), [t(2, 3, 4, 4, scale=3.0)])
        ws = _WeightedSum(seed + 11)
        add(f"channel_{mode}",
            lambda x, m=mode, w=ws: w(ops.channel_reduce(x, m)), [t(2, 4, 3, 3, scale=3.0)])

    ws = _WeightedSum(seed + 12)
    add("concat", lambda a, b, w=ws: w(ops.concat([a, b], axis=1)),
        [t(2, 2, 3, 3), t(2, 3, 3, 3)])

    ws = _WeightedSum(seed + 13)
    add("layer_norm", lambda x, s, b, w=ws: w(ops.layer_norm(x, s, b)),
        [t(1, 4, 2, 2), t(4), t(4)])

    rm, rv = np.zeros(4), np.ones(4)
    ws = _WeightedSum(seed + 14)
    add("batch_norm",
        lambda x, s, b, w=ws: w(ops.batch_norm(x, s, b, rm.copy(), rv.copy(), True)),
        [t(2, 4, 3, 3), t(4), t(4)])

    ws = _WeightedSum(seed + 15)
    add("log_softmax", lambda x, w=ws: w(ops.log_softmax(x, axis=1)), [t(2, 5)])

    mask = rng.integers(0, 3, size=(1, 4, 4))
    add("dice_loss", lambda lg: dice_loss(lg, mask), [t(1, 3, 4, 4)])
    add("cross_entropy_loss", lambda lg: cross_entropy_loss(lg, mask), [t(1, 3, 4, 4)])

    def module_case(name, mod, x, ws_seed):
        ws = _WeightedSum(ws_seed)
        params = [p for _, p in mod.named_parameters()]
        add(name, lambda *_ts, m=mod, xi=x, w=ws: w(m(xi)), [x, *params])

    module_case("channel_attention",
                ChannelAttention(8, 4, rng=np.random.default_rng(seed + 20)),
                t(2, 8, 4, 4), seed + 16)
    module_case("spatial_attention",
                SpatialAttention(8, rng=np.random.default_rng(seed + 21)),
                t(1, 8, 8, 8), seed + 17)
    module_case("cbam",
                CBAM(8, 4, rng=np.random.default_rng(seed + 22)),
                t(1, 8, 5, 5, scale=3.0), seed + 18)
    module_case("se",
                SE(8, 4, rng=np.random.default_rng(seed + 23)),
                t(1, 8, 4, 4), seed + 19)
    module_case("cpca_block",
                CPCA(8, "cpca_sequential", reduction=4,
                     rng=np.random.default_rng(seed + 24)),
                t(1, 8, 8, 8), seed + 25)
    return cases


def run_suite(h: float = 1e-5, tol: float = 1e-4, seed: int = 0) -> list[GradCheckReport]:
    return [grad_check(fn, inputs, h=h, tol=tol, name=name)
            for name, fn, inputs in default_suite(seed)]
