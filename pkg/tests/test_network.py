"""Network assembly, stem block-count rules, parameter and FLOP accounting."""

import numpy as np
import pytest

from cpcanet import flops as flops_mod
from cpcanet import ops
from cpcanet.errors import ConfigError, ShapeError
from cpcanet.layers import Conv2d, Linear
from cpcanet.losses import LossWeights, combined_loss
from cpcanet.network import NetworkConfig, build_network, count_flops, count_params
from cpcanet.tensor import Tensor, no_grad, set_default_dtype, tensor


def tiny_cfg(**kw):
    base = dict(embed_dim=16, stage_widths=(16, 32, 64, 128), stage_depths=(1, 1, 1, 1),
                m=4, num_classes=2, in_channels=1, reduction=4)
    base.update(kw)
    return NetworkConfig(**base)


class TestStemBlockCounts:
    def test_m4_two_stem_blocks_zero_deconv_blocks(self):
        net = build_network(tiny_cfg(), seed=0)
        assert len(net.stem.blocks) == 2
        assert len(net.deconv_stem.blocks) == 0
        assert net.deconv_stem.final_up.stride == 4

    def test_m8_three_stem_blocks_one_deconv_block(self):
        net = build_network(tiny_cfg(m=8), seed=0)
        assert len(net.stem.blocks) == 3
        assert len(net.deconv_stem.blocks) == 1
        assert net.deconv_stem.final_up.stride == 4


class TestShapes:
    def test_tiny_config_logits_shape(self, rng):
        net = build_network(tiny_cfg(), seed=1)
        x = tensor(rng.standard_normal((2, 1, 64, 64)))
        with no_grad():
            logits = net(x)
        assert logits.shape == (2, 2, 64, 64)

    def test_default_config_224(self):
        set_default_dtype("f32")
        cfg = NetworkConfig(num_classes=4, in_channels=1)
        net = build_network(cfg, seed=0)
        x = Tensor(np.zeros((1, 1, 224, 224), dtype=np.float32))
        with no_grad():
            logits = net(x)
        assert logits.shape == (1, 4, 224, 224)

    def test_m8_512(self):
        set_default_dtype("f32")
        cfg = tiny_cfg(embed_dim=32, stage_widths=(32, 64, 128, 256), m=8,
                       num_classes=3, in_channels=3)
        net = build_network(cfg, seed=0)
        x = Tensor(np.zeros((1, 3, 512, 512), dtype=np.float32))
        with no_grad():
            logits = net(x)
        assert logits.shape == (1, 3, 512, 512)

    def test_indivisible_input_instructs_padding(self, rng):
        net = build_network(tiny_cfg(), seed=0)
        with pytest.raises(ShapeError, match="pad"):
            net(tensor(rng.standard_normal((1, 1, 60, 64))))

    def test_eval_forward_deterministic_bitwise(self, rng):
        net = build_network(tiny_cfg(), seed=2).eval()
        x = tensor(rng.standard_normal((1, 1, 64, 64)))
        with no_grad():
            a = net(x).data.copy()
            b = net(x).data.copy()
        assert np.array_equal(a, b)

    def test_train_mode_updates_bn_stats_eval_does_not(self, rng):
        net = build_network(tiny_cfg(), seed=2)
        x = tensor(rng.standard_normal((2, 1, 64, 64)))
        before = {n: b.data.copy() for n, b in net.named_buffers()}
        with no_grad():
            net.train()(x)
        changed = any(not np.array_equal(before[n], b.data)
                      for n, b in net.named_buffers())
        assert changed
        after = {n: b.data.copy() for n, b in net.named_buffers()}
        with no_grad():
            net.eval()(x)
        assert all(np.array_equal(after[n], b.data) for n, b in net.named_buffers())


class TestConfigValidation:
    def test_m_must_be_power_of_two_geq_4(self):
        with pytest.raises(ConfigError, match="power of two"):
            tiny_cfg(m=6).validate()
        with pytest.raises(ConfigError, match="power of two"):
            tiny_cfg(m=2).validate()

    def test_width_embed_consistency(self):
        with pytest.raises(ConfigError, match="embed_dim"):
            tiny_cfg(embed_dim=32).validate()

    def test_width_divisible_by_reduction(self):
        with pytest.raises(ConfigError, match="reduction"):
            tiny_cfg(stage_widths=(16, 30, 64, 128), reduction=4).validate()

    def test_num_classes_floor(self):
        with pytest.raises(ConfigError, match="num_classes"):
            tiny_cfg(num_classes=1).validate()


class TestParamCounting:
    def test_linear_4_to_3_with_bias(self):
        layer = Linear(4, 3, rng=np.random.default_rng(0))
        assert count_params(layer) == 15

    def test_depthwise_strip_c8_k7_no_bias(self):
        layer = Conv2d(8, 8, (1, 7), groups=8, bias=False, rng=np.random.default_rng(0))
        assert count_params(layer) == 56

    def test_total_equals_ledger_sum(self):
        net = build_network(tiny_cfg(), seed=0)
        report = count_flops(net, (1, 1, 64, 64))
        assert sum(r.params for r in report.rows) == report.total_params
        assert report.total_params == count_params(net)

    def test_variant_parameter_ordering(self):
        cfg = tiny_cfg()
        seq = count_params(build_network(cfg, "cpca_sequential", seed=0))
        ch = count_params(build_network(cfg, "channel_only", seed=0))
        sp = count_params(build_network(cfg, "spatial_only", seed=0))
        assert ch < seq
        assert sp < seq

    def test_no_dead_parameters(self, rng):
        net = build_network(tiny_cfg(num_classes=3), seed=3)
        x = tensor(rng.standard_normal((2, 1, 64, 64)))
        mask = rng.integers(0, 3, size=(2, 64, 64))
        loss = combined_loss(net(x), mask, LossWeights())
        loss.backward()
        for name, p in net.named_parameters():
            assert p.grad is not None, f"no gradient for {name}"
            assert np.any(p.grad != 0), f"all-zero gradient for {name}"


class TestFlopCounting:
    def test_1x1_conv_hand_count(self, rng):
        x = tensor(rng.standard_normal((1, 2, 4, 4)))
        w = tensor(rng.standard_normal((3, 2, 1, 1)))
        counter = flops_mod.FlopCounter()
        with flops_mod.flops_scope(counter):
            ops.conv2d(x, w)
        conv_total = sum(n for _, kind, n in counter.records if kind == "conv")
        assert conv_total == 192  # 2 * (2 * 3 * 16)

    def test_depthwise_strip_definition(self, rng):
        c, h, w, k = 6, 5, 7, 9
        x = tensor(rng.standard_normal((1, c, h, w)))
        wt = tensor(rng.standard_normal((c, 1, 1, k)))
        counter = flops_mod.FlopCounter()
        with flops_mod.flops_scope(counter):
            ops.depthwise_strip_conv(x, wt)
        conv_total = sum(n for _, kind, n in counter.records if kind == "conv")
        assert conv_total == 2 * c * h * w * k

    def test_doubling_resolution_quadruples_conv_flops(self):
        net = build_network(tiny_cfg(), seed=0)

        def conv_flops(size):
            net.assign_qualnames()
            counter = flops_mod.FlopCounter()
            with no_grad(), flops_mod.flops_scope(counter):
                net.eval()(Tensor(np.zeros((1, 1, size, size))))
            return sum(n for _, kind, n in counter.records
                       if kind in ("conv", "conv_transpose"))

        assert conv_flops(128) == 4 * conv_flops(64)

    def test_spatial_only_cheaper_than_sequential(self):
        cfg = tiny_cfg()
        seq = count_flops(build_network(cfg, "cpca_sequential", seed=0), (1, 1, 64, 64))
        sp = count_flops(build_network(cfg, "spatial_only", seed=0), (1, 1, 64, 64))
        assert sp.total_flops < seq.total_flops

    def test_report_text_and_csv(self):
        net = build_network(tiny_cfg(), seed=0)
        report = count_flops(net, (1, 1, 64, 64))
        text = report.to_text()
        assert "layer" in text and "total" in text
        csv = report.to_csv()
        assert csv.startswith("layer,kind,params,flops")
        assert csv.strip().endswith(f"{report.total_params},{report.total_flops}")

    def test_counting_does_not_disturb_state(self, rng):
        net = build_network(tiny_cfg(), seed=0)
        before = {n: b.data.copy() for n, b in net.named_buffers()}
        count_flops(net, (1, 1, 64, 64))
        assert net.training
        assert all(np.array_equal(before[n], b.data) for n, b in net.named_buffers())
