"""Run-configuration parsing, defaults, and the dump/parse fixed point."""

import pytest

from cpcanet.config import (SCHEMA, default_run_config, dump_config, parse_config_text)
from cpcanet.errors import ConfigError


class TestDefaults:
    def test_documented_defaults(self):
        cfg = default_run_config()
        assert cfg.network.embed_dim == 96
        assert cfg.network.m == 4
        assert cfg.network.reduction == 16
        assert cfg.network.branch_kernels == (7, 11, 21)
        assert cfg.network.decoder_blocks == (2, 2, 1)
        assert cfg.loss.lambda_dc == 1.2
        assert cfg.loss.lambda_ce == 0.8
        assert cfg.infer.stride_factor == 0.5
        assert cfg.infer.sigma_factor == 0.125
        assert cfg.variant == "cpca_sequential"

    def test_dump_contains_every_key(self):
        text = dump_config(default_run_config())
        for key in SCHEMA:
            assert f"{key} = " in text
        assert "loss.lambda_dc = 1.2" in text
        assert "loss.lambda_ce = 0.8" in text


class TestParsing:
    def test_unknown_key_hard_error(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("network.embd_dim = 96\n")

    def test_duplicate_key_hard_error(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("network.m = 4\nnetwork.m = 8\n")

    def test_bad_value_reports_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("network.m = 4\nnetwork.embed_dim = many\n")

    def test_comments_and_blanks_ignored(self):
        cfg = parse_config_text("# comment\n\nnetwork.m = 8\n")
        assert cfg.network.m == 8

    def test_lists_parse(self):
        cfg = parse_config_text("network.stage_depths = 1,1,1,1\n")
        assert cfg.network.stage_depths == (1, 1, 1, 1)

    def test_bools_parse(self):
        cfg = parse_config_text("train.flip = false\ntrain.rot90 = true\n")
        assert cfg.train.flip is False
        assert cfg.train.rot90 is True

    def test_missing_keys_take_defaults(self):
        cfg = parse_config_text("network.num_classes = 5\n")
        assert cfg.network.num_classes == 5
        assert cfg.network.embed_dim == 96

    def test_dump_parse_fixed_point(self):
        cfg = default_run_config()
        cfg.network.m = 8
        cfg.train.learning_rate = 3e-4
        cfg.variant = "cbam"
        text = dump_config(cfg)
        again = parse_config_text(text)
        assert again == cfg
        assert dump_config(again) == text

    def test_variant_validated(self):
        cfg = parse_config_text("variant = bogus\n")
        with pytest.raises(ConfigError, match="variant"):
            cfg.validate()
