"""CLI subcommands, exit codes, and end-to-end determinism."""

import numpy as np
import pytest

from cpcanet.cli import run_cli
from cpcanet.pgm import read_mask_pgm, write_mask_pgm

TINY_CFG = """\
network.embed_dim = 16
network.stage_widths = 16,32,64,128
network.stage_depths = 1,1,1,1
network.num_classes = 3
network.reduction = 4
train.epochs = 2
train.batch_size = 2
train.val_fraction = 0.0
train.flip = false
train.rot90 = false
train.intensity = false
infer.crop_h = 32
infer.crop_w = 32
"""


@pytest.fixture
def tiny_config(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY_CFG)
    return p


@pytest.fixture
def dataset(tmp_path):
    out = tmp_path / "ds"
    rc = run_cli(["synth-data", "--out", str(out), "--num-samples", "4",
                  "--image-size", "32", "--classes", "3", "--family", "rings",
                  "--seed", "5"])
    assert rc == 0
    return out


class TestExitCodes:
    def test_usage_error_is_1(self, capsys):
        assert run_cli(["train"]) == 1  # missing required args
        assert "usage error" in capsys.readouterr().err

    def test_unknown_subcommand_is_1(self):
        assert run_cli(["frobnicate"]) == 1

    def test_validation_error_is_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("network.m = 6\n")
        rc = run_cli(["dump-config", "--config", str(bad)])
        assert rc == 2
        assert "error" in capsys.readouterr().err

    def test_missing_file_is_2(self, tmp_path):
        assert run_cli(["dump-config", "--config", str(tmp_path / "nope.cfg")]) == 2


class TestDumpConfig:
    def test_defaults_include_loss_weights(self, capsys):
        assert run_cli(["dump-config"]) == 0
        out = capsys.readouterr().out
        assert "loss.lambda_dc = 1.2" in out
        assert "loss.lambda_ce = 0.8" in out

    def test_dump_is_fixed_point_through_file(self, tmp_path, capsys):
        assert run_cli(["dump-config"]) == 0
        first = capsys.readouterr().out
        p = tmp_path / "resolved.cfg"
        p.write_text(first)
        assert run_cli(["dump-config", "--config", str(p)]) == 0
        assert capsys.readouterr().out == first


class TestGradcheckCommand:
    def test_passes_and_prints_table(self, capsys):
        assert run_cli(["gradcheck"]) == 0
        out = capsys.readouterr().out
        assert "max_rel_err" in out
        assert "cpca_block" in out
        assert "FAIL" not in out

    def test_impossible_tolerance_fails_with_2(self, capsys):
        assert run_cli(["gradcheck", "--tol", "1e-18"]) == 2


class TestFlopsCommand:
    def test_prints_ledger_and_csv(self, tiny_config, tmp_path, capsys):
        csv = tmp_path / "ledger.csv"
        rc = run_cli(["flops", "--config", str(tiny_config), "--csv", str(csv)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "total" in out and "convention" in out
        lines = csv.read_text().splitlines()
        assert lines[0] == "layer,kind,params,flops"
        assert lines[-1].startswith("total,")


class TestEvalCommand:
    def test_identity_masks_perfect_scores(self, tmp_path, capsys):
        mask = np.zeros((16, 16), dtype=np.int64)
        mask[4:9, 4:9] = 1
        mask[6:8, 6:8] = 2
        p = tmp_path / "m.pgm"
        write_mask_pgm(mask, p)
        rc = run_cli(["eval", "--pred", str(p), "--gt", str(p), "--classes", "3"])
        assert rc == 0
        out = capsys.readouterr().out
        for line in out.splitlines()[1:]:
            assert "100.000" in line and "0.0000" in line


class TestTrainInferPipeline:
    def test_full_pipeline(self, tiny_config, dataset, tmp_path, capsys):
        run_dir = tmp_path / "run"
        rc = run_cli(["train", "--config", str(tiny_config), "--data", str(dataset),
                      "--out", str(run_dir), "--seed", "3", "--precision", "f32"])
        assert rc == 0
        assert (run_dir / "log.csv").exists()
        ckpt = run_dir / "ckpt_final.cpck"
        assert ckpt.exists()

        mask_out = tmp_path / "pred.pgm"
        prob_out = tmp_path / "prob.cpct"
        rc = run_cli(["infer", "--config", str(tiny_config), "--checkpoint", str(ckpt),
                      "--image", str(dataset / "img_0000.pgm"),
                      "--out-mask", str(mask_out), "--out-prob", str(prob_out),
                      "--precision", "f32", "--seed", "3"])
        assert rc == 0
        pred = read_mask_pgm(mask_out)
        assert pred.shape == (32, 32)
        assert pred.max() < 3

        from cpcanet.checkpoint import load_tensor_file
        prob = load_tensor_file(prob_out)
        assert prob.shape == (3, 32, 32)
        assert np.abs(prob.sum(axis=0) - 1.0).max() < 1e-6

        rc = run_cli(["eval", "--pred", str(mask_out),
                      "--gt", str(dataset / "msk_0000.pgm"), "--classes", "3"])
        assert rc == 0

    def test_checkpoint_variant_mismatch_reports_names(self, tiny_config, dataset,
                                                       tmp_path, capsys):
        run_dir = tmp_path / "run"
        assert run_cli(["train", "--config", str(tiny_config), "--data", str(dataset),
                        "--out", str(run_dir), "--seed", "3", "--precision", "f32"]) == 0
        other_cfg = tmp_path / "chan.cfg"
        other_cfg.write_text(TINY_CFG + "variant = channel_only\n")
        rc = run_cli(["infer", "--config", str(other_cfg),
                      "--checkpoint", str(run_dir / "ckpt_final.cpck"),
                      "--image", str(dataset / "img_0000.pgm"),
                      "--out-mask", str(tmp_path / "x.pgm"), "--precision", "f32"])
        assert rc == 2
        err = capsys.readouterr().err
        assert "unexpected in checkpoint" in err and "spatial" in err


class TestDeterminism:
    def test_two_train_runs_byte_identical(self, tiny_config, dataset, tmp_path):
        outs = []
        for name in ("a", "b"):
            run_dir = tmp_path / name
            rc = run_cli(["train", "--config", str(tiny_config), "--data", str(dataset),
                          "--out", str(run_dir), "--seed", "11", "--precision", "f32"])
            assert rc == 0
            outs.append(run_dir)
        log_a = (outs[0] / "log.csv").read_bytes()
        log_b = (outs[1] / "log.csv").read_bytes()
        assert log_a == log_b
        ck_a = (outs[0] / "ckpt_final.cpck").read_bytes()
        ck_b = (outs[1] / "ckpt_final.cpck").read_bytes()
        assert ck_a == ck_b

    def test_synth_data_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            assert run_cli(["synth-data", "--out", str(tmp_path / name),
                            "--num-samples", "2", "--image-size", "32",
                            "--seed", "9"]) == 0
        for f in sorted((tmp_path / "a").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
