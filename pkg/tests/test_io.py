"""PGM files, CPCT tensor files, and CRC-guarded checkpoints."""

import numpy as np
import pytest

from cpcanet.checkpoint import (checkpoint_bytes, load_checkpoint, load_state_into,
                                load_tensor_file, save_checkpoint, save_tensor_file)
from cpcanet.errors import CheckpointError, PgmError
from cpcanet.network import build_network
from cpcanet.pgm import read_image_pgm, read_mask_pgm, read_pgm, write_mask_pgm, write_pgm
from cpcanet.tensor import set_default_dtype
from test_network import tiny_cfg


class TestPgm:
    def test_endpoint_scaling(self, tmp_path):
        p = tmp_path / "t.pgm"
        write_pgm(p, np.array([[0, 255], [255, 0]]), 255)
        img = read_image_pgm(p)
        assert img.shape == (1, 2, 2)
        assert np.array_equal(img[0], [[0.0, 1.0], [1.0, 0.0]])

    def test_mask_roundtrip_bytes(self, tmp_path):
        mask = np.array([[0, 1, 2], [2, 1, 0]])
        p = tmp_path / "m.pgm"
        write_mask_pgm(mask, p)
        assert np.array_equal(read_mask_pgm(p), mask)
        q = tmp_path / "m2.pgm"
        write_mask_pgm(read_mask_pgm(p), q)
        assert p.read_bytes() == q.read_bytes()

    def test_16bit_big_endian_hand_decoded(self, tmp_path):
        # 1x2 image, maxval 65535, samples 0x0102 and 0xFFFE: big-endian
        # sample order per the format
        p = tmp_path / "wide.pgm"
        p.write_bytes(b"P5\n2 1\n65535\n" + bytes([0x01, 0x02, 0xFF, 0xFE]))
        arr, maxval = read_pgm(p)
        assert maxval == 65535
        assert arr.tolist() == [[0x0102, 0xFFFE]]

    def test_comment_lines_allowed(self, tmp_path):
        p = tmp_path / "c.pgm"
        p.write_bytes(b"P5\n# a comment\n2 2\n255\n" + bytes(4))
        arr, _ = read_pgm(p)
        assert arr.shape == (2, 2)

    def test_malformed_header_reports_offset(self, tmp_path):
        p = tmp_path / "bad.pgm"
        p.write_bytes(b"P5\nxx 2\n255\n" + bytes(4))
        with pytest.raises(PgmError, match="byte"):
            read_pgm(p)

    def test_truncated_raster_rejected(self, tmp_path):
        p = tmp_path / "short.pgm"
        p.write_bytes(b"P5\n4 4\n255\n" + bytes(3))
        with pytest.raises(PgmError, match="truncated"):
            read_pgm(p)

    def test_wrong_magic(self, tmp_path):
        p = tmp_path / "p2.pgm"
        p.write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")
        with pytest.raises(PgmError, match="magic|binary"):
            read_pgm(p)


class TestTensorFile:
    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_roundtrip_bit_exact(self, tmp_path, rng, dtype):
        arr = rng.standard_normal((2, 3, 4)).astype(dtype)
        p = tmp_path / "t.cpct"
        save_tensor_file(p, arr)
        back = load_tensor_file(p)
        assert back.dtype == dtype
        assert back.shape == arr.shape
        assert np.array_equal(back.view(np.uint8), arr.view(np.uint8))

    def test_header_layout(self, tmp_path, rng):
        arr = rng.standard_normal((2, 2)).astype(np.float32)
        p = tmp_path / "t.cpct"
        save_tensor_file(p, arr)
        raw = p.read_bytes()
        assert raw[:4] == b"CPCT"
        assert int.from_bytes(raw[4:8], "little") == 1  # version
        assert raw[8] == 1  # f32 code
        assert raw[9] == 2  # ndim
        assert int.from_bytes(raw[10:18], "little") == 2
        assert int.from_bytes(raw[18:26], "little") == 2

    def test_scalar_rank0(self, tmp_path):
        p = tmp_path / "s.cpct"
        save_tensor_file(p, np.float64(3.25))
        assert load_tensor_file(p) == 3.25


class TestCheckpoint:
    def test_save_load_bit_exact(self, tmp_path):
        model = build_network(tiny_cfg(), seed=0)
        p = tmp_path / "m.cpck"
        save_checkpoint(model, p)
        state = load_checkpoint(p)
        for name, t in model.named_state():
            assert name in state
            assert np.array_equal(state[name].view(np.uint8), t.data.view(np.uint8))

    def test_load_into_restores_exactly(self, tmp_path, rng):
        model = build_network(tiny_cfg(), seed=0)
        p = tmp_path / "m.cpck"
        save_checkpoint(model, p)
        clone = build_network(tiny_cfg(), seed=99)
        load_state_into(clone, p)
        for (_, a), (_, b) in zip(model.named_state(), clone.named_state()):
            assert np.array_equal(a.data, b.data)

    def test_truncated_file_is_crc_error(self, tmp_path):
        model = build_network(tiny_cfg(), seed=0)
        p = tmp_path / "m.cpck"
        save_checkpoint(model, p)
        raw = p.read_bytes()
        p.write_bytes(raw[:len(raw) // 2])
        with pytest.raises(CheckpointError, match="CRC|short"):
            load_checkpoint(p)

    def test_corrupted_byte_is_crc_error(self, tmp_path):
        model = build_network(tiny_cfg(), seed=0)
        p = tmp_path / "m.cpck"
        save_checkpoint(model, p)
        raw = bytearray(p.read_bytes())
        raw[30] ^= 0xFF
        p.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="CRC"):
            load_checkpoint(p)

    def test_variant_mismatch_names_unexpected_entries(self, tmp_path):
        seq = build_network(tiny_cfg(), "cpca_sequential", seed=0)
        p = tmp_path / "seq.cpck"
        save_checkpoint(seq, p)
        channel_only = build_network(tiny_cfg(), "channel_only", seed=0)
        with pytest.raises(CheckpointError) as err:
            load_state_into(channel_only, p)
        msg = str(err.value)
        assert "unexpected in checkpoint" in msg
        assert "spatial" in msg

    def test_precision_conversion_rules(self, tmp_path, rng):
        arr64 = rng.standard_normal((3, 3))
        state = {"w": arr64}
        p = tmp_path / "x.cpck"
        save_checkpoint(state, p)

        set_default_dtype("f32")
        m32 = build_network(tiny_cfg(), seed=0)
        set_default_dtype("f64")
        m64 = build_network(tiny_cfg(), seed=0)
        q = tmp_path / "m32.cpck"
        save_checkpoint(m32, q)
        # f32 payload widens exactly into the f64 model
        load_state_into(m64, q)
        for (_, a), (_, b) in zip(m32.named_state(), m64.named_state()):
            assert b.data.dtype == np.float64
            assert np.array_equal(a.data.astype(np.float64), b.data)
        # f64 payload rounds into an f32 model
        r = tmp_path / "m64.cpck"
        save_checkpoint(m64, r)
        load_state_into(m32, r)
        for (_, a), (_, b) in zip(m64.named_state(), m32.named_state()):
            assert b.data.dtype == np.float32
            assert np.array_equal(a.data.astype(np.float32), b.data)

    def test_duplicate_names_rejected(self):
        with pytest.raises(CheckpointError, match="duplicate"):
            checkpoint_bytes([("w", np.zeros(1)), ("w", np.ones(1))])

    def test_attention_params_under_attn_prefix(self):
        model = build_network(tiny_cfg(), seed=0)
        names = [n for n, _ in model.named_parameters()]
        assert any(".attn." in n for n in names)
