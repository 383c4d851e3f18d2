"""Checkpoint persistence: bitwise round trips and corruption detection."""

import numpy as np
import pytest

from pixelcoder import model as M
from pixelcoder.atlas import default_atlas
from pixelcoder.checkpoint import CheckpointError, expected_param_names, load_checkpoint, save_checkpoint
from pixelcoder.optim import OptimizerState
from pixelcoder.render import RendererConfig, render_text

TINY = M.PixelConfig(
    channels=1,
    max_patches=16,
    enc_width=32,
    enc_intermediate=64,
    enc_heads=2,
    enc_layers=2,
    dec_width=16,
    dec_intermediate=32,
    dec_heads=2,
    dec_layers=1,
)


def tiny_params(seed=0):
    return M.ModelParameters.init(TINY, np.random.default_rng(seed))


class TestRoundTrip:
    def test_bitwise_parameter_round_trip(self, tmp_path):
        params = tiny_params()
        state = OptimizerState.for_params(params.named)
        state.step = 17
        for name in params.named:
            state.m[name] += 0.25
        path = tmp_path / "c.pxck"
        save_checkpoint(params, state, path, step=42, extra={"note": "t"})
        loaded, lstate, step, extra = load_checkpoint(path)
        assert step == 42
        assert extra == {"note": "t"}
        assert lstate.step == 17
        assert set(loaded.named) == set(params.named)
        for name in params.named:
            assert np.array_equal(loaded.named[name].data, params.named[name].data)
            assert np.array_equal(lstate.m[name], state.m[name])
            assert np.array_equal(lstate.v[name], state.v[name])

    def test_forward_identical_after_reload(self, tmp_path):
        params = tiny_params()
        rcfg = RendererConfig(channels=1, max_patches=16)
        seq = render_text("abc def", rcfg, default_atlas())
        mask = M.mask_for_sequence(seq, TINY, np.random.default_rng(0))
        before = M.forward_loss(seq, mask, params).value
        path = tmp_path / "c.pxck"
        save_checkpoint(params, None, path)
        loaded, _, _, _ = load_checkpoint(path)
        after = M.forward_loss(seq, mask, loaded).value
        assert before == after  # bitwise: same float32 arrays, same graph

    def test_save_without_optimizer_state(self, tmp_path):
        path = tmp_path / "c.pxck"
        save_checkpoint(tiny_params(), None, path)
        _, state, _, _ = load_checkpoint(path)
        assert state is None

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a.pxck", tmp_path / "b.pxck"
        save_checkpoint(tiny_params(3), None, a, step=7)
        save_checkpoint(tiny_params(3), None, b, step=7)
        assert a.read_bytes() == b.read_bytes()


class TestCorruptionDetection:
    def test_every_sampled_byte_flip_detected(self, tmp_path):
        path = tmp_path / "c.pxck"
        save_checkpoint(tiny_params(), OptimizerState.for_params(tiny_params().named), path, step=3)
        blob = bytearray(path.read_bytes())
        rng = np.random.default_rng(0)
        positions = set(rng.integers(0, len(blob), size=60).tolist())
        positions |= {0, 5, len(blob) - 1, len(blob) - 4}
        victim = tmp_path / "bad.pxck"
        for pos in sorted(positions):
            corrupted = bytearray(blob)
            corrupted[pos] ^= 0x40
            victim.write_bytes(bytes(corrupted))
            with pytest.raises(CheckpointError):
                load_checkpoint(victim)

    def test_truncation_detected(self, tmp_path):
        path = tmp_path / "c.pxck"
        save_checkpoint(tiny_params(), None, path)
        blob = path.read_bytes()
        for cut in (5, len(blob) // 2, len(blob) - 1):
            victim = tmp_path / "cut.pxck"
            victim.write_bytes(blob[:cut])
            with pytest.raises(CheckpointError):
                load_checkpoint(victim)

    def test_bad_magic_message(self, tmp_path):
        path = tmp_path / "x.pxck"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_version_mismatch_explicit(self, tmp_path):
        import struct
        import zlib

        path = tmp_path / "c.pxck"
        save_checkpoint(tiny_params(), None, path)
        blob = bytearray(path.read_bytes())[:-4]
        blob[4:6] = struct.pack("<H", 9)
        blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="version 9"):
            load_checkpoint(path)


class TestNameValidation:
    def test_expected_names_match_init(self):
        assert set(expected_param_names(TINY)) == set(tiny_params().named)

    def test_missing_parameter_rejected(self, tmp_path):
        params = tiny_params()
        del params.named["cls"]
        path = tmp_path / "c.pxck"
        save_checkpoint(params, None, path)
        with pytest.raises(CheckpointError, match="name set mismatch"):
            load_checkpoint(path)

    def test_unknown_parameter_rejected(self, tmp_path):
        from pixelcoder.tensor import Tensor

        params = tiny_params()
        params.named["rogue.weight"] = Tensor(np.zeros(3), requires_grad=True)
        path = tmp_path / "c.pxck"
        save_checkpoint(params, None, path)
        with pytest.raises(CheckpointError, match="name set mismatch"):
            load_checkpoint(path)
