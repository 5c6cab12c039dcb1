import numpy as np
import pytest

from flowrec.errors import ConfigError, DataError
from flowrec.model import (
    EncoderConfig,
    init_params,
    load_checkpoint,
    load_sidecar,
    save_checkpoint,
    save_sidecar,
)


class TestEncoderConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            EncoderConfig(embed_dim=10, heads=3)
        with pytest.raises(ConfigError):
            EncoderConfig(patch_size=0)

    def test_defaults(self):
        cfg = EncoderConfig()
        assert cfg.embed_dim == 64 and cfg.patch_size == 8


class TestInitParams:
    def test_deterministic(self):
        cfg = EncoderConfig(patch_size=4, embed_dim=8, heads=2)
        a = init_params(cfg, 7, seed=5)
        b = init_params(cfg, 7, seed=5)
        assert set(a) == set(b)
        for k in a:
            assert np.array_equal(a[k], b[k])

    def test_zero_initialized_groups(self):
        cfg = EncoderConfig(patch_size=4, embed_dim=8, heads=2)
        params = init_params(cfg, 7, seed=0)
        for name in ("patch.kind", "align.wo", "align.bo"):
            assert np.all(params[name] == 0.0)
        # summary token is deliberately not zero: layer-norming an exact-zero
        # vector makes gradients blow up by 1/sqrt(eps)
        assert np.any(params["patch.summary"] != 0.0)

    def test_shared_block_shapes(self):
        cfg = EncoderConfig(patch_size=4, embed_dim=8, heads=2, frame_layers=2)
        params = init_params(cfg, 7, seed=0)
        assert params["frame.1.attn.wq"].shape == (8, 8)
        assert params["frame.0.mlp.w1"].shape == (8, 32)
        assert params["text.embed"].shape == (7, 8)


class TestCheckpoint:
    def test_round_trip_float32(self, tmp_path):
        cfg = EncoderConfig(patch_size=4, embed_dim=8, heads=2)
        params = init_params(cfg, 7, seed=1)
        path = save_checkpoint(tmp_path / "m.ckpt", params)
        back = load_checkpoint(path)
        assert set(back) == set(params)
        for k in params:
            assert back[k].dtype == np.float64
            assert np.array_equal(back[k], params[k].astype(np.float32).astype(np.float64))

    def test_save_is_deterministic(self, tmp_path):
        cfg = EncoderConfig(patch_size=4, embed_dim=8, heads=2)
        params = init_params(cfg, 7, seed=2)
        a = save_checkpoint(tmp_path / "a.ckpt", params).read_bytes()
        b = save_checkpoint(tmp_path / "b.ckpt", params).read_bytes()
        assert a == b

    def test_corruption_detected(self, tmp_path):
        cfg = EncoderConfig(patch_size=4, embed_dim=8, heads=2)
        path = save_checkpoint(tmp_path / "m.ckpt", init_params(cfg, 7, seed=3))
        blob = bytearray(path.read_bytes())
        blob[30] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(DataError):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / "nope.ckpt")

    def test_sidecar_round_trip(self, tmp_path):
        cfg = EncoderConfig(patch_size=4, embed_dim=8, heads=2)
        ckpt = tmp_path / "m.ckpt"
        save_checkpoint(ckpt, init_params(cfg, 7, seed=4))
        save_sidecar(ckpt, ["a", "b"], cfg, extra={"seed": 9})
        meta = load_sidecar(ckpt)
        assert meta["classes"] == ["a", "b"]
        assert meta["seed"] == 9
        assert EncoderConfig(**meta["encoder"]) == cfg
