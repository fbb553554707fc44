"""Tests for the binary checkpoint format."""

import numpy as np
import pytest

from odeformer.config import NetworkConfig
from odeformer.errors import CheckpointError
from odeformer.network import MAGIC, build_network, encode_checkpoint, load_checkpoint, save_checkpoint


class TestCheckpoint:
    @pytest.fixture
    def net(self, tiny_lm_cfg):
        """A network whose weights differ from a fresh seed-0 build."""
        return build_network(tiny_lm_cfg, seed=11)

    def test_round_trip_is_bit_exact(self, net, tmp_path):
        path = save_checkpoint(net, tmp_path / "run" / "a.ckpt", {"step": 7, "metric": 0.5})
        loaded, meta = load_checkpoint(path)
        assert loaded.config.model_dump() == net.config.model_dump()
        assert meta == {"step": 7, "metric": 0.5}
        original = dict(net.named_parameters())
        for name, t in loaded.named_parameters():
            assert t.data.tobytes() == original[name].data.tobytes()

    def test_layout(self, net):
        buf = encode_checkpoint(net)
        assert buf.startswith(MAGIC)
        n_floats = sum(t.size for t in net.parameters())
        assert len(buf) > 8 * n_floats

    def test_bad_magic(self, net, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOTACKPT" + encode_checkpoint(net)[8:])
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_truncated(self, net, tmp_path):
        path = tmp_path / "short.ckpt"
        path.write_bytes(encode_checkpoint(net)[:-5])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes(self, net, tmp_path):
        path = tmp_path / "long.ckpt"
        path.write_bytes(encode_checkpoint(net) + b"\0")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_config_mismatch(self, net, tmp_path):
        path = save_checkpoint(net, tmp_path / "a.ckpt")
        with pytest.raises(CheckpointError, match="does not match"):
            load_checkpoint(path, expect=net.config.model_copy(update={"depth": 4}))

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "absent.ckpt")

    def test_shared_sets_stored_once(self, tmp_path):
        net = build_network(NetworkConfig(depth=6, independent_layers=1, dim=8, heads=2, image_size=8, patch_size=4))
        loaded, _ = load_checkpoint(save_checkpoint(net, tmp_path / "s.ckpt"))
        assert len(loaded.layers) == 1
        assert np.array_equal(loaded.layers[0].attn.wq.data, net.layers[0].attn.wq.data)
