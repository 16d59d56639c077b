"""
Tests for lib/checkpoint.py - named-tensor checkpoint container
"""

import json
import struct

import numpy as np
import pytest

from lib.checkpoint import FORMAT_VERSION, MAGIC, load_checkpoint, save_checkpoint
from lib.errors import CheckpointError


class TestCheckpoint:
    """Test writing and reading checkpoints."""

    def test_round_trip_float32(self, tmp_path):
        """Values come back at float32 precision with names, shapes and metadata."""
        tensors = {"a/W": np.arange(6, dtype=np.float64).reshape(2, 3) / 7, "a/b": np.array(0.25)}
        path = save_checkpoint(tmp_path / "m.ckpt", tensors, {"phase": "phase1", "epoch": 3})

        loaded, metadata = load_checkpoint(path)

        assert list(loaded) == ["a/W", "a/b"]
        assert loaded["a/W"].shape == (2, 3)
        assert loaded["a/b"].shape == ()
        np.testing.assert_array_equal(loaded["a/W"], tensors["a/W"].astype(np.float32))
        assert metadata == {"phase": "phase1", "epoch": 3}

    def test_layout(self, tmp_path):
        path = save_checkpoint(tmp_path / "m.ckpt", {"x": np.ones(2)})
        raw = path.read_bytes()

        magic, version, header_len = struct.unpack_from("<8sIQ", raw)
        header = json.loads(raw[20:20 + header_len])

        assert magic == MAGIC
        assert version == FORMAT_VERSION
        assert header["tensors"] == [{"name": "x", "offset": 0, "shape": [2]}]
        assert len(raw) == 20 + header_len + 8

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="expected"):
            load_checkpoint(tmp_path / "none.ckpt")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\0" * 40)

        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path):
        path = save_checkpoint(tmp_path / "m.ckpt", {"x": np.ones(10)})
        path.write_bytes(path.read_bytes()[:-8])

        with pytest.raises(CheckpointError, match="too short"):
            load_checkpoint(path)

    def test_no_temp_file_left(self, tmp_path):
        save_checkpoint(tmp_path / "m.ckpt", {"x": np.ones(1)})

        assert [p.name for p in tmp_path.iterdir()] == ["m.ckpt"]
