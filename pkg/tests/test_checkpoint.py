import hashlib

import numpy as np
import pytest
import torch

from adorn3d.checkpoint import (FORMAT_VERSION, MAGIC, ModelSet, load_checkpoint,
                                load_tensors, save_checkpoint, save_tensors,
                                state_hash)
from adorn3d.errors import CheckpointCorruptionError, CheckpointVersionError


@pytest.fixture(scope="module")
def models(cfg):
    torch.manual_seed(3)
    return ModelSet(cfg)


class TestFormat:
    def test_roundtrip_weights_bit_identical(self, models, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, models, step=7)
        loaded, meta, _ = load_checkpoint(path)
        assert meta["step"] == 7
        for name, module in models.named_modules_map().items():
            assert state_hash(module) == state_hash(loaded.named_modules_map()[name])

    def test_save_load_save_identical_bytes(self, models, tmp_path):
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, models, step=3)
        loaded, meta, _ = load_checkpoint(p1)
        save_checkpoint(p2, loaded, step=meta["step"])
        h1 = hashlib.sha256(p1.read_bytes()).hexdigest()
        h2 = hashlib.sha256(p2.read_bytes()).hexdigest()
        assert h1 == h2

    def test_future_version_rejected(self, tmp_path):
        path = tmp_path / "v.ckpt"
        save_tensors(path, {"x": np.zeros(3, dtype=np.float32)}, {})
        blob = path.read_bytes()
        mutated = blob.replace(
            f'"format_version": {FORMAT_VERSION}'.encode(),
            f'"format_version": {FORMAT_VERSION + 1}'.encode())
        assert mutated != blob
        path.write_bytes(mutated)
        with pytest.raises(CheckpointVersionError):
            load_tensors(path)

    def test_payload_byte_flip_detected(self, tmp_path):
        path = tmp_path / "c.ckpt"
        save_tensors(path, {"x": np.arange(16, dtype=np.float32)}, {})
        blob = bytearray(path.read_bytes())
        blob[-1] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointCorruptionError):
            load_tensors(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"not a checkpoint at all" + b"\x00" * 64)
        with pytest.raises(CheckpointCorruptionError):
            load_tensors(path)

    def test_magic_is_versioned(self):
        assert len(MAGIC) == 8

    def test_meta_and_dtypes_roundtrip(self, tmp_path):
        tensors = {"a": np.arange(6, dtype=np.int64).reshape(2, 3),
                   "b": np.random.default_rng(0).normal(size=(4,)).astype(np.float64),
                   "c": np.arange(5, dtype=np.uint8)}
        meta = {"nested": {"k": [1, 2, 3]}, "s": "text"}
        path = tmp_path / "t.ckpt"
        save_tensors(path, tensors, meta)
        loaded, lmeta = load_tensors(path)
        assert lmeta == meta
        for k, v in tensors.items():
            np.testing.assert_array_equal(loaded[k], v)
            assert loaded[k].dtype == v.dtype


class TestStateHash:
    def test_sensitive_to_single_weight(self, models):
        h = state_hash(models.generator)
        with torch.no_grad():
            p = next(models.generator.parameters())
            p[(0,) * p.ndim] += 1e-3
        assert state_hash(models.generator) != h
        with torch.no_grad():
            p[(0,) * p.ndim] -= 1e-3
