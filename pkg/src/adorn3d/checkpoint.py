"""Deterministic checkpoint format with content hashing and version gating.

Layout: 8-byte magic, little-endian uint64 header length, canonical JSON
header, then raw little-endian tensor payloads in sorted name order. The
header stores the format version, config snapshot, step, a SHA-256 of the
payload, and a tensor index. Saving the same state twice produces identical
bytes, so save -> load -> save round-trips to the same file hash.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np
import torch
from torch import nn

from .config import PipelineConfig
from .discriminator import Discriminator
from .errors import CheckpointCorruptionError, CheckpointVersionError
from .pipeline import PortraitGenerator
from .render import N_ACCESSORY_CLASSES, N_PORTRAIT_CLASSES
from .scribble import AccessoryCodebook, ScribbleEncoder

MAGIC = b"ADRN3D\x00\x01"
FORMAT_VERSION = 1

_DTYPES = {"float32": np.float32, "float64": np.float64,
           "int64": np.int64, "uint8": np.uint8}


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray],
                 meta: dict[str, Any]) -> str:
    """Write tensors + metadata; returns the payload content hash."""
    names = sorted(tensors)
    index = {}
    chunks = []
    offset = 0
    for name in names:
        arr = np.ascontiguousarray(tensors[name])
        if arr.dtype.name not in _DTYPES:
            raise ValueError(f"unsupported dtype {arr.dtype} for {name}")
        raw = arr.astype(arr.dtype.newbyteorder("<")).tobytes()
        index[name] = {"dtype": arr.dtype.name, "shape": list(arr.shape),
                       "offset": offset, "nbytes": len(raw)}
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    content_hash = hashlib.sha256(payload).hexdigest()
    header = {"format_version": FORMAT_VERSION, "content_hash": content_hash,
              "tensors": index, "meta": meta}
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        fh.write(payload)
    return content_hash


def load_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    """Read tensors + metadata, verifying version and content hash."""
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointCorruptionError(f"{path}: bad magic")
    hlen = int.from_bytes(blob[len(MAGIC): len(MAGIC) + 8], "little")
    header = json.loads(blob[len(MAGIC) + 8: len(MAGIC) + 8 + hlen])
    if header["format_version"] != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {header['format_version']} not supported "
            f"(this build reads version {FORMAT_VERSION})")
    payload = blob[len(MAGIC) + 8 + hlen:]
    if hashlib.sha256(payload).hexdigest() != header["content_hash"]:
        raise CheckpointCorruptionError(f"{path}: content hash mismatch")
    tensors = {}
    for name, info in header["tensors"].items():
        raw = payload[info["offset"]: info["offset"] + info["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(_DTYPES[info["dtype"]]).newbyteorder("<"))
        tensors[name] = arr.reshape(info["shape"]).copy()
    return tensors, header["meta"]


def module_tensors(prefix: str, module: nn.Module) -> dict[str, np.ndarray]:
    return {f"{prefix}/{k}": v.detach().cpu().numpy()
            for k, v in module.state_dict().items()}


def load_module(prefix: str, module: nn.Module,
                tensors: dict[str, np.ndarray]) -> None:
    state = {}
    for k, v in module.state_dict().items():
        key = f"{prefix}/{k}"
        if key not in tensors:
            raise CheckpointCorruptionError(f"missing tensor {key}")
        state[k] = torch.as_tensor(tensors[key]).to(v.dtype).reshape(v.shape)
    module.load_state_dict(state)


def state_hash(module: nn.Module) -> str:
    """Content hash of a module's parameters/buffers (order-stable)."""
    h = hashlib.sha256()
    for k in sorted(module.state_dict()):
        v = module.state_dict()[k]
        h.update(k.encode())
        h.update(v.detach().cpu().numpy().tobytes())
    return h.hexdigest()


class ModelSet:
    """Everything a checkpoint holds: generator, discriminators, scribble stack."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.generator = PortraitGenerator(cfg)
        res = cfg.render.resolution
        self.d_accessory = Discriminator(N_ACCESSORY_CLASSES, res)
        self.d_portrait = Discriminator(N_PORTRAIT_CLASSES, res)
        self.d_rgb = Discriminator(3, cfg.output_resolution)
        self.scribble_encoder = ScribbleEncoder(cfg.scribble, cfg.render.feature_channels,
                                                res, cfg.latent.d_w)
        self.codebook = AccessoryCodebook(cfg.scribble.codebook_size, cfg.latent.d_w)

    def named_modules_map(self) -> dict[str, nn.Module]:
        return {"generator": self.generator, "d_accessory": self.d_accessory,
                "d_portrait": self.d_portrait, "d_rgb": self.d_rgb,
                "scribble_encoder": self.scribble_encoder, "codebook": self.codebook}

    def discriminators(self) -> dict[str, Discriminator]:
        return {"accessory": self.d_accessory, "portrait": self.d_portrait,
                "rgb": self.d_rgb}


def save_checkpoint(path: str | Path, models: ModelSet, step: int = 0,
                    extra_meta: dict[str, Any] | None = None,
                    extra_tensors: dict[str, np.ndarray] | None = None) -> str:
    tensors: dict[str, np.ndarray] = {}
    for prefix, module in models.named_modules_map().items():
        tensors.update(module_tensors(prefix, module))
    if extra_tensors:
        tensors.update(extra_tensors)
    meta = {"step": step, "config": models.cfg.to_dict()}
    if extra_meta:
        meta.update(extra_meta)
    return save_tensors(path, tensors, meta)


def load_checkpoint(path: str | Path) -> tuple[ModelSet, dict[str, Any],
                                               dict[str, np.ndarray]]:
    tensors, meta = load_tensors(path)
    cfg = PipelineConfig.from_dict(meta["config"])
    models = ModelSet(cfg)
    for prefix, module in models.named_modules_map().items():
        load_module(prefix, module, tensors)
    return models, meta, tensors
