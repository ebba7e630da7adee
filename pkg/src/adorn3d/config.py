"""Configuration for every stage of the pipeline.

Two presets ship with the package: ``desk`` (small dims, CPU-friendly,
the default everywhere) and ``paper`` (full-scale dims for reference;
training at that scale needs multi-GPU hardware and real datasets).
Configs round-trip through nested dicts / JSON using dotted section
names, e.g. ``latent.d_w`` or ``render.n_samples``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError


@dataclass
class LatentConfig:
    d_z: int = 128
    d_w: int = 64
    p_identity: float = 0.75
    n_identity_tokens: int = 4
    hidden: int = 128
    n_layers: int = 2


@dataclass
class CameraConfig:
    radius: float = 2.5
    focal: float = 1.25
    near: float = 0.8
    far: float = 4.2
    yaw_range: float = 1.2       # radians, symmetric about frontal
    pitch_range: float = 0.45


@dataclass
class GeometryConfig:
    plane_channels: int = 16
    plane_resolution: int = 64
    backbone_depth: int = 2      # conv layers per resolution level
    backbone_channels: int = 96
    adapter_channels: int = 16   # hidden width inside each adapter branch


@dataclass
class RenderConfig:
    n_samples: int = 16
    resolution: int = 32
    feature_channels: int = 32
    decoder_hidden: int = 64
    classifier_hidden: int = 64
    near: float = 0.8
    far: float = 4.2


@dataclass
class TextureConfig:
    n_blocks: int = 2            # each block upsamples x2
    base_channels: int = 16      # fused feature channels C_s
    block_channels: int = 32
    decorative_prob: float = 0.5


@dataclass
class ScribbleConfig:
    codebook_size: int = 64
    encoder_channels: int = 32
    alpha_commit: float = 0.25
    beta_latent: float = 1.0
    max_morph_radius: int = 2
    dead_entry_steps: int = 1000


@dataclass
class TrainingConfig:
    batch_size: int = 4
    lr: float = 2.5e-3
    beta1: float = 0.0
    beta2: float = 0.99
    r1_gamma: float = 1.0
    r1_interval: int = 16
    accs_probability: float = 0.37
    geometry_pretrain_steps: int = 500
    total_steps: int = 2000
    log_interval: int = 50
    checkpoint_interval: int = 500
    seed: int = 0


@dataclass
class MetricsConfig:
    n_quality_segmaps: int = 200
    n_textures_per_segmap: int = 3
    n_alignment_pairs: int = 100
    n_fvid_identities: int = 20
    n_fvid_poses: int = 8
    n_fmd_samples: int = 256
    embedder_dim: int = 64
    embedder_seed: int = 1234


@dataclass
class PipelineConfig:
    latent: LatentConfig = field(default_factory=LatentConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    texture: TextureConfig = field(default_factory=TextureConfig)
    scribble: ScribbleConfig = field(default_factory=ScribbleConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    @property
    def output_resolution(self) -> int:
        return self.render.resolution * (2 ** self.texture.n_blocks)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PipelineConfig":
        cfg = cls()
        for section, values in data.items():
            if not hasattr(cfg, section):
                raise ConfigError(f"unknown config section: {section}")
            sub = getattr(cfg, section)
            for key, value in values.items():
                if not hasattr(sub, key):
                    raise ConfigError(f"unknown config key: {section}.{key}")
                setattr(sub, key, type(getattr(sub, key))(value))
        return cfg

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def desk_preset() -> PipelineConfig:
    """Small dims for CPU experiments; default for all tools."""
    return PipelineConfig()


def paper_preset() -> PipelineConfig:
    """Full-scale reference dims; documented, not meant to run on a desk."""
    cfg = PipelineConfig()
    cfg.latent = LatentConfig(d_z=512, d_w=256, p_identity=0.75, n_identity_tokens=4,
                              hidden=512, n_layers=8)
    cfg.geometry = GeometryConfig(plane_channels=32, plane_resolution=256,
                                  backbone_depth=2, backbone_channels=512,
                                  adapter_channels=32)
    cfg.render = RenderConfig(n_samples=48, resolution=128, feature_channels=64,
                              decoder_hidden=64, classifier_hidden=64,
                              near=0.8, far=4.2)
    cfg.texture = TextureConfig(n_blocks=2, base_channels=32, block_channels=64,
                                decorative_prob=0.5)
    cfg.scribble = ScribbleConfig(codebook_size=256, encoder_channels=64,
                                  alpha_commit=0.25, beta_latent=1.0,
                                  max_morph_radius=3, dead_entry_steps=1000)
    cfg.training = TrainingConfig(batch_size=16, lr=2.5e-3, accs_probability=0.37,
                                  geometry_pretrain_steps=20000, total_steps=200000)
    cfg.metrics = MetricsConfig(n_quality_segmaps=2000, n_textures_per_segmap=10,
                                n_alignment_pairs=1000, n_fvid_identities=100,
                                n_fvid_poses=12, n_fmd_samples=10000)
    return cfg


PRESETS = {"desk": desk_preset, "paper": paper_preset}


def preset(name: str) -> PipelineConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
