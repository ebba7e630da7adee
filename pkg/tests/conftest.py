import os
import sys
from pathlib import Path

# Pin threading before torch loads: with dynamic MKL/OMP thread counts, float
# accumulation order can vary under CPU contention, breaking the bit-identical
# determinism contracts this suite asserts.
os.environ.setdefault("MKL_DYNAMIC", "FALSE")
os.environ.setdefault("OMP_DYNAMIC", "FALSE")

import pytest
import torch

torch.set_num_threads(min(8, os.cpu_count() or 1))

sys.path.insert(0, str(Path(__file__).parent))

from adorn3d.config import (CameraConfig, GeometryConfig, LatentConfig,
                            MetricsConfig, PipelineConfig, RenderConfig,
                            ScribbleConfig, TextureConfig, TrainingConfig)
from adorn3d.pipeline import PortraitGenerator


def tiny_config() -> PipelineConfig:
    """Small dims so per-test model builds stay fast."""
    cfg = PipelineConfig(
        latent=LatentConfig(d_z=16, d_w=16, p_identity=0.75, n_identity_tokens=3,
                            hidden=32, n_layers=2),
        camera=CameraConfig(),
        geometry=GeometryConfig(plane_channels=4, plane_resolution=16,
                                backbone_depth=1, backbone_channels=24,
                                adapter_channels=8),
        render=RenderConfig(n_samples=4, resolution=8, feature_channels=8,
                            decoder_hidden=16, classifier_hidden=16),
        texture=TextureConfig(n_blocks=2, base_channels=8, block_channels=8),
        scribble=ScribbleConfig(codebook_size=8, encoder_channels=8),
        training=TrainingConfig(batch_size=2, geometry_pretrain_steps=2,
                                total_steps=4, r1_interval=2),
        metrics=MetricsConfig(n_quality_segmaps=4, n_textures_per_segmap=2,
                              n_alignment_pairs=2, n_fvid_identities=2,
                              n_fvid_poses=3, n_fmd_samples=8, embedder_dim=8),
    )
    return cfg


@pytest.fixture(scope="session")
def cfg() -> PipelineConfig:
    return tiny_config()


@pytest.fixture(scope="session")
def generator(cfg) -> PortraitGenerator:
    torch.manual_seed(0)
    return PortraitGenerator(cfg)


@pytest.fixture(scope="session")
def generator_f64(cfg) -> PortraitGenerator:
    torch.manual_seed(0)
    return PortraitGenerator(cfg).double()
