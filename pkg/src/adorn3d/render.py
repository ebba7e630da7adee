"""Volume rendering of tri-planes into 2D feature images + per-pixel semantics.

A 3D point is featurized by projecting it onto the three planes, bilinearly
sampling each, summing the three samples, and decoding with a small MLP into
(features, density). Rays are marched front-to-back with standard alpha
compositing. A two-layer per-pixel classifier turns feature images into
semantic probability maps (20 portrait classes / 5 accessory classes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .camera import CameraPose, generate_rays, sample_depths
from .classes import ACCESSORY_CLASSES, PORTRAIT_CLASSES
from .config import RenderConfig
from .errors import InvalidInputError
from .geometry import ROLE_ACCESSORY, ROLE_PORTRAIT, TriPlane
from .layers import EqualLinear, leaky_relu

N_PORTRAIT_CLASSES = len(PORTRAIT_CLASSES)
N_ACCESSORY_CLASSES = len(ACCESSORY_CLASSES)
CLASS_SET_PORTRAIT = "portrait_20"
CLASS_SET_ACCESSORY = "accessory_5"


@dataclass
class ProjectedFeatures:
    features: torch.Tensor  # (B, C_f, H, W)
    poses: list[CameraPose]
    role: str

    def __post_init__(self):
        if self.features.ndim != 4:
            raise InvalidInputError("features must be (B, C, H, W)")


@dataclass
class SemanticMap:
    probs: torch.Tensor  # (B, N_classes, H, W), per-pixel softmax
    class_set: str

    def argmax_labels(self) -> torch.Tensor:
        return self.probs.argmax(dim=1)

    @property
    def n_classes(self) -> int:
        return self.probs.shape[1]


@dataclass
class RaySampleSet:
    origins: torch.Tensor     # (B, R, 3)
    directions: torch.Tensor  # (B, R, 3), unit norm
    depths: torch.Tensor      # (B, R, S), strictly increasing
    features: torch.Tensor    # (B, R, S, C_f)
    sigma: torch.Tensor       # (B, R, S), >= 0


def sample_plane(plane: torch.Tensor, coords: torch.Tensor) -> torch.Tensor:
    """Bilinear sample of a (B, C, H, W) plane at (B, N, 2) coords in [-1, 1].

    Grid nodes sit at coordinates -1 + 2*i/(size-1); out-of-range coords are
    clamped to the boundary.
    """
    b, c, h, w = plane.shape
    a = coords[..., 0].clamp(-1.0, 1.0)
    bb = coords[..., 1].clamp(-1.0, 1.0)
    u = (a + 1.0) * 0.5 * (w - 1)
    v = (bb + 1.0) * 0.5 * (h - 1)
    u0 = u.floor().long().clamp(0, w - 2)
    v0 = v.floor().long().clamp(0, h - 2)
    fu = (u - u0.to(u.dtype)).unsqueeze(1)
    fv = (v - v0.to(v.dtype)).unsqueeze(1)
    flat = plane.reshape(b, c, h * w)
    idx00 = (v0 * w + u0).unsqueeze(1).expand(-1, c, -1)
    p00 = flat.gather(2, idx00)
    p01 = flat.gather(2, idx00 + 1)
    p10 = flat.gather(2, idx00 + w)
    p11 = flat.gather(2, idx00 + w + 1)
    top = p00 * (1 - fu) + p01 * fu
    bot = p10 * (1 - fu) + p11 * fu
    return top * (1 - fv) + bot * fv  # (B, C, N)


def aggregate_plane_features(tri: TriPlane, points: torch.Tensor) -> torch.Tensor:
    """Pre-decoder tri-plane feature: sum of the three plane samples.

    points: (B, N, 3) in the normalized volume. Returns (B, N, C).
    """
    xy = points[..., [0, 1]]
    xz = points[..., [0, 2]]
    yz = points[..., [1, 2]]
    f = (sample_plane(tri.planes[:, 0], xy)
         + sample_plane(tri.planes[:, 1], xz)
         + sample_plane(tri.planes[:, 2], yz))
    return f.transpose(1, 2)


class TriplaneDecoder(nn.Module):
    """MLP decoding an aggregated plane feature into (render features, density)."""

    def __init__(self, in_channels: int, feature_channels: int, hidden: int):
        super().__init__()
        self.fc1 = EqualLinear(in_channels, hidden)
        self.fc2 = EqualLinear(hidden, 1 + feature_channels)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.fc2(leaky_relu(self.fc1(x)))
        sigma = F.softplus(h[..., 0])
        return h[..., 1:], sigma


class SemanticClassifier(nn.Module):
    """Two-layer per-pixel classifier over a feature image (kept tiny)."""

    def __init__(self, in_channels: int, n_classes: int, hidden: int):
        super().__init__()
        self.fc1 = EqualLinear(in_channels, hidden)
        self.fc2 = EqualLinear(hidden, n_classes)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        x = features.permute(0, 2, 3, 1)
        logits = self.fc2(leaky_relu(self.fc1(x)))
        return logits.permute(0, 3, 1, 2)


def composite_rays(features: torch.Tensor, sigma: torch.Tensor,
                   deltas: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Front-to-back alpha compositing.

    alpha_i = 1 - exp(-sigma_i * delta_i), weight_i = alpha_i * prod_{j<i}(1 - alpha_j).
    Returns (accumulated features (..., C), weights (..., S)).
    """
    alpha = 1.0 - torch.exp(-sigma * deltas)
    trans = torch.cumprod(1.0 - alpha + 1e-10, dim=-1)
    trans = torch.cat([torch.ones_like(trans[..., :1]), trans[..., :-1]], dim=-1)
    weights = alpha * trans
    return (weights.unsqueeze(-1) * features).sum(dim=-2), weights


class NeuralRenderer(nn.Module):
    """Tri-plane -> projected feature image -> semantic map."""

    def __init__(self, cfg: RenderConfig, plane_channels: int):
        super().__init__()
        self.cfg = cfg
        self.decoder = TriplaneDecoder(plane_channels, cfg.feature_channels, cfg.decoder_hidden)
        self.portrait_classifier = SemanticClassifier(
            cfg.feature_channels, N_PORTRAIT_CLASSES, cfg.classifier_hidden)
        self.accessory_classifier = SemanticClassifier(
            cfg.feature_channels, N_ACCESSORY_CLASSES, cfg.classifier_hidden)

    def query_points(self, tri: TriPlane, points: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Features and density for (B, N, 3) points in the normalized volume."""
        return self.decoder(aggregate_plane_features(tri, points))

    def volume_render(self, tri: TriPlane, poses: CameraPose | list[CameraPose],
                      n_samples: int | None = None,
                      rng: np.random.Generator | None = None,
                      return_samples: bool = False):
        """Render the tri-plane under per-sample camera poses.

        Stratified depth sampling uses midpoints unless an rng provides
        jitter. Rays are mutually independent; output is order-stable.
        """
        if isinstance(poses, CameraPose):
            poses = [poses] * tri.planes.shape[0]
        b = tri.planes.shape[0]
        if len(poses) != b:
            raise InvalidInputError(f"got {len(poses)} poses for batch {b}")
        n_samples = n_samples or self.cfg.n_samples
        res = self.cfg.resolution
        dtype = tri.planes.dtype
        device = tri.planes.device

        origins_np, dirs_np = [], []
        for pose in poses:
            o, d = generate_rays(pose, res)
            origins_np.append(o)
            dirs_np.append(d)
        origins = torch.as_tensor(np.stack(origins_np), dtype=dtype, device=device)
        dirs = torch.as_tensor(np.stack(dirs_np), dtype=dtype, device=device)
        n_rays = res * res
        depths_np = sample_depths(b * n_rays, n_samples, self.cfg.near, self.cfg.far, rng)
        depths = torch.as_tensor(depths_np, dtype=dtype, device=device).reshape(b, n_rays, n_samples)

        points = origins[:, :, None, :] + depths[..., None] * dirs[:, :, None, :]
        feats, sigma = self.query_points(tri, points.reshape(b, n_rays * n_samples, 3))
        feats = feats.reshape(b, n_rays, n_samples, -1)
        sigma = sigma.reshape(b, n_rays, n_samples)

        deltas = depths[..., 1:] - depths[..., :-1]
        tail = torch.full_like(deltas[..., :1], (self.cfg.far - self.cfg.near) / n_samples)
        deltas = torch.cat([deltas, tail], dim=-1)
        acc, _weights = composite_rays(feats, sigma, deltas)
        image = acc.transpose(1, 2).reshape(b, -1, res, res)
        projected = ProjectedFeatures(image, list(poses), tri.role)
        if return_samples:
            samples = RaySampleSet(origins, dirs, depths, feats, sigma)
            return projected, samples
        return projected

    def classify_semantics(self, feat: ProjectedFeatures) -> SemanticMap:
        if feat.features.shape[1] != self.cfg.feature_channels:
            raise InvalidInputError("feature channels do not match classifier input")
        if feat.role == ROLE_PORTRAIT:
            logits = self.portrait_classifier(feat.features)
            class_set = CLASS_SET_PORTRAIT
        elif feat.role == ROLE_ACCESSORY:
            logits = self.accessory_classifier(feat.features)
            class_set = CLASS_SET_ACCESSORY
        else:
            raise InvalidInputError(f"unknown feature role {feat.role!r}")
        return SemanticMap(torch.softmax(logits, dim=1), class_set)
