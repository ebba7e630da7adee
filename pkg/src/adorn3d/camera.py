"""Camera poses, conditioning vectors, and ray generation.

Cameras orbit the origin on a fixed-radius sphere and look at the center
of the normalized [-1, 1]^3 volume. Extrinsics are camera-to-world with
the pinhole convention x-right / y-down / z-forward; intrinsics are
normalized so a pixel (u, v) in [0, 1]^2 maps to the camera-space ray
((u - cx) / fx, (v - cy) / fy, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import CameraConfig
from .errors import InvalidInputError

COND_DIM = 25  # flattened 4x4 extrinsics + 3x3 intrinsics


@dataclass(frozen=True)
class CameraPose:
    extrinsics: np.ndarray  # (4, 4) camera-to-world
    intrinsics: np.ndarray  # (3, 3) normalized

    def __post_init__(self):
        ext = np.asarray(self.extrinsics, dtype=np.float64)
        intr = np.asarray(self.intrinsics, dtype=np.float64)
        if ext.shape != (4, 4) or intr.shape != (3, 3):
            raise InvalidInputError(f"bad pose shapes {ext.shape}, {intr.shape}")
        object.__setattr__(self, "extrinsics", ext)
        object.__setattr__(self, "intrinsics", intr)

    def validate(self) -> None:
        rot = self.extrinsics[:3, :3]
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-5):
            raise InvalidInputError("extrinsics rotation block is not orthonormal")
        if self.intrinsics[0, 0] <= 0 or self.intrinsics[1, 1] <= 0:
            raise InvalidInputError("intrinsics focal entries must be positive")

    def conditioning_vector(self) -> np.ndarray:
        """Deterministic 25-dim flattening of extrinsics + intrinsics."""
        return np.concatenate([
            self.extrinsics.reshape(-1),
            self.intrinsics.reshape(-1),
        ]).astype(np.float32)

    @property
    def origin(self) -> np.ndarray:
        return self.extrinsics[:3, 3]


def intrinsics_matrix(focal: float) -> np.ndarray:
    return np.array([
        [focal, 0.0, 0.5],
        [0.0, focal, 0.5],
        [0.0, 0.0, 1.0],
    ], dtype=np.float64)


def pose_from_angles(yaw: float, pitch: float, cfg: CameraConfig | None = None) -> CameraPose:
    """Orbit camera at (yaw, pitch) radians looking at the volume center.

    yaw=0, pitch=0 is the frontal view from +z; positive yaw moves the
    camera toward +x, positive pitch raises it above the equator.
    """
    cfg = cfg or CameraConfig()
    pitch = float(np.clip(pitch, -1.4, 1.4))  # avoid the up-vector singularity
    eye = cfg.radius * np.array([
        math.sin(yaw) * math.cos(pitch),
        math.sin(pitch),
        math.cos(yaw) * math.cos(pitch),
    ])
    forward = -eye / np.linalg.norm(eye)
    world_up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, world_up)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    ext = np.eye(4)
    ext[:3, 0] = right
    ext[:3, 1] = down
    ext[:3, 2] = forward
    ext[:3, 3] = eye
    return CameraPose(ext, intrinsics_matrix(cfg.focal))


def generate_rays(pose: CameraPose, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel ray origins and unit directions, row-major pixel order.

    Returns (origins, directions), each (resolution * resolution, 3).
    """
    pose.validate()
    n = resolution
    ij = np.arange(n, dtype=np.float64) + 0.5
    v, u = np.meshgrid(ij / n, ij / n, indexing="ij")
    fx, fy = pose.intrinsics[0, 0], pose.intrinsics[1, 1]
    cx, cy = pose.intrinsics[0, 2], pose.intrinsics[1, 2]
    dirs_cam = np.stack([(u - cx) / fx, (v - cy) / fy, np.ones_like(u)], axis=-1)
    dirs_world = dirs_cam.reshape(-1, 3) @ pose.extrinsics[:3, :3].T
    dirs_world /= np.linalg.norm(dirs_world, axis=-1, keepdims=True)
    origins = np.broadcast_to(pose.origin, dirs_world.shape).copy()
    return origins, dirs_world


def sample_depths(n_rays: int, n_samples: int, near: float, far: float,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Stratified depths per ray, strictly increasing; midpoints when rng is None."""
    if n_samples < 2:
        raise InvalidInputError("n_samples must be >= 2")
    edges = np.linspace(near, far, n_samples + 1)
    lo, hi = edges[:-1], edges[1:]
    if rng is None:
        t = np.broadcast_to((lo + hi) / 2.0, (n_rays, n_samples)).copy()
    else:
        jitter = rng.random((n_rays, n_samples))
        t = lo + (hi - lo) * jitter
    return t
