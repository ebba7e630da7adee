"""Evaluation metrics: Fréchet/kernel distances, alignment, view-consistency
identity, and single-identity accessory diversity.

Embedders are desk-scale proxies: a fixed-seed random-projection conv net for
image distributions and identity features, and the early layers of the
trained accessory-map discriminator for mask distributions. Every report
carries the embedder id (a state hash), so numbers are comparable across runs
of the same build but deliberately not comparable to any external network.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

import numpy as np
import torch
from scipy import linalg
from torch import nn

from .camera import CameraPose, pose_from_angles
from .discriminator import Discriminator
from .errors import InvalidInputError
from .layers import EqualConv2d, leaky_relu
from .render import N_ACCESSORY_CLASSES


@dataclass
class EmbeddingSet:
    vectors: np.ndarray  # (N, D)
    embedder_id: str

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise InvalidInputError("embeddings must be (N, D)")


def _check_pair(a: EmbeddingSet, b: EmbeddingSet) -> None:
    if a.embedder_id != b.embedder_id:
        raise InvalidInputError("embedding sets come from different embedders")
    if a.vectors.shape[1] != b.vectors.shape[1]:
        raise InvalidInputError("embedding dimensions disagree")
    if len(a.vectors) < 2 or len(b.vectors) < 2:
        raise InvalidInputError("need at least 2 vectors per set")


def frechet_gaussian(mu_a: np.ndarray, cov_a: np.ndarray,
                     mu_b: np.ndarray, cov_b: np.ndarray,
                     eps: float = 1e-10) -> float:
    """||mu_a - mu_b||^2 + tr(Sa + Sb - 2 sqrtm(Sa Sb)), Schur-based sqrtm
    with epsilon fallback for near-singular products."""
    diff = np.asarray(mu_a) - np.asarray(mu_b)
    with np.errstate(invalid="ignore", divide="ignore"):
        covmean, _ = linalg.sqrtm(cov_a @ cov_b, disp=False)
        if not np.isfinite(covmean).all():
            jitter = eps * np.eye(cov_a.shape[0])
            covmean, _ = linalg.sqrtm((cov_a + jitter) @ (cov_b + jitter), disp=False)
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2 * np.trace(covmean))


def frechet_distance(a: EmbeddingSet, b: EmbeddingSet) -> float:
    """Fréchet distance between Gaussian fits of two embedding sets."""
    _check_pair(a, b)
    mu_a, mu_b = a.vectors.mean(axis=0), b.vectors.mean(axis=0)
    cov_a = np.cov(a.vectors, rowvar=False)
    cov_b = np.cov(b.vectors, rowvar=False)
    return frechet_gaussian(mu_a, np.atleast_2d(cov_a), mu_b, np.atleast_2d(cov_b))


def kernel_distance(a: EmbeddingSet, b: EmbeddingSet) -> float:
    """Unbiased MMD^2 with the cubic polynomial kernel (x.y/D + 1)^3.

    Equal-size sets use the U-statistic form that also removes the paired
    i == j cross terms, so identical sets score exactly zero.
    """
    _check_pair(a, b)
    x, y = a.vectors, b.vectors
    d = x.shape[1]
    kxx = (x @ x.T / d + 1.0) ** 3
    kyy = (y @ y.T / d + 1.0) ** 3
    kxy = (x @ y.T / d + 1.0) ** 3
    m, n = len(x), len(y)
    sum_xx = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    sum_yy = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    if m == n:
        cross = (kxy.sum() - np.trace(kxy)) / (m * (m - 1))
    else:
        cross = kxy.mean()
    return float(sum_xx + sum_yy - 2.0 * cross)


def alignment(pred_labels: np.ndarray, ref_labels: np.ndarray,
              n_classes: int | None = None) -> tuple[float, float]:
    """(mIoU over classes present in either map, pixel accuracy)."""
    pred = np.asarray(pred_labels)
    ref = np.asarray(ref_labels)
    if pred.shape != ref.shape:
        raise InvalidInputError(f"label maps disagree on shape: {pred.shape} vs {ref.shape}")
    n_classes = n_classes or int(max(pred.max(), ref.max())) + 1
    cm = np.bincount(ref.reshape(-1) * n_classes + pred.reshape(-1),
                     minlength=n_classes * n_classes).reshape(n_classes, n_classes)
    present = (cm.sum(axis=0) + cm.sum(axis=1)) > 0
    inter = np.diag(cm)
    union = cm.sum(axis=0) + cm.sum(axis=1) - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
    miou = float(iou[present].mean())
    acc = float(inter.sum() / cm.sum())
    return miou, acc


def mean_pairwise_cosine(vectors: np.ndarray) -> float:
    v = np.asarray(vectors, dtype=np.float64)
    if len(v) < 2:
        raise InvalidInputError("need at least 2 embeddings")
    v = v / np.linalg.norm(v, axis=1, keepdims=True)
    sims = v @ v.T
    n = len(v)
    return float((sims.sum() - n) / (n * (n - 1)))


# -- proxy embedders ----------------------------------------------------------

def _module_hash(module: nn.Module) -> str:
    h = hashlib.sha256()
    for k in sorted(module.state_dict()):
        h.update(k.encode())
        h.update(module.state_dict()[k].detach().cpu().numpy().tobytes())
    return h.hexdigest()[:12]


class ProxyEmbedder(nn.Module):
    """Fixed-seed random-projection conv embedder for RGB distributions.

    Never trained; the seed pins its weights so numbers are reproducible.
    """

    def __init__(self, out_dim: int = 64, seed: int = 1234, in_channels: int = 3):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)

        def conv(cin, cout, stride):
            layer = EqualConv2d(cin, cout, 3, stride=stride, padding=1)
            with torch.no_grad():
                layer.weight.copy_(torch.randn(layer.weight.shape, generator=gen))
            return layer

        self.conv1 = conv(in_channels, 16, 2)
        self.conv2 = conv(16, 32, 2)
        self.conv3 = conv(32, out_dim, 2)
        for p in self.parameters():
            p.requires_grad_(False)
        self.embedder_id = f"proxy-conv:{_module_hash(self)}"

    @torch.no_grad()
    def forward(self, images: torch.Tensor) -> torch.Tensor:
        h = leaky_relu(self.conv1(images))
        h = leaky_relu(self.conv2(h))
        h = leaky_relu(self.conv3(h))
        return h.mean(dim=(2, 3))

    def embed(self, images: torch.Tensor, batch: int = 64) -> EmbeddingSet:
        outs = [self(chunk) for chunk in images.split(batch)]
        return EmbeddingSet(torch.cat(outs).cpu().numpy(), self.embedder_id)


class DiscriminatorEmbedder:
    """Early conv levels of a (trained) discriminator as a mask embedder."""

    def __init__(self, disc: Discriminator, n_levels: int = 2):
        self.disc = disc
        self.n_levels = n_levels
        self.embedder_id = f"disc-l{n_levels}:{_module_hash(disc)}"

    @torch.no_grad()
    def embed(self, maps: torch.Tensor, batch: int = 64) -> EmbeddingSet:
        outs = [self.disc.features(chunk, self.n_levels) for chunk in maps.split(batch)]
        return EmbeddingSet(torch.cat(outs).cpu().numpy(), self.embedder_id)


class PatchFeatureDistance(nn.Module):
    """Perceptual proxy distance: multi-layer patch features of label maps,
    channel normalized, squared differences averaged over pixels and layers."""

    def __init__(self, in_channels: int = N_ACCESSORY_CLASSES, seed: int = 4321):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)

        def conv(cin, cout, stride):
            layer = EqualConv2d(cin, cout, 3, stride=stride, padding=1)
            with torch.no_grad():
                layer.weight.copy_(torch.randn(layer.weight.shape, generator=gen))
            return layer

        self.conv1 = conv(in_channels, 16, 1)
        self.conv2 = conv(16, 32, 2)
        for p in self.parameters():
            p.requires_grad_(False)

    @torch.no_grad()
    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        def feats(x):
            h1 = leaky_relu(self.conv1(x))
            h2 = leaky_relu(self.conv2(h1))
            return [h1, h2]

        def normalize(h):
            return h * torch.rsqrt(h.pow(2).sum(dim=1, keepdim=True) + 1e-10)

        total = 0.0
        for fa, fb in zip(feats(a), feats(b)):
            total = total + (normalize(fa) - normalize(fb)).pow(2).sum(dim=1).mean(dim=(1, 2))
        return total


def normalized_hamming(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Fraction of differing argmax labels (batch-wise)."""
    la = a.argmax(dim=1)
    lb = b.argmax(dim=1)
    return (la != lb).float().mean(dim=(1, 2))


# -- generator-facing protocols ------------------------------------------------

def fvid_poses(n_poses: int, yaw_range: float = 1.0, camera_cfg=None) -> list[CameraPose]:
    """Evenly spaced yaw sweep used for view-consistency scoring."""
    yaws = np.linspace(-yaw_range, yaw_range, n_poses)
    return [pose_from_angles(float(y), 0.0, camera_cfg) for y in yaws]


def fvid(generator, bundle, poses: list[CameraPose], embedder: ProxyEmbedder,
         accs: bool = False) -> float:
    """Mean pairwise cosine of identity embeddings over a pose sweep."""
    if len(poses) < 2:
        raise InvalidInputError("need at least 2 poses")
    images = []
    with torch.no_grad():
        for pose in poses:
            out = generator.synthesize(bundle, pose, accs=accs)
            images.append(out.rgb)
    emb = embedder.embed(torch.cat(images))
    return mean_pairwise_cosine(emb.vectors)


def sig_diversity(generator, bundle, n_pairs: int, distance_fn=None,
                  seed: int = 0) -> float:
    """Mean perceptual-proxy distance between accessory maps generated for one
    fixed portrait identity."""
    if n_pairs < 1:
        raise InvalidInputError("n_pairs must be >= 1")
    distance_fn = distance_fn or PatchFeatureDistance().to(
        next(generator.parameters()).dtype)
    rng = torch.Generator().manual_seed(seed)
    pose = generator.fixed_conditioning_pose()
    dtype = next(generator.parameters()).dtype
    with torch.no_grad():
        tri = generator.plane_generator(bundle.w_por_g)
        dists = []
        for _ in range(n_pairs):
            z = torch.randn(2, generator.cfg.latent.d_z, generator=rng, dtype=dtype)
            codes = generator.mapper.sample_accessory_code(z, pose)
            maps = []
            for k in range(2):
                _f, s_acc, _m = generator.accessory_branch(
                    tri, codes[k: k + 1], pose)
                onehot = torch.zeros_like(s_acc.probs)
                onehot.scatter_(1, s_acc.argmax_labels().unsqueeze(1), 1.0)
                maps.append(onehot)
            dists.append(float(distance_fn(maps[0], maps[1]).mean()))
    return float(np.mean(dists))


# -- color-quantized desk parser -------------------------------------------------

def color_quantize_parser(rgb: torch.Tensor, colors: dict[str, tuple[int, int, int]],
                          class_names: tuple[str, ...]) -> np.ndarray:
    """Nearest-class-color label map; a stand-in parser for flat-shaded data."""
    palette = np.array([colors[name] if name in colors else (0, 0, 0)
                        for name in class_names], dtype=np.float64)
    img = ((rgb.detach().clamp(-1, 1) + 1) * 127.5).cpu().numpy()
    img = img.transpose(0, 2, 3, 1)  # (B, H, W, 3)
    d = ((img[..., None, :] - palette[None, None, None]) ** 2).sum(axis=-1)
    return d.argmin(axis=-1).astype(np.uint8)


# -- report --------------------------------------------------------------------

KID_REPORT_SCALE = 1000.0


@dataclass
class MetricReport:
    fid: float
    kid: float
    kid_scale: float
    fmd: float
    miou: float
    acc: float
    fvid: float
    sig_diversity: float
    n_quality_samples: int
    n_alignment_pairs: int
    n_fvid_identities: int
    n_fvid_poses: int
    n_fmd_samples: int
    image_embedder: str
    mask_embedder: str

    def to_json(self, cfg_echo: dict | None = None) -> str:
        data = dataclasses.asdict(self)
        if cfg_echo is not None:
            data["config"] = cfg_echo
        return json.dumps(data, indent=2, sort_keys=True)
