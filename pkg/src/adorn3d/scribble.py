"""Scribble-to-accessory inversion with a vector-quantized encoder.

A hand-drawn accessory label map plus the wearer's projected features are
encoded into a continuous accessory geometry code, then snapped onto the
nearest entry of a learned codebook, so inference always lands on codes the
frozen accessory generator understands. Training uses two cycles against the
frozen generator: segmap -> code -> segmap (reconstruction) and
code -> segmap -> code (latent regression), plus commitment terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage
from torch import nn

from .camera import pose_from_angles
from .config import PipelineConfig, ScribbleConfig
from .errors import InvalidInputError, TrainingFault
from .layers import EqualConv2d, EqualLinear, leaky_relu
from .render import N_ACCESSORY_CLASSES


class AccessoryCodebook(nn.Module):
    """K learned accessory-geometry codes with usage bookkeeping."""

    def __init__(self, size: int, dim: int):
        super().__init__()
        if size < 2:
            raise InvalidInputError("codebook needs at least 2 entries")
        self.entries = nn.Parameter(torch.randn(size, dim) * 0.5)
        self.register_buffer("usage", torch.zeros(size, dtype=torch.long))
        self.register_buffer("last_used", torch.zeros(size, dtype=torch.long))

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def nearest(self, w: torch.Tensor) -> torch.Tensor:
        """Index of the closest entry per row; ties break to the lowest index."""
        if w.shape[-1] != self.entries.shape[1]:
            raise InvalidInputError("code dimension does not match codebook")
        # explicit squared distances (no matmul shortcut) so exactly
        # equidistant entries compare bit-equal and argmin picks the first
        d = (w[:, None, :] - self.entries[None]).pow(2).sum(dim=-1)
        return d.argmin(dim=-1)

    def record_usage(self, indices: torch.Tensor, step: int) -> None:
        self.usage.scatter_add_(0, indices, torch.ones_like(indices))
        self.last_used.scatter_(0, indices, int(step))

    def reseed_dead(self, replacement_pool: torch.Tensor, step: int,
                    stale_after: int, rng: torch.Generator) -> int:
        """Reinitialize entries unused for stale_after steps from batch codes."""
        dead = (step - self.last_used) > stale_after
        n_dead = int(dead.sum())
        if n_dead == 0 or len(replacement_pool) == 0:
            return 0
        picks = torch.randint(0, len(replacement_pool), (n_dead,), generator=rng)
        with torch.no_grad():
            self.entries[dead] = replacement_pool[picks].detach()
        self.last_used[dead] = step
        return n_dead


def quantize(w: torch.Tensor, codebook: AccessoryCodebook) -> tuple[torch.Tensor, torch.Tensor]:
    """Snap codes to their nearest entries; gradients pass straight through.

    Written as entry + (w - w.detach()) so the forward value is bitwise the
    codebook row (w - w.detach() is exactly zero), while d/dw stays identity.
    """
    idx = codebook.nearest(w)
    entry = codebook.entries[idx]
    passthrough = entry.detach() + (w - w.detach())
    return passthrough, idx


def commitment_loss(w: torch.Tensor, entry: torch.Tensor) -> torch.Tensor:
    """Encoder-side pull toward the chosen entry; zero iff w equals it."""
    return F.mse_loss(w, entry.detach())


def codebook_loss(w: torch.Tensor, entry: torch.Tensor) -> torch.Tensor:
    return F.mse_loss(entry, w.detach())


class ScribbleEncoder(nn.Module):
    """(accessory label map, projected portrait features) -> geometry code.

    One-hot scribble classes and a 1x1-projected feature image are summed,
    then strided convolutions reduce to 4x4 before an MLP head.
    """

    def __init__(self, cfg: ScribbleConfig, feature_channels: int,
                 resolution: int, code_dim: int):
        super().__init__()
        c = cfg.encoder_channels
        self.resolution = resolution
        self.scribble_in = EqualConv2d(N_ACCESSORY_CLASSES, c, 3, padding=1)
        self.feature_in = EqualConv2d(feature_channels, c, 1)
        downs = []
        res = resolution
        while res > 4:
            downs.append(EqualConv2d(c, c, 3, stride=2, padding=1))
            res //= 2
        self.downs = nn.ModuleList(downs)
        self.fc1 = EqualLinear(c * res * res, 2 * code_dim)
        self.fc2 = EqualLinear(2 * code_dim, code_dim)

    def forward(self, scribble_onehot: torch.Tensor, f_por: torch.Tensor) -> torch.Tensor:
        if scribble_onehot.shape[-1] != self.resolution:
            raise InvalidInputError(
                f"scribble resolution {scribble_onehot.shape[-1]} != {self.resolution}")
        if f_por.shape[-2:] != scribble_onehot.shape[-2:]:
            raise InvalidInputError("scribble and portrait features disagree on size")
        h = leaky_relu(self.scribble_in(scribble_onehot) + self.feature_in(f_por))
        for down in self.downs:
            h = leaky_relu(down(h))
        h = leaky_relu(self.fc1(h.reshape(h.shape[0], -1)))
        return self.fc2(h)


def labels_to_onehot(labels: torch.Tensor, n_classes: int = N_ACCESSORY_CLASSES,
                     dtype: torch.dtype = torch.float32) -> torch.Tensor:
    if labels.max() >= n_classes:
        raise InvalidInputError("label map contains out-of-range classes")
    return F.one_hot(labels.long(), n_classes).permute(0, 3, 1, 2).to(dtype)


def augment_scribble(labels: np.ndarray, rng: np.random.Generator,
                     max_radius: int = 2) -> np.ndarray:
    """Random per-map erosion or dilation, approximating hand-drawn slop."""
    radius = int(rng.integers(1, max_radius + 1))
    dilate = bool(rng.random() < 0.5)
    structure = np.ones((3, 3), dtype=bool)
    out = np.zeros_like(labels)
    for cls in np.unique(labels):
        if cls == 0:
            continue
        mask = labels == cls
        if dilate:
            mask = ndimage.binary_dilation(mask, structure, iterations=radius)
        else:
            mask = ndimage.binary_erosion(mask, structure, iterations=radius)
        out[mask] = cls
    return out


@dataclass
class ScribbleBatch:
    target_labels: torch.Tensor    # (B, H, W) accessory class indices
    encoder_labels: torch.Tensor   # augmented copy fed to the encoder
    f_por: torch.Tensor            # (B, C_f, H, W)
    portrait_planes: torch.Tensor  # (B, 3, C, H, W) frozen portrait tri-planes
    random_codes: torch.Tensor     # (B, d_w) for the latent cycle
    poses: list                    # render poses shared by targets and cycles


@dataclass
class ScribbleLosses:
    total: float
    reconstruction: float
    commitment: float
    latent: float
    codebook: float


class ScribbleTrainer:
    """Optimizes the encoder + codebook against a frozen generator."""

    def __init__(self, generator, cfg: PipelineConfig, seed: int = 0, lr: float = 1e-3):
        self.generator = generator
        self.cfg = cfg
        dtype = next(generator.parameters()).dtype
        self.encoder = ScribbleEncoder(cfg.scribble, cfg.render.feature_channels,
                                       cfg.render.resolution, cfg.latent.d_w).to(dtype)
        self.codebook = AccessoryCodebook(cfg.scribble.codebook_size,
                                          cfg.latent.d_w).to(dtype)
        self.optimizer = torch.optim.Adam(
            list(self.encoder.parameters()) + list(self.codebook.parameters()), lr=lr)
        self.torch_rng = torch.Generator().manual_seed(seed)
        self.np_rng = np.random.default_rng(seed)
        self.step_count = 0

    def _random_pose(self):
        cam = self.cfg.camera
        return pose_from_angles(float(self.np_rng.uniform(-cam.yaw_range, cam.yaw_range)),
                                float(self.np_rng.uniform(-cam.pitch_range, cam.pitch_range)),
                                cam)

    def make_batch(self, batch_size: int) -> ScribbleBatch:
        """Generated (segmap, wearer) pairs from the frozen generator."""
        g = self.generator
        dtype = next(g.parameters()).dtype
        d_z = self.cfg.latent.d_z
        poses = [self._random_pose() for _ in range(batch_size)]
        with torch.no_grad():
            z_por = torch.randn(batch_size, d_z, generator=self.torch_rng, dtype=dtype)
            z_acc = torch.randn(batch_size, d_z, generator=self.torch_rng, dtype=dtype)
            z_rand = torch.randn(batch_size, d_z, generator=self.torch_rng, dtype=dtype)
            cond = g.fixed_conditioning_pose()
            bundle = g.mapper.inference_condition(z_por, cond)
            w_acc = g.mapper.sample_accessory_code(z_acc, cond)
            w_rand = g.mapper.sample_accessory_code(z_rand, cond)
            tri = g.plane_generator(bundle.w_por_g)
            f_por = g.renderer.volume_render(tri, poses)
            _f_acc, s_acc, _m = g.accessory_branch(tri, w_acc, poses)
            target = s_acc.argmax_labels()

        aug = np.stack([augment_scribble(t, self.np_rng,
                                         self.cfg.scribble.max_morph_radius)
                        for t in target.cpu().numpy()])
        return ScribbleBatch(target, torch.as_tensor(aug), f_por.features.detach(),
                             tri.planes.detach(), w_rand, poses)

    def _accessory_logits(self, codes: torch.Tensor, portrait_planes: torch.Tensor,
                          poses) -> torch.Tensor:
        from .geometry import ROLE_PORTRAIT, TriPlane
        g = self.generator
        tri = TriPlane(portrait_planes, ROLE_PORTRAIT)
        acc_tri = g.adapter(tri, codes)
        f_acc = g.renderer.volume_render(acc_tri, poses)
        return g.renderer.accessory_classifier(f_acc.features)

    def step(self, batch: ScribbleBatch) -> ScribbleLosses:
        cfg = self.cfg.scribble
        g = self.generator
        dtype = next(g.parameters()).dtype
        poses = batch.poses  # cycles must re-render under the target's viewpoint

        onehot = labels_to_onehot(batch.encoder_labels, dtype=dtype)
        w = self.encoder(onehot, batch.f_por)
        entry, idx = quantize(w, self.codebook)
        logits = self._accessory_logits(entry, batch.portrait_planes, poses)
        recon = F.cross_entropy(logits, batch.target_labels.long())

        with torch.no_grad():
            rand_logits = self._accessory_logits(batch.random_codes,
                                                 batch.portrait_planes, poses)
            rand_labels = rand_logits.argmax(dim=1)
        w_hat = self.encoder(labels_to_onehot(rand_labels, dtype=dtype), batch.f_por)
        latent = F.smooth_l1_loss(w_hat, batch.random_codes)

        raw_entry = self.codebook.entries[idx]
        commit = commitment_loss(w, raw_entry)
        embed = codebook_loss(w, raw_entry)
        total = recon + cfg.alpha_commit * commit + cfg.beta_latent * latent + embed

        if not torch.isfinite(total):
            raise TrainingFault("non-finite scribble loss", step=self.step_count,
                                diagnostics={"recon": float(recon), "latent": float(latent)})

        self.optimizer.zero_grad(set_to_none=True)
        total.backward()
        self.optimizer.step()
        self.step_count += 1
        self.codebook.record_usage(idx, self.step_count)
        self.codebook.reseed_dead(w.detach(), self.step_count,
                                  cfg.dead_entry_steps, self.torch_rng)
        return ScribbleLosses(float(total.detach()), float(recon.detach()),
                              float(commit.detach()), float(latent.detach()),
                              float(embed.detach()))

    def invert(self, scribble_labels: torch.Tensor, f_por: torch.Tensor
               ) -> tuple[torch.Tensor, torch.Tensor]:
        """Inference: encode + quantize; the result is an exact codebook row."""
        dtype = next(self.encoder.parameters()).dtype
        with torch.no_grad():
            w = self.encoder(labels_to_onehot(scribble_labels, dtype=dtype), f_por)
            idx = self.codebook.nearest(w)
            return self.codebook.entries[idx].detach(), idx
