"""Latent mapping: Gaussian noise + camera conditioning -> four style codes.

The mapper emits one code per factor (portrait/accessory x geometry/texture).
The accessory geometry code can come from two sources: an identity-independent
head, or that head re-read through cross-attention over identity tokens derived
from the portrait geometry code. During training the source is picked per
sample with probability ``p``; at inference the identity-independent source is
always used and the conditioning pose is pinned to a fixed camera.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .camera import COND_DIM, CameraPose
from .config import LatentConfig
from .errors import ConfigError, InvalidInputError
from .layers import EqualLinear, PixelNorm, leaky_relu

IDENTITY_UNCORRELATED = "identity_uncorrelated"
IDENTITY_CORRELATED = "identity_correlated"


@dataclass
class LatentBundle:
    """The four factorized style codes for one batch of samples."""

    w_por_g: torch.Tensor  # (B, d_w)
    w_acc_g: torch.Tensor
    w_por_t: torch.Tensor
    w_acc_t: torch.Tensor
    acc_g_source: tuple[str, ...]
    pose_conditioning: torch.Tensor  # (B, 25)

    def __post_init__(self):
        dims = {t.shape for t in (self.w_por_g, self.w_acc_g, self.w_por_t, self.w_acc_t)}
        if len(dims) != 1:
            raise InvalidInputError(f"style codes disagree on shape: {dims}")
        if len(self.acc_g_source) != self.w_por_g.shape[0]:
            raise InvalidInputError("acc_g_source must be recorded per sample")

    @property
    def batch_size(self) -> int:
        return self.w_por_g.shape[0]

    def replace_accessory_geometry(self, w_acc_g: torch.Tensor, source: str) -> "LatentBundle":
        return LatentBundle(self.w_por_g, w_acc_g, self.w_por_t, self.w_acc_t,
                            (source,) * self.batch_size, self.pose_conditioning)


class IdentityCrossAttention(nn.Module):
    """Single-query attention of an accessory code over identity tokens.

    Computes softmax((Q a)(K T)^T) V T, where ``a`` is the accessory code and
    ``T`` the identity token stack acting as both key and value.
    """

    def __init__(self, code_dim: int, token_dim: int, attn_dim: int | None = None):
        super().__init__()
        attn_dim = attn_dim or code_dim
        self.q_proj = nn.Parameter(torch.randn(attn_dim, code_dim) / code_dim ** 0.5)
        self.k_proj = nn.Parameter(torch.randn(attn_dim, token_dim) / token_dim ** 0.5)
        self.v_proj = nn.Parameter(torch.randn(code_dim, token_dim) / token_dim ** 0.5)

    def forward(self, code: torch.Tensor, tokens: torch.Tensor,
                return_weights: bool = False):
        if tokens.ndim != 3 or tokens.shape[1] == 0:
            raise InvalidInputError("identity token sequence must be non-empty (B, T, D)")
        q = code @ self.q_proj.T                       # (B, A)
        k = torch.einsum("btd,ad->bta", tokens, self.k_proj)
        scores = torch.einsum("ba,bta->bt", q, k)
        attn = torch.softmax(scores, dim=-1)
        v = torch.einsum("btd,cd->btc", tokens, self.v_proj)
        out = torch.einsum("bt,btc->bc", attn, v)
        if return_weights:
            return out, attn
        return out


class LatentMapper(nn.Module):
    def __init__(self, cfg: LatentConfig):
        super().__init__()
        self.cfg = cfg
        self.norm = PixelNorm()
        layers: list[nn.Module] = []
        in_dim = cfg.d_z + COND_DIM
        for _ in range(cfg.n_layers):
            layers.append(EqualLinear(in_dim, cfg.hidden))
            in_dim = cfg.hidden
        self.trunk = nn.ModuleList(layers)
        self.head_por_g = EqualLinear(cfg.hidden, cfg.d_w)
        self.head_acc_g = EqualLinear(cfg.hidden, cfg.d_w)
        self.head_por_t = EqualLinear(cfg.hidden, cfg.d_w)
        self.head_acc_t = EqualLinear(cfg.hidden, cfg.d_w)
        self.identity_proj = EqualLinear(cfg.d_w, cfg.n_identity_tokens * cfg.d_w)
        self.cross_attention = IdentityCrossAttention(cfg.d_w, cfg.d_w)

    def _conditioning(self, pose: CameraPose | torch.Tensor, batch: int,
                      like: torch.Tensor) -> torch.Tensor:
        if isinstance(pose, CameraPose):
            vec = torch.as_tensor(np.asarray(pose.conditioning_vector()),
                                  dtype=like.dtype, device=like.device)
            return vec.unsqueeze(0).expand(batch, -1)
        cond = pose.to(dtype=like.dtype, device=like.device)
        if cond.ndim == 1:
            cond = cond.unsqueeze(0).expand(batch, -1)
        if cond.shape != (batch, COND_DIM):
            raise ConfigError(f"pose conditioning must be (B, {COND_DIM}), got {tuple(cond.shape)}")
        return cond

    def backbone(self, z: torch.Tensor, pose: CameraPose | torch.Tensor) -> torch.Tensor:
        if z.ndim == 1:
            z = z.unsqueeze(0)
        if z.shape[-1] != self.cfg.d_z:
            raise ConfigError(f"noise dim {z.shape[-1]} != configured d_z {self.cfg.d_z}")
        cond = self._conditioning(pose, z.shape[0], z)
        h = torch.cat([self.norm(z), cond], dim=-1)
        for layer in self.trunk:
            h = leaky_relu(layer(h))
        return h

    def identity_tokens(self, w_por_g: torch.Tensor) -> torch.Tensor:
        b = w_por_g.shape[0]
        return self.identity_proj(w_por_g).reshape(b, self.cfg.n_identity_tokens, self.cfg.d_w)

    def map_latents(self, z: torch.Tensor, pose: CameraPose | torch.Tensor,
                    p: float, rng: torch.Generator | None = None) -> LatentBundle:
        """Map noise to a LatentBundle; one uniform draw per sample picks the
        accessory-geometry source (identity-correlated with probability p)."""
        if not 0.0 <= p <= 1.0:
            raise InvalidInputError(f"p must be in [0, 1], got {p}")
        if z.ndim == 1:
            z = z.unsqueeze(0)
        h = self.backbone(z, pose)
        cond = self._conditioning(pose, z.shape[0], z)
        w_por_g = self.head_por_g(h)
        w_acc_star = self.head_acc_g(h)
        w_por_t = self.head_por_t(h)
        w_acc_t = self.head_acc_t(h)

        b = z.shape[0]
        if p == 0.0 and rng is None:
            correlated = torch.zeros(b, dtype=torch.bool, device=z.device)
        else:
            if rng is None:
                raise InvalidInputError("rng required when 0 < p")
            u = torch.rand(b, generator=rng, device=z.device)
            correlated = u < p

        if correlated.any():
            tokens = self.identity_tokens(w_por_g)
            w_corr = self.cross_attention(w_acc_star, tokens)
            mask = correlated.unsqueeze(-1).to(w_corr.dtype)
            w_acc_g = mask * w_corr + (1.0 - mask) * w_acc_star
        else:
            w_acc_g = w_acc_star
        sources = tuple(IDENTITY_CORRELATED if c else IDENTITY_UNCORRELATED
                        for c in correlated.tolist())
        return LatentBundle(w_por_g, w_acc_g, w_por_t, w_acc_t, sources, cond)

    def inference_condition(self, z: torch.Tensor, fixed_pose: CameraPose) -> LatentBundle:
        """Inference mapping: fixed conditioning pose, identity-independent
        accessory geometry regardless of the render pose."""
        return self.map_latents(z, fixed_pose, p=0.0, rng=None)

    def sample_accessory_code(self, z: torch.Tensor, pose: CameraPose | torch.Tensor) -> torch.Tensor:
        """Identity-independent accessory geometry code for fresh noise."""
        return self.head_acc_g(self.backbone(z, pose))
