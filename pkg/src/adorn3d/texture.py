"""Mask-gated fusion of projected features and dual-style texture rendering.

Portrait and accessory feature images are blended by binary accessory masks
and encoded into a structural prior. The texture renderer upsamples that
prior through blocks that evaluate the same convolutions under two style
modulations (portrait / accessory), recombine the two results with the mask,
and apply a semantics-conditioned normalization. All per-block operators are
spatially local, so a style only influences pixels within its mask plus the
convolutional receptive field accumulated by later blocks.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .classes import DECORATIVE_CLASSES, PORTRAIT_INDEX
from .config import TextureConfig
from .errors import InvalidInputError
from .layers import ChannelRMSNorm, EqualConv2d, ModulatedConv2d, leaky_relu, upsample2x
from .render import N_ACCESSORY_CLASSES, N_PORTRAIT_CLASSES, SemanticMap

SCHEME_ACCESSORY = "accessory"
SCHEME_NONE = "none"
SCHEME_DECORATIVE = "decorative"


def derive_accessory_mask(s_acc: SemanticMap, accs: bool) -> torch.Tensor:
    """Binary (B, 1, H, W) mask of accessory pixels; all zeros when accs is off."""
    b, _, h, w = s_acc.probs.shape
    if not accs:
        return torch.zeros(b, 1, h, w, dtype=s_acc.probs.dtype, device=s_acc.probs.device)
    labels = s_acc.argmax_labels()
    return (labels != 0).to(s_acc.probs.dtype).unsqueeze(1)


def decorative_mask(s_por: SemanticMap,
                    class_names: tuple[str, ...] = DECORATIVE_CLASSES) -> torch.Tensor:
    """Binary mask over the given portrait classes (argmax membership)."""
    labels = s_por.argmax_labels()
    mask = torch.zeros_like(labels, dtype=torch.bool)
    for name in class_names:
        mask |= labels == PORTRAIT_INDEX[name]
    return mask.to(s_por.probs.dtype).unsqueeze(1)


def select_region_scheme(rng: np.random.Generator, accs: bool,
                         decorative_prob: float = 0.5) -> str:
    """Training-time choice of which region the secondary style paints."""
    if accs:
        return SCHEME_ACCESSORY
    return SCHEME_DECORATIVE if rng.random() < decorative_prob else SCHEME_NONE


def resolve_mask_overlaps(masks: list[torch.Tensor]) -> list[torch.Tensor]:
    """Make masks pairwise disjoint; later masks win overlapping pixels."""
    resolved = []
    claimed = torch.zeros_like(masks[-1]) if masks else None
    for m in reversed(masks):
        eff = m * (1.0 - claimed)
        claimed = claimed + eff
        resolved.append(eff)
    resolved.reverse()
    return resolved


def combine_features(f_por: torch.Tensor,
                     accessories: list[tuple[torch.Tensor, torch.Tensor]]) -> torch.Tensor:
    """Masked blend of one portrait feature image with N accessory images.

    combined = (1 - union(m)) * f_por + sum_n m_n * f_acc_n, with overlaps
    resolved in painter's order first. An empty list returns f_por itself.
    """
    if not accessories:
        return f_por
    feats = []
    masks = []
    for f_acc, m in accessories:
        if f_acc.shape != f_por.shape or m.shape[-2:] != f_por.shape[-2:]:
            raise InvalidInputError("accessory feature/mask dims must match portrait features")
        feats.append(f_acc)
        masks.append(m)
    masks = resolve_mask_overlaps(masks)
    union = torch.stack(masks).sum(dim=0)
    out = (1.0 - union) * f_por
    for f_acc, m in zip(feats, masks):
        out = out + m * f_acc
    return out


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = EqualConv2d(channels, channels, 3, padding=1)
        self.conv2 = EqualConv2d(channels, channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.conv2(leaky_relu(self.conv1(x)))
        return (x + h) / np.sqrt(2.0)


class StructureEncoder(nn.Module):
    """Mask-combined feature images -> structural prior for texture rendering."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.entry = EqualConv2d(in_channels, out_channels, 1)
        self.res1 = ResidualBlock(out_channels)
        self.res2 = ResidualBlock(out_channels)

    def forward(self, combined: torch.Tensor) -> torch.Tensor:
        return self.res2(self.res1(leaky_relu(self.entry(combined))))


class SemanticAdaptiveNorm(nn.Module):
    """Per-pixel RMS normalization with gain/bias predicted from semantics.

    The parameter-free normalization uses no spatial statistics, keeping the
    stage local; the semantic stream never carries style information.
    """

    def __init__(self, channels: int, label_channels: int, hidden: int = 32):
        super().__init__()
        self.norm = ChannelRMSNorm()
        self.shared = EqualConv2d(label_channels, hidden, 3, padding=1)
        self.to_gain = EqualConv2d(hidden, channels, 3, padding=1)
        self.to_bias = EqualConv2d(hidden, channels, 3, padding=1)

    def forward(self, x: torch.Tensor, semantics: torch.Tensor) -> torch.Tensor:
        if semantics.shape[-2:] != x.shape[-2:]:
            semantics = F.interpolate(semantics, size=x.shape[-2:], mode="nearest")
        h = leaky_relu(self.shared(semantics))
        return self.norm(x) * (1.0 + self.to_gain(h)) + self.to_bias(h)


class RegionTextureBlock(nn.Module):
    """x2 upsampling block whose kernels run once per style.

    The portrait-styled result fills the unmasked region; each masked region
    takes the result modulated by its own style. Regions are recombined by
    the (disjoint) masks, then normalized under semantic conditioning.
    """

    def __init__(self, in_channels: int, out_channels: int, style_dim: int,
                 label_channels: int):
        super().__init__()
        self.conv1 = ModulatedConv2d(in_channels, out_channels, style_dim)
        self.conv2 = ModulatedConv2d(out_channels, out_channels, style_dim)
        self.semantic_norm = SemanticAdaptiveNorm(out_channels, label_channels)

    def styled_path(self, x: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        h = leaky_relu(self.conv1(x, style))
        return leaky_relu(self.conv2(h, style))

    def forward(self, x: torch.Tensor, regions: list[tuple[torch.Tensor, torch.Tensor]],
                w_por_t: torch.Tensor, semantics: torch.Tensor) -> torch.Tensor:
        x = upsample2x(x)
        por = self.styled_path(x, w_por_t)
        union = torch.zeros_like(por[:, :1])
        styled = []
        for mask, style in regions:
            mask = F.interpolate(mask, size=x.shape[-2:], mode="nearest")
            union = union + mask
            styled.append((mask, self.styled_path(x, style)))
        blended = (1.0 - union) * por
        for mask, feat in styled:
            blended = blended + mask * feat
        return self.semantic_norm(blended, semantics)


class TextureRenderer(nn.Module):
    """Structural prior + per-region texture styles + masks -> RGB in [-1, 1]."""

    def __init__(self, cfg: TextureConfig, style_dim: int):
        super().__init__()
        self.cfg = cfg
        label_channels = N_PORTRAIT_CLASSES + N_ACCESSORY_CLASSES
        blocks = []
        in_ch = cfg.base_channels
        for _ in range(cfg.n_blocks):
            blocks.append(RegionTextureBlock(in_ch, cfg.block_channels, style_dim,
                                             label_channels))
            in_ch = cfg.block_channels
        self.blocks = nn.ModuleList(blocks)
        self.to_rgb = EqualConv2d(in_ch, 3, 1)

    def forward(self, f_fused: torch.Tensor,
                regions: list[tuple[torch.Tensor, torch.Tensor]],
                w_por_t: torch.Tensor,
                s_por: SemanticMap, s_acc: SemanticMap) -> torch.Tensor:
        """regions: pairwise-disjoint (mask, style) pairs at the fused resolution."""
        semantics = torch.cat([s_por.probs, s_acc.probs], dim=1)
        x = f_fused
        for block in self.blocks:
            x = block(x, regions, w_por_t, semantics)
        return torch.tanh(self.to_rgb(x))

    def render_texture(self, f_fused: torch.Tensor, m_acc: torch.Tensor,
                       w_por_t: torch.Tensor, w_acc_t: torch.Tensor,
                       s_por: SemanticMap, s_acc: SemanticMap) -> torch.Tensor:
        """Single accessory mask/style convenience wrapper."""
        return self.forward(f_fused, [(m_acc, w_acc_t)], w_por_t, s_por, s_acc)

    def receptive_field_radius(self) -> int:
        """Output-resolution pixels a mask-boundary style change can reach.

        The first blend confines a style strictly to its mask; each later
        block spreads it by its conv taps at that block's resolution, scaled
        to the output resolution. The 1x1 RGB head adds nothing.
        """
        radius = 0.0
        for depth in range(1, len(self.blocks)):
            spread = 2 * 1  # two 3x3 convs, 1 pixel each
            scale = 2 ** (len(self.blocks) - 1 - depth)
            radius += spread * scale
        return int(np.ceil(radius))
