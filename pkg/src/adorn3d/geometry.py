"""Tri-plane geometry synthesis for portraits and derived accessories.

A style-modulated convolutional backbone grows a learned constant to the
plane resolution and emits three axis-aligned feature planes. A compact
three-branch adapter maps each portrait plane to the matching accessory
plane, conditioned on the accessory geometry code; branch i never reads
plane j != i.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .config import GeometryConfig
from .errors import InvalidInputError
from .layers import ModulatedConv2d, leaky_relu, upsample2x

ROLE_PORTRAIT = "portrait"
ROLE_ACCESSORY = "accessory"


@dataclass
class TriPlane:
    planes: torch.Tensor  # (B, 3, C, H, W)
    role: str

    def __post_init__(self):
        if self.planes.ndim != 5 or self.planes.shape[1] != 3:
            raise InvalidInputError(f"planes must be (B, 3, C, H, W), got {tuple(self.planes.shape)}")
        if self.role not in (ROLE_PORTRAIT, ROLE_ACCESSORY):
            raise InvalidInputError(f"unknown tri-plane role {self.role!r}")

    @property
    def channels(self) -> int:
        return self.planes.shape[2]

    @property
    def resolution(self) -> int:
        return self.planes.shape[3]


class PlaneGenerator(nn.Module):
    """Backbone G: portrait geometry code -> portrait tri-plane."""

    BASE_RES = 4

    def __init__(self, cfg: GeometryConfig, style_dim: int):
        super().__init__()
        if cfg.plane_resolution % self.BASE_RES != 0:
            raise InvalidInputError("plane_resolution must be a multiple of 4")
        self.cfg = cfg
        ch = cfg.backbone_channels
        self.constant = nn.Parameter(torch.randn(1, ch, self.BASE_RES, self.BASE_RES))
        n_levels = (cfg.plane_resolution // self.BASE_RES).bit_length() - 1
        self.entry = ModulatedConv2d(ch, ch, style_dim)
        blocks = []
        for _ in range(n_levels):
            blocks.append(nn.ModuleList(
                [ModulatedConv2d(ch, ch, style_dim) for _ in range(cfg.backbone_depth)]))
        self.blocks = nn.ModuleList(blocks)
        self.to_planes = ModulatedConv2d(ch, 3 * cfg.plane_channels, style_dim,
                                         demodulate=False)

    def forward(self, w: torch.Tensor) -> TriPlane:
        if w.ndim == 1:
            w = w.unsqueeze(0)
        b = w.shape[0]
        x = self.constant.expand(b, -1, -1, -1).to(w.dtype)
        x = leaky_relu(self.entry(x, w))
        for block in self.blocks:
            x = upsample2x(x)
            for conv in block:
                x = leaky_relu(conv(x, w))
        planes = self.to_planes(x, w)
        c = self.cfg.plane_channels
        return TriPlane(planes.reshape(b, 3, c, *planes.shape[2:]), ROLE_PORTRAIT)


class AccessoryAdapter(nn.Module):
    """Per-plane adapter: portrait tri-plane + accessory code -> accessory tri-plane.

    Three independent branches, one per plane; each branch stacks two blocks
    of two style-modulated convolutions.
    """

    def __init__(self, cfg: GeometryConfig, style_dim: int):
        super().__init__()
        c = cfg.plane_channels
        h = cfg.adapter_channels

        def branch() -> nn.ModuleList:
            dims = [c, h, h, h, c]
            return nn.ModuleList(
                ModulatedConv2d(dims[i], dims[i + 1], style_dim) for i in range(4))

        self.branches = nn.ModuleList(branch() for _ in range(3))

    def forward(self, portrait: TriPlane, w_acc_g: torch.Tensor) -> TriPlane:
        if portrait.role != ROLE_PORTRAIT:
            raise InvalidInputError("adapter expects a portrait tri-plane")
        if w_acc_g.ndim == 1:
            w_acc_g = w_acc_g.unsqueeze(0)
        out_planes = []
        for i, branch in enumerate(self.branches):
            x = portrait.planes[:, i]
            for k, conv in enumerate(branch):
                x = conv(x, w_acc_g)
                if k < len(branch) - 1:
                    x = leaky_relu(x)
            out_planes.append(x)
        return TriPlane(torch.stack(out_planes, dim=1), ROLE_ACCESSORY)
