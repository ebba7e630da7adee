"""Pose-conditioned convolutional discriminators for the three data groups.

One topology, three instantiations differing only in input channels
(5 accessory-map, 20 portrait-map, 3 RGB) and input resolution. The pose
conditioning vector enters through a projection term on the final features.
The early conv levels double as the embedding network for mask-distribution
metrics.
"""

from __future__ import annotations

import torch
from torch import nn

from .camera import COND_DIM
from .errors import InvalidInputError
from .layers import EqualConv2d, EqualLinear, leaky_relu


class Discriminator(nn.Module):
    def __init__(self, in_channels: int, resolution: int,
                 base_channels: int = 32, max_channels: int = 128):
        super().__init__()
        if resolution < 8 or resolution & (resolution - 1):
            raise InvalidInputError("discriminator resolution must be a power of two >= 8")
        self.in_channels = in_channels
        self.resolution = resolution
        self.from_input = EqualConv2d(in_channels, base_channels, 1)
        levels = []
        ch = base_channels
        res = resolution
        while res > 4:
            out_ch = min(ch * 2, max_channels)
            levels.append(nn.ModuleList([
                EqualConv2d(ch, ch, 3, padding=1),
                EqualConv2d(ch, out_ch, 3, stride=2, padding=1),
            ]))
            ch = out_ch
            res //= 2
        self.levels = nn.ModuleList(levels)
        self.final_conv = EqualConv2d(ch, ch, 3, padding=1)
        self.fc = EqualLinear(ch * 4 * 4, ch)
        self.logit = EqualLinear(ch, 1)
        self.cond_proj = EqualLinear(COND_DIM, ch)

    def features(self, x: torch.Tensor, n_levels: int | None = None) -> torch.Tensor:
        """Pooled activations after the first n conv levels (embedding view)."""
        h = leaky_relu(self.from_input(x))
        for level in self.levels[: n_levels if n_levels is not None else len(self.levels)]:
            conv1, conv2 = level
            h = leaky_relu(conv1(h))
            h = leaky_relu(conv2(h))
        return h.mean(dim=(2, 3))

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.in_channels or x.shape[-1] != self.resolution:
            raise InvalidInputError(
                f"expected ({self.in_channels}, {self.resolution}^2) input, "
                f"got {tuple(x.shape[1:])}")
        h = leaky_relu(self.from_input(x))
        for conv1, conv2 in self.levels:
            h = leaky_relu(conv1(h))
            h = leaky_relu(conv2(h))
        h = leaky_relu(self.final_conv(h))
        feat = leaky_relu(self.fc(h.reshape(h.shape[0], -1)))
        out = self.logit(feat)
        out = out + (self.cond_proj(cond) * feat).sum(dim=1, keepdim=True) / feat.shape[1] ** 0.5
        return out.squeeze(1)
