"""Shared network building blocks (equalized-lr layers, modulated conv)."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


def leaky_relu(x: torch.Tensor) -> torch.Tensor:
    return F.leaky_relu(x, 0.2)


class PixelNorm(nn.Module):
    """Normalize each feature vector to unit RMS across the channel axis."""

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * torch.rsqrt(x.pow(2).mean(dim=1, keepdim=True) + 1e-8)


class EqualLinear(nn.Module):
    """Linear layer with runtime weight scaling (equalized learning rate)."""

    def __init__(self, in_dim: int, out_dim: int, bias: bool = True, bias_init: float = 0.0):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_dim, in_dim))
        self.bias = nn.Parameter(torch.full((out_dim,), bias_init)) if bias else None
        self.scale = 1.0 / math.sqrt(in_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.linear(x, self.weight * self.scale, self.bias)


class EqualConv2d(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int = 1,
                 padding: int = 0, bias: bool = True):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_ch, in_ch, kernel, kernel))
        self.bias = nn.Parameter(torch.zeros(out_ch)) if bias else None
        self.scale = 1.0 / math.sqrt(in_ch * kernel * kernel)
        self.stride = stride
        self.padding = padding

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.conv2d(x, self.weight * self.scale, self.bias,
                        stride=self.stride, padding=self.padding)


class ModulatedConv2d(nn.Module):
    """3x3 convolution whose kernel is scaled per-sample by a style vector.

    The style is mapped to per-input-channel gains by an affine layer;
    demodulation renormalizes the scaled kernel so activations keep unit
    variance. Purely weight-space, so the operator stays spatially local.
    """

    def __init__(self, in_ch: int, out_ch: int, style_dim: int, kernel: int = 3,
                 demodulate: bool = True):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_ch, in_ch, kernel, kernel))
        self.bias = nn.Parameter(torch.zeros(out_ch))
        self.affine = EqualLinear(style_dim, in_ch, bias_init=1.0)
        self.scale = 1.0 / math.sqrt(in_ch * kernel * kernel)
        self.padding = kernel // 2
        self.demodulate = demodulate

    def forward(self, x: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        b, in_ch, h, w = x.shape
        out_ch = self.weight.shape[0]
        gains = self.affine(style)  # (B, in)
        weight = self.weight[None] * self.scale * gains[:, None, :, None, None]
        if self.demodulate:
            decoef = torch.rsqrt(weight.pow(2).sum(dim=(2, 3, 4)) + 1e-8)
            weight = weight * decoef[:, :, None, None, None]
        weight = weight.reshape(b * out_ch, in_ch, *self.weight.shape[2:])
        out = F.conv2d(x.reshape(1, b * in_ch, h, w), weight,
                       padding=self.padding, groups=b)
        return out.reshape(b, out_ch, h, w) + self.bias[None, :, None, None]


class ChannelRMSNorm(nn.Module):
    """Per-pixel RMS normalization across channels.

    Unlike instance norm this uses no spatial statistics, so normalizing
    one pixel never reads another -- required for regional style edits to
    stay inside their mask.
    """

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * torch.rsqrt(x.pow(2).mean(dim=1, keepdim=True) + 1e-8)


def upsample2x(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode="nearest")


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
