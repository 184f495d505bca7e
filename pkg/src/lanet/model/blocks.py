"""Decoder building blocks: head attention, lesion-aware module, feature-preserve module.

Attention vectors are ``(N, C)`` tensors in [0, 1] applied channel-wise with
:func:`gate`.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def conv_bn_relu(in_channels: int, out_channels: int, kernel_size: int | tuple[int, int] = 3) -> nn.Sequential:
    if isinstance(kernel_size, int):
        kernel_size = (kernel_size, kernel_size)
    padding = (kernel_size[0] // 2, kernel_size[1] // 2)
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, kernel_size, padding=padding, bias=False),
        nn.BatchNorm2d(out_channels),
        nn.ReLU(inplace=True),
    )


def gate(x: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """Scale every channel of ``x`` (N, C, H, W) by ``weights`` (N, C)."""
    return x * weights[:, :, None, None]


def _hidden(channels: int, reduction: int) -> int:
    return max(channels // reduction, 4)


class ChannelAttention(nn.Module):
    """Global pooling -> pointwise reduce -> ReLU -> pointwise expand -> sigmoid.

    This is our reading of the per-channel attention ``x_att(c)`` of the
    lesion-aware module, whose exact formula is not given in the source
    material; the same block gates the head attention module.
    """

    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        hidden = _hidden(channels, reduction)
        self.reduce = nn.Conv2d(channels, hidden, 1)
        self.expand = nn.Conv2d(hidden, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        pooled = F.adaptive_avg_pool2d(x, 1)
        return torch.sigmoid(self.expand(F.relu(self.reduce(pooled)))).flatten(1)


class HeadAttention(nn.Module):
    """Channel reduction of the deepest encoder feature followed by self-gating.

    Attention is computed from pooled statistics, so memory stays linear in
    the number of positions (no position-by-position affinity matrix).
    """

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.reduce = conv_bn_relu(in_channels, out_channels, 1)
        self.attention = ChannelAttention(out_channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.reduce(x)
        return gate(y, self.attention(y))


class LesionAwareModule(nn.Module):
    """Orientation-aware features gated by a channel attention vector.

    Two pointwise branches are taken from the input: ``x1`` feeds the
    horizontal (1 x k) and vertical (k x 1) convolutions whose sum is fused
    into ``x_ort``; ``x2`` produces the attention vector ``x_att``. The output
    is ``x_ort * x_att`` broadcast over positions.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3):
        super().__init__()
        self.branch1 = conv_bn_relu(in_channels, out_channels, 1)
        self.branch2 = conv_bn_relu(in_channels, out_channels, 1)
        self.horizontal = nn.Conv2d(out_channels, out_channels, (1, kernel), padding=(0, kernel // 2))
        self.vertical = nn.Conv2d(out_channels, out_channels, (kernel, 1), padding=(kernel // 2, 0))
        self.fuse = conv_bn_relu(out_channels, out_channels, 3)
        self.attention = ChannelAttention(out_channels)

    def parts(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Return ``(x_ort, x_att)`` for input ``x``."""
        x1 = self.branch1(x)
        x2 = self.branch2(x)
        x_ort = self.fuse(self.horizontal(x1) + self.vertical(x1))
        return x_ort, self.attention(x2)

    def forward(self, x: torch.Tensor, attention: torch.Tensor | None = None) -> torch.Tensor:
        x_ort, x_att = self.parts(x)
        if attention is not None:
            x_att = attention.expand_as(x_att)
        return gate(x_ort, x_att)


class FeaturePreserveBlock(nn.Module):
    """Channel attention from the deepest encoder feature and the previous decoder feature.

    Each input is globally pooled and projected; the sum is squashed into a
    weight per fused channel.
    """

    def __init__(self, enc_channels: int, dec_channels: int, out_channels: int, reduction: int = 4):
        super().__init__()
        hidden = _hidden(out_channels, reduction)
        self.enc_proj = nn.Conv2d(enc_channels, hidden, 1)
        self.dec_proj = nn.Conv2d(dec_channels, hidden, 1)
        self.out = nn.Conv2d(hidden, out_channels, 1)

    def forward(self, x_enc4: torch.Tensor, x_dec: torch.Tensor) -> torch.Tensor:
        z = self.enc_proj(F.adaptive_avg_pool2d(x_enc4, 1)) + self.dec_proj(F.adaptive_avg_pool2d(x_dec, 1))
        return torch.sigmoid(self.out(F.relu(z))).flatten(1)


class FeatureFusionBlock(nn.Module):
    """Fuse an encoder skip with the previous decoder feature under a channel gate.

    Three branches at the skip's resolution, each ``prev_channels`` wide:
    ``z1 = conv(skip)``, ``z2 = up(conv(prev))``, ``z3 = up(prev)``. All are
    scaled by the gate vector, concatenated and fused by a 3 x 3 convolution.
    """

    def __init__(self, skip_channels: int, prev_channels: int, out_channels: int):
        super().__init__()
        self.branch_channels = prev_channels
        self.conv_skip = conv_bn_relu(skip_channels, prev_channels, 1)
        self.conv_prev = conv_bn_relu(prev_channels, prev_channels, 3)
        self.fuse = conv_bn_relu(3 * prev_channels, out_channels, 3)

    def branches(self, skip: torch.Tensor, prev: torch.Tensor, x_fpb: torch.Tensor) -> list[torch.Tensor]:
        if skip.shape[-2:] != (2 * prev.shape[-2], 2 * prev.shape[-1]):
            raise ValueError(
                f"skip feature {tuple(skip.shape[-2:])} must be twice the decoder feature {tuple(prev.shape[-2:])}"
            )
        size = skip.shape[-2:]
        z1 = self.conv_skip(skip)
        z2 = F.interpolate(self.conv_prev(prev), size=size, mode="bilinear", align_corners=False)
        z3 = F.interpolate(prev, size=size, mode="bilinear", align_corners=False)
        return [gate(z, x_fpb) for z in (z1, z2, z3)]

    def forward(self, skip: torch.Tensor, prev: torch.Tensor, x_fpb: torch.Tensor) -> torch.Tensor:
        return self.fuse(torch.cat(self.branches(skip, prev, x_fpb), dim=1))


class UpsampleProject(nn.Module):
    """Ablation stand-in for the feature-preserve module: bilinear upsampling + channel match."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.project = conv_bn_relu(in_channels, out_channels, 1)

    def forward(self, prev: torch.Tensor, size: torch.Size) -> torch.Tensor:
        return self.project(F.interpolate(prev, size=size, mode="bilinear", align_corners=False))
