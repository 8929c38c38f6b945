"""Pyramid image encoder.

The stem strides by 4, each further stage by 2, so level l has spatial size
H / (4 * 2**l). Every timestep of a series is encoded independently with
shared weights. Normalization is batch-independent (GroupNorm / LayerNorm)
so identical frames produce bit-identical features regardless of batching.
"""

from __future__ import annotations

import torch
from torch import nn

from .config import ModelConfig


def _group_norm(channels: int) -> nn.GroupNorm:
    groups = next(g for g in (8, 4, 2, 1) if channels % g == 0)
    return nn.GroupNorm(groups, channels)


class ChannelLayerNorm(nn.Module):
    """LayerNorm over the channel dim of NCHW tensors."""

    def __init__(self, channels: int):
        super().__init__()
        self.norm = nn.LayerNorm(channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.norm(x.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)


class PlainBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm = _group_norm(channels)
        self.act = nn.GELU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.act(self.norm(self.conv(x)))


class ConvNeXtLikeBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.dwconv = nn.Conv2d(channels, channels, 7, padding=3, groups=channels)
        self.norm = ChannelLayerNorm(channels)
        self.pw1 = nn.Conv2d(channels, 4 * channels, 1)
        self.act = nn.GELU()
        self.pw2 = nn.Conv2d(4 * channels, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.pw2(self.act(self.pw1(self.norm(self.dwconv(x)))))


_BLOCKS = {"plain": PlainBlock, "convnext": ConvNeXtLikeBlock}


class PyramidEncoder(nn.Module):
    """Produces one feature map per level from a single image."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        widths = config.resolved_widths()
        depths = config.resolved_depths()
        block_cls = _BLOCKS[config.block_type()]
        in_ch = config.encoder_in_channels()
        self.total_stride = config.total_stride()
        self.stem = nn.Sequential(
            nn.Conv2d(in_ch, widths[0], kernel_size=4, stride=4), _group_norm(widths[0])
        )
        self.stages = nn.ModuleList()
        for l, (w, d) in enumerate(zip(widths, depths)):
            layers: list[nn.Module] = []
            if l > 0:
                layers.append(nn.Conv2d(widths[l - 1], w, kernel_size=2, stride=2))
                layers.append(_group_norm(w))
            layers.extend(block_cls(w) for _ in range(d))
            self.stages.append(nn.Sequential(*layers))

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        h, w = x.shape[-2:]
        if h % self.total_stride or w % self.total_stride:
            raise ValueError(
                f"input {h}x{w} not divisible by the pyramid stride {self.total_stride}"
            )
        x = self.stem(x)
        features = []
        for stage in self.stages:
            x = stage(x)
            features.append(x)
        return features


def encode_images(encoder: PyramidEncoder, images: torch.Tensor) -> list[torch.Tensor]:
    """Encode a (B, T, C, H, W) series timestep-by-timestep with shared
    weights; returns per-level tensors of shape (B, T, C_l, H_l, W_l)."""
    if images.dim() != 5:
        raise ValueError(f"expected (B, T, C, H, W), got {tuple(images.shape)}")
    b, t = images.shape[:2]
    flat = images.reshape(b * t, *images.shape[2:])
    features = encoder(flat)
    return [f.reshape(b, t, *f.shape[1:]) for f in features]
