"""Climate branch: a recurrent encoder over the monthly window followed by
per-level upsampling heads that grow a 1×1 projection to each pyramid
level's spatial size.

Each per-level head applies a 1×1 conv + GELU, then ceil(log2(max(H_l, W_l)))
rounds of (nearest ×2 upsample, 3×3 conv, GELU); non-dyadic level sizes get a
final nearest resize to match exactly.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig


class _LevelHead(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, target_hw: tuple[int, int]):
        super().__init__()
        self.target_hw = tuple(target_hw)
        self.first = nn.Conv2d(in_channels, out_channels, kernel_size=1)
        n_up = max(0, math.ceil(math.log2(max(self.target_hw))))
        self.convs = nn.ModuleList(
            nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1)
            for _ in range(n_up)
        )
        self.act = nn.GELU()

    @property
    def upsample_stages(self) -> int:
        return len(self.convs)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.act(self.first(x))
        for conv in self.convs:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = self.act(conv(x))
        if x.shape[-2:] != self.target_hw:
            x = F.interpolate(x, size=self.target_hw, mode="nearest")
        return x


class ClimateEncoder(nn.Module):
    """Encodes (B, T, T1, C1) windows into per-level maps matching the image
    pyramid, one map per timestep."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.window_months = config.window_months
        self.climate_vars = config.climate_vars
        self.lstm = nn.LSTM(
            input_size=config.climate_vars,
            hidden_size=config.climate_hidden,
            batch_first=True,
        )
        self.proj = nn.Linear(config.climate_hidden, config.climate_hidden)
        widths = config.resolved_widths()
        self.heads = nn.ModuleList(
            _LevelHead(config.climate_hidden, w, hw)
            for w, hw in zip(widths, config.level_shapes())
        )

    def forward(self, windows: torch.Tensor) -> list[torch.Tensor]:
        if windows.dim() != 4:
            raise ValueError(f"expected (B, T, T1, C1), got {tuple(windows.shape)}")
        b, t, t1, c1 = windows.shape
        if t1 != self.window_months or c1 != self.climate_vars:
            raise ValueError(
                f"climate window shape ({t1}, {c1}) does not match the configured "
                f"({self.window_months}, {self.climate_vars})"
            )
        flat = windows.reshape(b * t, t1, c1)
        _, (h_n, _) = self.lstm(flat)
        projected = self.proj(h_n[-1])  # (B*T, hidden)
        seed = projected[:, :, None, None]  # 1x1 spatial bottleneck
        out = []
        for head in self.heads:
            k = head(seed)
            out.append(k.reshape(b, t, *k.shape[1:]))
        return out
