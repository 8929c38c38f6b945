"""The full climate-gated UNet.

Pipeline: optional DEM concat → shared-weight pyramid encoding per timestep
→ optional (climate encoding → gated fusion) per level and timestep →
per-level ConvLSTM over time → UNet decoder with skip connections → task
head. Output spatial size equals the input size.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from ..baselines import Task
from .climate import ClimateEncoder
from .config import ModelConfig
from .convlstm import TemporalAggregator
from .encoder import PyramidEncoder, _group_norm, encode_images
from .fusion import GatedFusion


def attach_dem(images: torch.Tensor, dem: torch.Tensor) -> torch.Tensor:
    """Concatenate the DEM as an extra channel of every timestep.

    Accepts (T, C, H, W) with (1, H, W), or batched (B, T, C, H, W) with
    (B, 1, H, W).
    """
    if images.dim() == 4 and dem.dim() == 3:
        if images.shape[-2:] != dem.shape[-2:]:
            raise ValueError(
                f"spatial mismatch: images {tuple(images.shape[-2:])} vs dem {tuple(dem.shape[-2:])}"
            )
        t = images.shape[0]
        return torch.cat([images, dem.unsqueeze(0).expand(t, -1, -1, -1)], dim=1)
    if images.dim() == 5 and dem.dim() == 4:
        if images.shape[-2:] != dem.shape[-2:] or images.shape[0] != dem.shape[0]:
            raise ValueError(
                f"shape mismatch: images {tuple(images.shape)} vs dem {tuple(dem.shape)}"
            )
        t = images.shape[1]
        return torch.cat([images, dem.unsqueeze(1).expand(-1, t, -1, -1, -1)], dim=2)
    raise ValueError(
        f"unsupported ranks: images {images.dim()}-D with dem {dem.dim()}-D"
    )


class _DecoderStage(nn.Module):
    """Upsample the deeper map, concat the skip, and convolve down."""

    def __init__(self, deep_channels: int, skip_channels: int):
        super().__init__()
        self.reduce = nn.Conv2d(deep_channels, skip_channels, kernel_size=3, padding=1)
        self.fuse = nn.Conv2d(2 * skip_channels, skip_channels, kernel_size=3, padding=1)
        self.norm = _group_norm(skip_channels)
        self.act = nn.GELU()

    def forward(self, deep: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        x = F.interpolate(deep, size=skip.shape[-2:], mode="nearest")
        x = self.act(self.reduce(x))
        x = torch.cat([x, skip], dim=1)
        return self.act(self.norm(self.fuse(x)))


class UNetDecoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        widths = config.resolved_widths()
        self.stages = nn.ModuleList(
            _DecoderStage(widths[l], widths[l - 1]) for l in range(len(widths) - 1, 0, -1)
        )
        self.head_conv = nn.Conv2d(widths[0], config.head_channels, kernel_size=3, padding=1)
        self.act = nn.GELU()
        self.head_out = nn.Conv2d(config.head_channels, config.out_channels, kernel_size=1)
        self.task = config.task

    def forward(self, summaries: list[torch.Tensor], out_hw: tuple[int, int]) -> torch.Tensor:
        x = summaries[-1]
        for stage, skip in zip(self.stages, reversed(summaries[:-1])):
            x = stage(x, skip)
        x = F.interpolate(x, size=out_hw, mode="bilinear", align_corners=False)
        x = self.act(self.head_conv(x))
        x = self.head_out(x)
        if self.task is Task.MAGNITUDE:
            x = F.softplus(x)
        return x


class ClimateGatedUNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = PyramidEncoder(config)
        widths = config.resolved_widths()
        if config.use_climate:
            self.climate_encoder = ClimateEncoder(config)
            self.fusions = nn.ModuleList(GatedFusion(w) for w in widths)
        else:
            self.climate_encoder = None
            self.fusions = None
        self.temporal = TemporalAggregator(widths)
        self.decoder = UNetDecoder(config)

    def forward(
        self,
        images: torch.Tensor,
        dem: torch.Tensor | None = None,
        climate: torch.Tensor | None = None,
        return_gates: bool = False,
    ):
        if images.dim() == 4:
            images = images.unsqueeze(0)
            dem = dem.unsqueeze(0) if dem is not None else None
            climate = climate.unsqueeze(0) if climate is not None else None
            squeeze = True
        else:
            squeeze = False
        if images.shape[2] != self.config.in_channels:
            raise ValueError(
                f"expected {self.config.in_channels} input channels, got {images.shape[2]}"
            )
        if self.config.use_dem:
            if dem is None:
                raise ValueError("model configured with use_dem=True but no dem given")
            images = attach_dem(images, dem)
        out_hw = images.shape[-2:]

        per_level = encode_images(self.encoder, images)
        gates: list[torch.Tensor] = []
        if self.config.use_climate:
            if climate is None:
                raise ValueError("model configured with use_climate=True but no climate given")
            climate_maps = self.climate_encoder(climate)
            fused_levels = []
            for fusion, img_feat, clim_feat in zip(self.fusions, per_level, climate_maps):
                b, t = img_feat.shape[:2]
                fused, alpha = fusion(
                    img_feat.reshape(b * t, *img_feat.shape[2:]),
                    clim_feat.reshape(b * t, *clim_feat.shape[2:]),
                )
                fused_levels.append(fused.reshape(b, t, *fused.shape[1:]))
                if return_gates:
                    gates.append(alpha.reshape(b, t, *alpha.shape[1:]))
            per_level = fused_levels

        summaries = self.temporal(per_level)
        out = self.decoder(summaries, out_hw)
        if squeeze:
            out = out.squeeze(0)
            gates = [g.squeeze(0) for g in gates]
        if return_gates:
            return out, gates
        return out
