"""Gated fusion of image and climate features.

The gate map is sigmoid(conv1x1(relu(conv3x3(concat(climate, image))))), so
every element lies strictly in (0, 1); the fused feature is the elementwise
convex combination alpha * image + (1 - alpha) * climate.
"""

from __future__ import annotations

import torch
from torch import nn


class GatedFusion(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv3 = nn.Conv2d(2 * channels, channels, kernel_size=3, padding=1)
        self.conv1 = nn.Conv2d(channels, channels, kernel_size=1)
        self.relu = nn.ReLU()
        # Diagnostic override: when set, the gate is bypassed with a constant
        # (used for fusion ablations; 1.0 reduces to the pure image path).
        self.force_alpha: float | None = None

    def forward(
        self, image_feat: torch.Tensor, climate_feat: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        if image_feat.shape != climate_feat.shape:
            raise ValueError(
                f"shape mismatch: image {tuple(image_feat.shape)} vs "
                f"climate {tuple(climate_feat.shape)}"
            )
        z = torch.cat([climate_feat, image_feat], dim=1)
        alpha = torch.sigmoid(self.conv1(self.relu(self.conv3(z))))
        if self.force_alpha is not None:
            alpha = torch.full_like(alpha, self.force_alpha)
        fused = alpha * image_feat + (1.0 - alpha) * climate_feat
        return fused, alpha
