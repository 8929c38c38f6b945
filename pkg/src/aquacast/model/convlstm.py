"""Convolutional LSTM temporal aggregation.

One cell per pyramid level scans the timesteps in date order from zero
initial states; the final hidden state is the per-level series summary.
"""

from __future__ import annotations

import torch
from torch import nn


class ConvLSTMCell(nn.Module):
    def __init__(self, input_dim: int, hidden_dim: int, kernel_size: int = 3):
        super().__init__()
        padding = kernel_size // 2
        self.hidden_dim = hidden_dim
        self.conv = nn.Conv2d(
            input_dim + hidden_dim, 4 * hidden_dim, kernel_size, padding=padding
        )

    def forward(
        self, x: torch.Tensor, h: torch.Tensor, c: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        gates = self.conv(torch.cat([x, h], dim=1))
        i, f, o, g = torch.split(gates, self.hidden_dim, dim=1)
        i, f, o = torch.sigmoid(i), torch.sigmoid(f), torch.sigmoid(o)
        g = torch.tanh(g)
        c_next = f * c + i * g
        h_next = o * torch.tanh(c_next)
        return h_next, c_next

    def scan(self, sequence: torch.Tensor) -> torch.Tensor:
        """Run over a (B, T, C, H, W) sequence; returns the last hidden state."""
        b, t, _, h, w = sequence.shape
        hidden = sequence.new_zeros(b, self.hidden_dim, h, w)
        cell = sequence.new_zeros(b, self.hidden_dim, h, w)
        for step in range(t):
            hidden, cell = self(sequence[:, step], hidden, cell)
        return hidden


class TemporalAggregator(nn.Module):
    """Per-level ConvLSTM cells collapsing the time axis."""

    def __init__(self, level_channels: tuple[int, ...], kernel_size: int = 3):
        super().__init__()
        self.cells = nn.ModuleList(
            ConvLSTMCell(c, c, kernel_size) for c in level_channels
        )

    def forward(self, per_level: list[torch.Tensor]) -> list[torch.Tensor]:
        if len(per_level) != len(self.cells):
            raise ValueError(
                f"expected {len(self.cells)} levels, got {len(per_level)}"
            )
        return [cell.scan(feats) for cell, feats in zip(self.cells, per_level)]
