"""Versioned checkpoint archive: config echo + named parameter tensors plus
optional training extras (optimizer state, normalization statistics, RNG
states). Loading rejects a config mismatch.
"""

from __future__ import annotations

from pathlib import Path

import torch

from .config import ModelConfig
from .network import ClimateGatedUNet

CHECKPOINT_VERSION = 1


def save_checkpoint(
    path: Path | str,
    model: ClimateGatedUNet,
    extra: dict | None = None,
) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "state_dict": model.state_dict(),
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(
    path: Path | str, expected_config: ModelConfig | None = None
) -> tuple[ClimateGatedUNet, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    config = ModelConfig.from_dict(payload["config"])
    if expected_config is not None and expected_config.to_dict() != config.to_dict():
        raise ValueError(
            "checkpoint config does not match the requested configuration"
        )
    model = ClimateGatedUNet(config)
    model.load_state_dict(payload["state_dict"])
    return model, payload.get("extra", {})
