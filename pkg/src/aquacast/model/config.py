"""Model configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ..baselines import Task

BACKBONE_PRESETS: dict[str, dict] = {
    # Small conv pyramid trainable at desk scale.
    "tiny_conv_pyramid": {"widths": (16, 32, 64, 128), "depths": (1, 1, 1, 1), "block": "plain"},
    # Depthwise-conv blocks with an inverted MLP, no pretrained weights.
    "convnext_like_base": {"widths": (48, 96, 192, 384), "depths": (2, 2, 4, 2), "block": "convnext"},
    "convnext_like_large": {"widths": (64, 128, 256, 512), "depths": (3, 3, 6, 3), "block": "convnext"},
}


@dataclass
class ModelConfig:
    task: Task = Task.CHANGE
    backbone: str = "tiny_conv_pyramid"
    in_channels: int = 6
    use_dem: bool = False
    use_climate: bool = False
    levels: int = 4
    series_length: int = 5
    window_months: int = 12
    climate_vars: int = 5
    input_height: int = 64
    input_width: int = 64
    climate_hidden: int = 64
    head_channels: int = 32
    # Optional per-level overrides of the backbone preset (desk-scale runs).
    widths: tuple[int, ...] | None = None
    depths: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if isinstance(self.task, str):
            self.task = Task(self.task)
        if self.backbone not in BACKBONE_PRESETS:
            raise ValueError(
                f"unknown backbone {self.backbone!r}: expected one of {sorted(BACKBONE_PRESETS)}"
            )
        if self.widths is not None:
            self.widths = tuple(self.widths)
        if self.depths is not None:
            self.depths = tuple(self.depths)
        if self.levels < 2:
            raise ValueError("at least 2 pyramid levels are required")
        if len(self.resolved_widths()) != self.levels or len(self.resolved_depths()) != self.levels:
            raise ValueError(
                f"need one width and depth per level: "
                f"{self.resolved_widths()} / {self.resolved_depths()} for {self.levels} levels"
            )
        stride = self.total_stride()
        if self.input_height % stride or self.input_width % stride:
            raise ValueError(
                f"input {self.input_height}x{self.input_width} must be divisible by {stride}"
            )

    def resolved_widths(self) -> tuple[int, ...]:
        widths = self.widths if self.widths is not None else BACKBONE_PRESETS[self.backbone]["widths"][: self.levels]
        return tuple(widths)

    def resolved_depths(self) -> tuple[int, ...]:
        depths = self.depths if self.depths is not None else BACKBONE_PRESETS[self.backbone]["depths"][: self.levels]
        return tuple(depths)

    def block_type(self) -> str:
        return BACKBONE_PRESETS[self.backbone]["block"]

    def total_stride(self) -> int:
        # Stem stride 4, then one 2x downsample per extra level.
        return 4 * 2 ** (self.levels - 1)

    def encoder_in_channels(self) -> int:
        return self.in_channels + (1 if self.use_dem else 0)

    @property
    def out_channels(self) -> int:
        return 3 if self.task is Task.DIRECTION else 1

    def level_shapes(self) -> list[tuple[int, int]]:
        return [
            (self.input_height // (4 * 2 ** l), self.input_width // (4 * 2 ** l))
            for l in range(self.levels)
        ]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["task"] = self.task.value
        d["widths"] = list(self.widths) if self.widths is not None else None
        d["depths"] = list(self.depths) if self.depths is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if d.get("widths") is not None:
            d["widths"] = tuple(d["widths"])
        if d.get("depths") is not None:
            d["depths"] = tuple(d["depths"])
        return cls(**d)
