"""Experiment configuration tree.

Loaded from YAML; every key is optional and falls back to the documented
default. Unknown keys are hard errors so typos cannot silently change an
experiment. Schedule defaults: 50 pretrain epochs at max lr 5e-4, 20
fine-tune epochs at 5e-6, cosine decay with 5% warmup, batch size 8,
change threshold t=0.1.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .baselines import Task
from .data.synthetic import DYNAMICS
from .errors import UserError
from .losses import RegressionLossConfig
from .model.config import ModelConfig

RESULTS_ROOT_ENV = "AQUA_RESULTS_ROOT"


@dataclass
class ScheduleConfig:
    pretrain_epochs: int = 50
    finetune_epochs: int = 20
    pretrain_lr: float = 5e-4
    finetune_lr: float = 5e-6
    warmup_frac: float = 0.05
    batch_size: int = 8
    weight_decay: float = 0.01
    optimizer: str = "adamw"
    val_fraction: float = 0.10

    def __post_init__(self) -> None:
        if self.optimizer != "adamw":
            raise UserError(f"unsupported optimizer {self.optimizer!r}")
        if not 0.0 <= self.warmup_frac < 1.0:
            raise UserError("warmup_frac must lie in [0, 1)")
        if self.batch_size < 1:
            raise UserError("batch_size must be >= 1")


@dataclass
class AugmentConfig:
    enabled: bool = False
    rotation_deg: float = 15.0
    translate_frac: float = 0.10
    crop_scale_min: float = 0.8
    crop_scale_max: float = 1.0


@dataclass
class DataConfig:
    """Synthetic dataset layout written by ``aqua gen-data``."""

    n_pretrain: int = 256
    n_finetune: int = 0
    n_test: int = 64
    height: int = 64
    width: int = 64
    series_length: int = 5
    window_months: int = 12
    future_length: int = 5
    dynamics: tuple[str, ...] = ("shrinking_lake", "growing_lake")
    noise: float = 0.02
    cloud_fraction: float = 0.05
    artifact_prob: float = 0.3
    trend_gain: float = 1.3

    def __post_init__(self) -> None:
        self.dynamics = tuple(self.dynamics)
        for d in self.dynamics:
            if d not in DYNAMICS:
                raise UserError(f"unknown dynamics {d!r}: expected one of {DYNAMICS}")
        if not self.dynamics:
            raise UserError("at least one dynamics regime is required")
        if min(self.n_pretrain, self.n_finetune, self.n_test) < 0:
            raise UserError("sample counts must be nonnegative")


@dataclass
class ExperimentConfig:
    task: Task = Task.CHANGE
    seed: int = 0
    threshold: float = 0.1
    name: str = "run"
    output_dir: str | None = None
    subgroup_theta: float = 0.15
    welch_alpha: float | None = None
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: RegressionLossConfig = field(default_factory=RegressionLossConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self) -> None:
        if isinstance(self.task, str):
            self.task = Task(self.task)
        if self.threshold <= 0:
            raise UserError("threshold must be positive")
        # The model always follows the experiment task and data geometry;
        # replace() re-runs the model config validation.
        self.model = dataclasses.replace(
            self.model,
            task=self.task,
            series_length=self.data.series_length,
            window_months=self.data.window_months,
            input_height=self.data.height,
            input_width=self.data.width,
        )

    # -- directory layout -------------------------------------------------
    def root(self) -> Path:
        base = self.output_dir or os.environ.get(RESULTS_ROOT_ENV) or "results"
        return Path(base) / self.name

    def dataset_dir(self) -> Path:
        return self.root() / "dataset"

    def train_dir(self) -> Path:
        return self.root() / "train"

    def eval_dir(self) -> Path:
        return self.root() / "eval"

    def explain_dir(self) -> Path:
        return self.root() / "explain"

    def report_dir(self) -> Path:
        return self.root() / "report"

    def run_info(self) -> dict:
        """Defaults that must accompany every emitted report."""
        return {
            "task": self.task.value,
            "seed": self.seed,
            "threshold": self.threshold,
            "optimizer": self.schedule.optimizer,
            "weight_decay": self.schedule.weight_decay,
            "pretrain": {"epochs": self.schedule.pretrain_epochs, "max_lr": self.schedule.pretrain_lr},
            "finetune": {"epochs": self.schedule.finetune_epochs, "max_lr": self.schedule.finetune_lr},
            "lr_schedule": f"cosine decay, {self.schedule.warmup_frac:.0%} warmup",
            "batch_size": self.schedule.batch_size,
            "loss": dataclasses.asdict(self.loss),
        }

    def to_dict(self) -> dict:
        return {
            "task": self.task.value,
            "seed": self.seed,
            "threshold": self.threshold,
            "name": self.name,
            "output_dir": self.output_dir,
            "subgroup_theta": self.subgroup_theta,
            "welch_alpha": self.welch_alpha,
            "data": dataclasses.asdict(self.data),
            "model": self.model.to_dict(),
            "loss": dataclasses.asdict(self.loss),
            "schedule": dataclasses.asdict(self.schedule),
            "augment": dataclasses.asdict(self.augment),
        }


def _build(cls, data: dict, context: str):
    if not isinstance(data, dict):
        raise UserError(f"{context}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise UserError(f"{context}: unknown key {unknown[0]!r}")
    kwargs = {}
    for key, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise UserError(f"{context}: {exc}") from exc


_TOP_KEYS = ("task", "seed", "threshold", "name", "output_dir", "subgroup_theta", "welch_alpha")


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data or {})
    sections = {
        "data": DataConfig,
        "model": ModelConfig,
        "loss": RegressionLossConfig,
        "schedule": ScheduleConfig,
        "augment": AugmentConfig,
    }
    kwargs = {}
    for key, cls in sections.items():
        if key in data:
            kwargs[key] = _build(cls, data.pop(key), key)
    unknown = sorted(set(data) - set(_TOP_KEYS))
    if unknown:
        raise UserError(f"config: unknown key {unknown[0]!r}")
    try:
        return ExperimentConfig(**data, **kwargs)
    except ValueError as exc:
        raise UserError(str(exc)) from exc


def load_config(path: Path | str) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise UserError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise UserError(f"could not parse {path}: {exc}") from exc
    return config_from_dict(data or {})
