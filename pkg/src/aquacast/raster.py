"""Pixelwise raster math: water index, validity-aware temporal medians, and
construction of change targets and task labels.

All functions are pure and operate on :class:`Grid2D` / :class:`GridStack`
values. Invalid (e.g. cloud-masked) pixels are tracked explicitly and are
excluded from medians instead of being zero-filled, which would bias them
toward zero.
"""

from __future__ import annotations

import datetime
import warnings
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

# Label assigned to pixels that must be excluded from losses and metrics.
IGNORE_LABEL = -1


class ChangeDirection(IntEnum):
    NEG = 0
    NONE = 1
    POS = 2


@dataclass
class Grid2D:
    """A single-band H×W raster with a per-pixel validity mask.

    ``values`` must be finite wherever ``valid`` is true; values at invalid
    pixels are meaningless and are conventionally zeroed.
    """

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {self.values.shape}")
        if self.valid.shape != self.values.shape:
            raise ValueError(
                f"valid mask shape {self.valid.shape} != values shape {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values[self.valid])):
            raise ValueError("values must be finite wherever valid is true")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @classmethod
    def full_valid(cls, values: np.ndarray) -> "Grid2D":
        values = np.asarray(values, dtype=np.float64)
        return cls(values, np.ones(values.shape, dtype=bool))


@dataclass
class GridStack:
    """An ordered stack of same-shaped grids with strictly increasing dates."""

    frames: list[Grid2D]
    dates: list[datetime.date]

    def __post_init__(self) -> None:
        if len(self.frames) != len(self.dates):
            raise ValueError("frames and dates must have equal length")
        shapes = {f.shape for f in self.frames}
        if len(shapes) > 1:
            raise ValueError(f"all frames must share one shape, got {sorted(shapes)}")
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise ValueError("dates must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames[0].shape


@dataclass
class TargetPack:
    """Ground-truth bundle for the three forecasting tasks.

    ``target`` holds median(past) − median(future) in [−2, 2];
    ``change_mask`` is 1 where \\|target\\| exceeds the threshold,
    ``direction_mask`` partitions valid pixels into NEG/NONE/POS and
    ``magnitude`` is \\|target\\|. Invalid pixels carry :data:`IGNORE_LABEL`
    in both masks.
    """

    target: Grid2D
    change_mask: np.ndarray
    direction_mask: np.ndarray
    magnitude: np.ndarray
    threshold: float

    def __post_init__(self) -> None:
        v = self.target.valid
        if np.any(np.abs(self.target.values[v]) > 2.0 + 1e-12):
            raise ValueError("|target| must be <= 2 on valid pixels")
        if np.any(self.magnitude[v] < 0):
            raise ValueError("magnitude must be nonnegative")
        if not np.array_equal(
            self.change_mask[v] == 1, self.direction_mask[v] != ChangeDirection.NONE
        ):
            raise ValueError("change_mask and direction_mask disagree")
        if np.any(self.change_mask[~v] != IGNORE_LABEL) or np.any(
            self.direction_mask[~v] != IGNORE_LABEL
        ):
            raise ValueError("invalid pixels must carry IGNORE_LABEL in both masks")


def compute_mndwi(green: Grid2D, swir: Grid2D) -> Grid2D:
    """Water index (green − swir) / (green + swir), in [−1, 1] for
    nonnegative reflectances.

    Pixels where the denominator is zero are marked invalid rather than
    dividing by zero.
    """
    if green.shape != swir.shape:
        raise ValueError(f"shape mismatch: green {green.shape} vs swir {swir.shape}")
    denom = green.values + swir.values
    valid = green.valid & swir.valid & (denom != 0)
    values = np.zeros_like(green.values)
    np.divide(green.values - swir.values, denom, out=values, where=valid)
    values[~valid] = 0.0
    return Grid2D(values, valid)


def temporal_median(stack: GridStack) -> Grid2D:
    """Pixelwise median over frames, using only frames valid at each pixel.

    A pixel is invalid in the output iff it is valid in zero frames.
    Even-count medians are the mean of the two central values.
    """
    if len(stack) == 0:
        raise ValueError("cannot take the median of an empty stack")
    values = np.stack([f.values for f in stack.frames])
    valid = np.stack([f.valid for f in stack.frames])
    masked = np.where(valid, values, np.nan)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN pixels handled below
        med = np.nanmedian(masked, axis=0)
    out_valid = valid.any(axis=0)
    med[~out_valid] = 0.0
    return Grid2D(med, out_valid)


def build_target(past: GridStack, future: GridStack) -> Grid2D:
    """Change target: temporal_median(past) − temporal_median(future).

    Valid where both medians are valid; with water-index inputs the result
    lies in [−2, 2]. Positive values mean the index dropped over time.
    """
    if past.shape != future.shape:
        raise ValueError(f"footprint mismatch: past {past.shape} vs future {future.shape}")
    med_p = temporal_median(past)
    med_f = temporal_median(future)
    valid = med_p.valid & med_f.valid
    values = np.where(valid, med_p.values - med_f.values, 0.0)
    return Grid2D(values, valid)


def change_mask(target: Grid2D, t: float) -> np.ndarray:
    """Binary change labels: 1 iff |target| > t. Invalid pixels get IGNORE_LABEL."""
    if t <= 0:
        raise ValueError(f"threshold must be positive, got {t}")
    out = (np.abs(target.values) > t).astype(np.int8)
    out[~target.valid] = IGNORE_LABEL
    return out


def direction_mask(target: Grid2D, t: float) -> np.ndarray:
    """Three-way direction labels: NEG iff target < −t, POS iff target > t,
    NONE otherwise. Invalid pixels get IGNORE_LABEL."""
    if t <= 0:
        raise ValueError(f"threshold must be positive, got {t}")
    out = np.full(target.shape, ChangeDirection.NONE, dtype=np.int8)
    out[target.values < -t] = ChangeDirection.NEG
    out[target.values > t] = ChangeDirection.POS
    out[~target.valid] = IGNORE_LABEL
    return out


def magnitude_target(target: Grid2D) -> Grid2D:
    """Elementwise |target|, range [0, 2]."""
    return Grid2D(np.abs(target.values), target.valid.copy())


def normalize_target(target: Grid2D) -> Grid2D:
    """Map the [−2, 2] target onto [−1, 1] by halving.

    Exact inverse: :func:`denormalize_target`.
    """
    if np.any(np.abs(target.values[target.valid]) > 2.0 + 1e-12):
        raise ValueError("target out of range: |T| must be <= 2")
    return Grid2D(target.values / 2.0, target.valid.copy())


def denormalize_target(normalized: Grid2D) -> Grid2D:
    """Exact inverse of :func:`normalize_target` (doubling)."""
    return Grid2D(normalized.values * 2.0, normalized.valid.copy())


def make_target_pack(past: GridStack, future: GridStack, t: float) -> TargetPack:
    """Build the full label bundle from past/future water-index stacks."""
    target = build_target(past, future)
    return TargetPack(
        target=target,
        change_mask=change_mask(target, t),
        direction_mask=direction_mask(target, t),
        magnitude=magnitude_target(target).values,
        threshold=t,
    )
