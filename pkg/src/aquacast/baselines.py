"""Constant and persistence baselines.

The constant baseline always predicts "no change" (all NONE / all zeros).
Persistence predicts the difference between the last observed frame and the
median of all previous frames, thresholded for the classification tasks.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .raster import (
    ChangeDirection,
    Grid2D,
    GridStack,
    IGNORE_LABEL,
    temporal_median,
)


class Task(Enum):
    CHANGE = "change"
    DIRECTION = "direction"
    MAGNITUDE = "magnitude"


def constant_predict(shape: tuple[int, int], task: Task) -> np.ndarray:
    """All-NoCHG / all-NONE / all-zero prediction of the given spatial shape."""
    if task is Task.CHANGE:
        return np.zeros(shape, dtype=np.int8)
    if task is Task.DIRECTION:
        return np.full(shape, ChangeDirection.NONE, dtype=np.int8)
    return np.zeros(shape, dtype=np.float64)


def persistence_delta(index_stack: GridStack) -> Grid2D:
    """last frame − pixelwise median of all previous frames.

    Frames that are invalid everywhere (imputed placeholders) are dropped
    first; at least two observed frames are required.
    """
    observed = [i for i, f in enumerate(index_stack.frames) if f.valid.any()]
    if len(observed) < 2:
        raise ValueError(
            f"persistence needs >= 2 observed frames, got {len(observed)}"
        )
    last = index_stack.frames[observed[-1]]
    previous = GridStack(
        frames=[index_stack.frames[i] for i in observed[:-1]],
        dates=[index_stack.dates[i] for i in observed[:-1]],
    )
    med = temporal_median(previous)
    valid = last.valid & med.valid
    values = np.where(valid, last.values - med.values, 0.0)
    return Grid2D(values, valid)


def persistence_predict(index_stack: GridStack, task: Task, t: float) -> np.ndarray:
    """Task prediction from the persistence delta.

    CHANGE: 1 iff |delta| > t. DIRECTION: POS iff delta > t, NEG iff
    delta < −t, NONE otherwise. MAGNITUDE: |delta|. Pixels where the delta
    is undefined carry IGNORE_LABEL (classification) or 0 (regression).
    """
    delta = persistence_delta(index_stack)
    if task is Task.MAGNITUDE:
        return np.abs(delta.values)
    if t <= 0:
        raise ValueError(f"threshold must be positive, got {t}")
    if task is Task.CHANGE:
        out = (np.abs(delta.values) > t).astype(np.int8)
    else:
        out = np.full(delta.shape, ChangeDirection.NONE, dtype=np.int8)
        out[delta.values < -t] = ChangeDirection.NEG
        out[delta.values > t] = ChangeDirection.POS
    out[~delta.valid] = IGNORE_LABEL
    return out
