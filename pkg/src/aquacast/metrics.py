"""Evaluation metrics: per-class precision/recall/F1, MAE (full and on the
top-magnitude pixel fraction), Pearson correlation, thresholded regression
metrics, and a paired t-test.

Classification metrics are micro-pooled pixel counts; :class:`ConfusionAccumulator`
supports associative, commutative merging so evaluation can be sharded.
P/R/F1 are reported in percent; MAE in target units; Pearson in [-1, 1].
Zero-denominator cases yield 0 and are flagged ``undefined`` instead of
raising.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as _scipy_stats


@dataclass
class ClassScores:
    precision: float
    recall: float
    f1: float
    undefined: bool = False


@dataclass
class ConfusionAccumulator:
    """Per-class TP/FP/FN pixel counts, mergeable across shards."""

    n_classes: int
    tp: np.ndarray | None = None
    fp: np.ndarray | None = None
    fn: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.tp is None:
            self.tp = np.zeros(self.n_classes, dtype=np.int64)
            self.fp = np.zeros(self.n_classes, dtype=np.int64)
            self.fn = np.zeros(self.n_classes, dtype=np.int64)

    def update(self, pred: np.ndarray, gt: np.ndarray, ignore_label: int = -1) -> None:
        pred = np.asarray(pred).ravel()
        gt = np.asarray(gt).ravel()
        if pred.shape != gt.shape:
            raise ValueError("pred and gt must have the same number of pixels")
        keep = gt != ignore_label
        pred = pred[keep]
        gt = gt[keep]
        for c in range(self.n_classes):
            self.tp[c] += int(np.sum((pred == c) & (gt == c)))
            self.fp[c] += int(np.sum((pred == c) & (gt != c)))
            self.fn[c] += int(np.sum((pred != c) & (gt == c)))

    def merge(self, other: "ConfusionAccumulator") -> "ConfusionAccumulator":
        if other.n_classes != self.n_classes:
            raise ValueError("cannot merge accumulators with different class counts")
        return ConfusionAccumulator(
            self.n_classes, self.tp + other.tp, self.fp + other.fp, self.fn + other.fn
        )

    def scores(self) -> list[ClassScores]:
        out = []
        for c in range(self.n_classes):
            tp, fp, fn = int(self.tp[c]), int(self.fp[c]), int(self.fn[c])
            undefined = False
            if tp + fp == 0:
                p, undefined = 0.0, True
            else:
                p = tp / (tp + fp)
            if tp + fn == 0:
                r, undefined = 0.0, True
            else:
                r = tp / (tp + fn)
            f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
            out.append(ClassScores(100.0 * p, 100.0 * r, 100.0 * f, undefined))
        return out


def confusion_metrics(
    pred: np.ndarray, gt: np.ndarray, n_classes: int, ignore_label: int = -1
) -> list[ClassScores]:
    """Per-class precision/recall/F1 (percent) over non-ignored pixels."""
    acc = ConfusionAccumulator(n_classes)
    acc.update(pred, gt, ignore_label)
    return acc.scores()


def mae(pred: np.ndarray, gt: np.ndarray, valid: np.ndarray | None = None) -> float:
    return mae_at_top(pred, gt, 1.0, valid)


def mae_at_top(
    pred: np.ndarray, gt: np.ndarray, fraction: float, valid: np.ndarray | None = None
) -> float:
    """MAE over the ceil(fraction * n) valid pixels with the highest
    ground-truth magnitude; ties broken by row-major pixel order."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    pred = np.asarray(pred, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=np.float64).ravel()
    if valid is not None:
        keep = np.asarray(valid, dtype=bool).ravel()
        pred, gt = pred[keep], gt[keep]
    if pred.size == 0:
        raise ValueError("no valid pixels")
    k = math.ceil(fraction * pred.size)
    order = np.argsort(-np.abs(gt), kind="stable")[:k]
    return float(np.mean(np.abs(pred[order] - gt[order])))


def pearson(pred: np.ndarray, gt: np.ndarray, valid: np.ndarray | None = None) -> float:
    """Sample Pearson correlation over valid pixels; NaN if either side has
    zero variance or fewer than two pixels (flagged undefined downstream)."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=np.float64).ravel()
    if valid is not None:
        keep = np.asarray(valid, dtype=bool).ravel()
        pred, gt = pred[keep], gt[keep]
    if pred.size < 2:
        return float("nan")
    dp = pred - pred.mean()
    dg = gt - gt.mean()
    denom = math.sqrt(float(dp @ dp)) * math.sqrt(float(dg @ dg))
    if denom == 0.0:
        return float("nan")
    return float(dp @ dg / denom)


def thresholded_metrics(
    pred_reg: np.ndarray,
    gt_reg: np.ndarray,
    t: float,
    valid: np.ndarray | None = None,
) -> ClassScores:
    """Binarize both regression maps at > t, then score the positive class."""
    if t <= 0:
        raise ValueError(f"threshold must be positive, got {t}")
    pred_bin = (np.asarray(pred_reg) > t).astype(np.int8)
    gt_bin = (np.asarray(gt_reg) > t).astype(np.int8)
    if valid is not None:
        gt_bin = np.where(np.asarray(valid, dtype=bool), gt_bin, np.int8(-1))
    return confusion_metrics(pred_bin, gt_bin, n_classes=2)[1]


def paired_ttest(scores_a: np.ndarray, scores_b: np.ndarray) -> float:
    """Two-sided paired t-test p-value on per-sample score vectors.

    Degenerate inputs are resolved without raising: identical vectors give
    p = 1, a constant nonzero difference gives p = 0.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("score vectors must be 1-D and equal length")
    if a.size < 2:
        raise ValueError("need at least two paired scores")
    diff = a - b
    if np.all(diff == 0.0):
        return 1.0
    if np.ptp(diff) == 0.0:
        return 0.0
    return float(_scipy_stats.ttest_rel(a, b).pvalue)


# ---------------------------------------------------------------------------
# Reporting


@dataclass
class MetricReport:
    """Flat metric table for one (model, task) pair.

    Units: precision/recall/F1 and thresholded variants in percent; MAE in
    raw target units; pearson in [-1, 1]. ``flags`` records degenerate
    entries (e.g. undefined correlation).
    """

    task: str
    model: str
    values: dict[str, float] = field(default_factory=dict)
    flags: dict[str, str] = field(default_factory=dict)
    sample_count: int = 0

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "model": self.model,
            "sample_count": self.sample_count,
            "values": dict(sorted(self.values.items())),
            "flags": dict(sorted(self.flags.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(
            task=d["task"],
            model=d["model"],
            values=dict(d["values"]),
            flags=dict(d.get("flags", {})),
            sample_count=int(d.get("sample_count", 0)),
        )

    def save_json(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load_json(cls, path: Path | str) -> "MetricReport":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["key", "value"])
            writer.writerow(["task", self.task])
            writer.writerow(["model", self.model])
            writer.writerow(["sample_count", self.sample_count])
            for key in sorted(self.values):
                writer.writerow([key, repr(self.values[key])])
            for key in sorted(self.flags):
                writer.writerow([f"flag:{key}", self.flags[key]])
