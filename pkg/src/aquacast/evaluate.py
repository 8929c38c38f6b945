"""Evaluation harness: runs the trained model plus the constant and
persistence baselines on a split, pools micro metrics over all pixels,
keeps per-sample scores for paired significance testing, and writes one
metric report per predictor.

Pixels where the persistence delta is undefined are scored as "no change"
predictions (the baseline's most conservative claim).
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .baselines import Task, constant_predict, persistence_predict
from .data.series import NormalizationStats, SampleRecord, Split
from .data.storage import load_manifest_samples
from .errors import UserError
from .metrics import (
    ConfusionAccumulator,
    MetricReport,
    mae,
    mae_at_top,
    paired_ttest,
    pearson,
    thresholded_metrics,
)
from .model.checkpoint import load_checkpoint
from .model.network import ClimateGatedUNet
from .raster import IGNORE_LABEL
from .train import TensorSample, record_to_tensors

logger = logging.getLogger(__name__)

CHANGE_CLASSES = ("nochg", "chg")
DIRECTION_CLASSES = ("neg", "none", "pos")

PRIMARY_SCORE = {
    Task.CHANGE: "chg_f1",
    Task.DIRECTION: "direction_mean_f1",
    Task.MAGNITUDE: "mae",
}


def task_columns(task: Task) -> list[str]:
    if task is Task.CHANGE:
        return [f"{c}_{m}" for c in CHANGE_CLASSES for m in ("precision", "recall", "f1")]
    if task is Task.DIRECTION:
        return [f"{c}_{m}" for c in DIRECTION_CLASSES for m in ("precision", "recall", "f1")]
    return [
        "mae", "mae_at_10", "mae_at_20", "pearson",
        "precision_at_0.1", "recall_at_0.1", "f1_at_0.1",
        "precision_at_0.2", "recall_at_0.2", "f1_at_0.2",
    ]


def predict_with_model(
    model: ClimateGatedUNet, sample: TensorSample, device: torch.device
) -> np.ndarray:
    """Task-space prediction map for one sample."""
    model.eval()
    with torch.no_grad():
        out = model(
            sample.images.to(device),
            sample.dem.to(device) if sample.dem is not None else None,
            sample.climate.to(device) if sample.climate is not None else None,
        ).cpu()
    task = model.config.task
    if task is Task.CHANGE:
        return (out[0].numpy() > 0.0).astype(np.int8)
    if task is Task.DIRECTION:
        return out.argmax(dim=0).numpy().astype(np.int8)
    return out[0].numpy().astype(np.float64) * 2.0  # back to the [0, 2] scale


def _classification_values(pred, gt, n_classes, class_names) -> tuple[dict, dict]:
    acc = ConfusionAccumulator(n_classes)
    acc.update(pred, gt)
    values, flags = {}, {}
    for name, s in zip(class_names, acc.scores()):
        values[f"{name}_precision"] = s.precision
        values[f"{name}_recall"] = s.recall
        values[f"{name}_f1"] = s.f1
        if s.undefined:
            flags[f"{name}_f1"] = "undefined"
    return values, flags


def _regression_values(pred, gt, valid) -> tuple[dict, dict]:
    values = {
        "mae": mae(pred, gt, valid),
        "mae_at_10": mae_at_top(pred, gt, 0.1, valid),
        "mae_at_20": mae_at_top(pred, gt, 0.2, valid),
        "pearson": pearson(pred, gt, valid),
    }
    flags = {}
    if np.isnan(values["pearson"]):
        values["pearson"] = 0.0
        flags["pearson"] = "undefined"
    for t in (0.1, 0.2):
        masked_pred = np.asarray(pred)[np.asarray(valid, dtype=bool)]
        masked_gt = np.asarray(gt)[np.asarray(valid, dtype=bool)]
        s = thresholded_metrics(masked_pred, masked_gt, t)
        values[f"precision_at_{t}"] = s.precision
        values[f"recall_at_{t}"] = s.recall
        values[f"f1_at_{t}"] = s.f1
        if s.undefined:
            flags[f"f1_at_{t}"] = "undefined"
    return values, flags


def score_predictions(
    task: Task, preds: list[np.ndarray], records: list[SampleRecord]
) -> tuple[dict, dict, dict]:
    """Pooled metric values, flags, and per-sample score dicts."""
    per_sample: dict[str, dict[str, float]] = {}
    if task is Task.MAGNITUDE:
        pooled_pred, pooled_gt, pooled_valid = [], [], []
        for pred, rec in zip(preds, records):
            gt = rec.targets.magnitude
            valid = rec.targets.target.valid
            pooled_pred.append(pred.ravel())
            pooled_gt.append(gt.ravel())
            pooled_valid.append(valid.ravel())
            vals, _ = _regression_values(pred, gt, valid)
            per_sample[rec.sample_id] = vals
        values, flags = _regression_values(
            np.concatenate(pooled_pred), np.concatenate(pooled_gt), np.concatenate(pooled_valid)
        )
        return values, flags, per_sample

    n_classes = 2 if task is Task.CHANGE else 3
    names = CHANGE_CLASSES if task is Task.CHANGE else DIRECTION_CLASSES
    acc = ConfusionAccumulator(n_classes)
    for pred, rec in zip(preds, records):
        gt = rec.targets.change_mask if task is Task.CHANGE else rec.targets.direction_mask
        acc.update(pred, gt)
        vals, _ = _classification_values(pred, gt, n_classes, names)
        if task is Task.DIRECTION:
            vals["direction_mean_f1"] = 0.5 * (vals["neg_f1"] + vals["pos_f1"])
        per_sample[rec.sample_id] = vals
    values, flags = {}, {}
    for name, s in zip(names, acc.scores()):
        values[f"{name}_precision"] = s.precision
        values[f"{name}_recall"] = s.recall
        values[f"{name}_f1"] = s.f1
        if s.undefined:
            flags[f"{name}_f1"] = "undefined"
    if task is Task.DIRECTION:
        values["direction_mean_f1"] = 0.5 * (values["neg_f1"] + values["pos_f1"])
    return values, flags, per_sample


def _sanitize_baseline(pred: np.ndarray, task: Task) -> np.ndarray:
    if task is Task.MAGNITUDE:
        return pred
    out = pred.copy()
    out[out == IGNORE_LABEL] = 0 if task is Task.CHANGE else 1  # NoCHG / NONE
    return out


def baseline_predictors(task: Task, threshold: float) -> dict[str, Callable[[SampleRecord], np.ndarray]]:
    def constant(rec: SampleRecord) -> np.ndarray:
        return constant_predict(rec.scene.spatial_shape, task)

    def persistence(rec: SampleRecord) -> np.ndarray:
        pred = persistence_predict(rec.scene.mndwi_stack(), task, threshold)
        return _sanitize_baseline(pred, task)

    return {"constant": constant, "persistence": persistence}


def evaluate_checkpoint(
    checkpoint_path: Path | str,
    manifest_path: Path | str,
    out_dir: Path | str,
    task: Task | None = None,
    split: Split = Split.TEST,
) -> dict[str, MetricReport]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model, extra = load_checkpoint(checkpoint_path)
    if task is not None and model.config.task is not task:
        raise UserError(
            f"checkpoint was trained for task {model.config.task.value!r}, not {task.value!r}"
        )
    task = model.config.task
    stats = NormalizationStats.from_dict(extra["normalization"])
    threshold = float(extra.get("experiment", {}).get("threshold", 0.1))
    device = torch.device("cuda" if torch.cuda.is_available() else "cpu")
    model = model.to(device)

    records = load_manifest_samples(manifest_path, split)
    if not records:
        raise UserError(f"manifest has no samples in the {split.value} split")

    def model_predict(rec: SampleRecord) -> np.ndarray:
        sample = record_to_tensors(rec, stats, task, model.config.use_dem, model.config.use_climate)
        return predict_with_model(model, sample, device)

    predictors = {"model": model_predict, **baseline_predictors(task, threshold)}

    reports: dict[str, MetricReport] = {}
    per_sample_all: dict[str, dict] = {}
    for name, predict in predictors.items():
        preds = [predict(rec) for rec in records]
        values, flags, per_sample = score_predictions(task, preds, records)
        report = MetricReport(
            task=task.value,
            model=name,
            values=values,
            flags=flags,
            sample_count=len(records),
        )
        report.save_json(out_dir / f"report_{name}.json")
        report.save_csv(out_dir / f"report_{name}.csv")
        (out_dir / f"per_sample_{name}.json").write_text(
            json.dumps(per_sample, indent=2, sort_keys=True)
        )
        reports[name] = report
        per_sample_all[name] = per_sample
        logger.info("%s on %d samples: %s", name, len(records), values)

    ttests = {}
    ids = sorted(per_sample_all["model"])
    for column in sorted(per_sample_all["model"][ids[0]]):
        a = np.array([per_sample_all["model"][i][column] for i in ids])
        b = np.array([per_sample_all["persistence"][i][column] for i in ids])
        p = paired_ttest(a, b)
        ttests[column] = {
            "p_value": p,
            "mean_model": float(a.mean()),
            "mean_persistence": float(b.mean()),
            "significant_p05": bool(p < 0.05),
            "significant_p01": bool(p < 0.01),
            "degenerate": bool(np.ptp(a - b) == 0.0),
        }
    (out_dir / "ttests.json").write_text(json.dumps(ttests, indent=2, sort_keys=True))

    info = {
        "task": task.value,
        "split": split.value,
        "sample_count": len(records),
        "primary_score": PRIMARY_SCORE[task],
        "run_info": extra.get("run_info", {}),
        "checkpoint": str(checkpoint_path),
    }
    (out_dir / "eval_info.json").write_text(json.dumps(info, indent=2, sort_keys=True))
    return reports
