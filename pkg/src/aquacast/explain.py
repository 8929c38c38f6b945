"""Explanation harness: per-channel (and DEM) ablation saliency on a frozen
checkpoint, plus climate-variability subgroup discovery with divergence and
global Shapley attribution.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .baselines import Task
from .data.series import BAND_NAMES, NormalizationStats, SampleRecord, Split
from .data.storage import load_manifest_samples
from .errors import UserError
from .metrics import ConfusionAccumulator, mae, pearson
from .model.checkpoint import load_checkpoint
from .train import record_to_tensors
from .evaluate import predict_with_model
from .xai import (
    ClimateItem,
    SaliencyReport,
    Subgroup,
    bin_dataset,
    enumerate_subgroups,
    global_shapley,
    normalize_saliency_rows,
    shapley_items,
    welch_significant,
)

logger = logging.getLogger(__name__)


# -- per-sample mergeable statistics ----------------------------------------


@dataclass
class _RegStat:
    abs_err_sum: float
    n: int
    sx: float
    sy: float
    sxx: float
    syy: float
    sxy: float


def _reg_stat(pred: np.ndarray, gt: np.ndarray, valid: np.ndarray) -> _RegStat:
    keep = np.asarray(valid, dtype=bool).ravel()
    x = np.asarray(pred, dtype=np.float64).ravel()[keep]
    y = np.asarray(gt, dtype=np.float64).ravel()[keep]
    return _RegStat(
        abs_err_sum=float(np.abs(x - y).sum()),
        n=int(x.size),
        sx=float(x.sum()),
        sy=float(y.sum()),
        sxx=float((x * x).sum()),
        syy=float((y * y).sum()),
        sxy=float((x * y).sum()),
    )


def _pool_mae(stats: list[_RegStat]) -> float:
    return sum(s.abs_err_sum for s in stats) / sum(s.n for s in stats)


def _pool_pearson(stats: list[_RegStat]) -> float:
    n = sum(s.n for s in stats)
    sx = sum(s.sx for s in stats)
    sy = sum(s.sy for s in stats)
    sxx = sum(s.sxx for s in stats)
    syy = sum(s.syy for s in stats)
    sxy = sum(s.sxy for s in stats)
    num = sxy - sx * sy / n
    den = np.sqrt(max(sxx - sx * sx / n, 0.0)) * np.sqrt(max(syy - sy * sy / n, 0.0))
    return float(num / den) if den > 0 else 0.0


def _pool_class_f1(class_index: int):
    def pool(stats: list[ConfusionAccumulator]) -> float:
        total = stats[0]
        for s in stats[1:]:
            total = total.merge(s)
        return total.scores()[class_index].f1

    return pool


def _metric_defs(task: Task):
    """(name, lower_is_better, per-sample stat builder, pooling fn) rows."""
    if task is Task.CHANGE:
        def builder(pred, rec):
            acc = ConfusionAccumulator(2)
            acc.update(pred, rec.targets.change_mask)
            return acc
        return [
            ("nochg_f1", False, builder, _pool_class_f1(0)),
            ("chg_f1", False, builder, _pool_class_f1(1)),
        ]
    if task is Task.DIRECTION:
        def builder(pred, rec):
            acc = ConfusionAccumulator(3)
            acc.update(pred, rec.targets.direction_mask)
            return acc
        return [
            ("neg_f1", False, builder, _pool_class_f1(0)),
            ("none_f1", False, builder, _pool_class_f1(1)),
            ("pos_f1", False, builder, _pool_class_f1(2)),
        ]

    def builder(pred, rec):
        return _reg_stat(pred, rec.targets.magnitude, rec.targets.target.valid)

    return [
        ("mae", True, builder, _pool_mae),
        ("pearson", False, builder, _pool_pearson),
    ]


def _per_sample_metric(task: Task, pred: np.ndarray, rec: SampleRecord, name: str) -> float:
    if task is Task.MAGNITUDE:
        valid = rec.targets.target.valid
        if name == "mae":
            return mae(pred, rec.targets.magnitude, valid)
        value = pearson(pred[valid], rec.targets.magnitude[valid])
        return 0.0 if np.isnan(value) else float(value)
    gt = rec.targets.change_mask if task is Task.CHANGE else rec.targets.direction_mask
    n_classes = 2 if task is Task.CHANGE else 3
    acc = ConfusionAccumulator(n_classes)
    acc.update(pred, gt)
    index = {"nochg_f1": 0, "chg_f1": 1, "neg_f1": 0, "none_f1": 1, "pos_f1": 2}[name]
    return acc.scores()[index].f1


def run_explain(
    checkpoint_path: Path | str,
    manifest_path: Path | str,
    out_dir: Path | str,
    theta: float = 0.15,
    welch_alpha: float | None = None,
    split: Split = Split.TEST,
) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model, extra = load_checkpoint(checkpoint_path)
    task = model.config.task
    stats = NormalizationStats.from_dict(extra["normalization"])
    device = torch.device("cuda" if torch.cuda.is_available() else "cpu")
    model = model.to(device).eval()

    records = load_manifest_samples(manifest_path, split)
    if not records:
        raise UserError(f"manifest has no samples in the {split.value} split")

    tensor_samples = [
        record_to_tensors(r, stats, task, model.config.use_dem, model.config.use_climate)
        for r in records
    ]
    metric_defs = _metric_defs(task)
    metric_names = [m[0] for m in metric_defs]
    notices: list[str] = []

    # -- channel saliency ----------------------------------------------------
    channel_names = list(BAND_NAMES) + (["dem"] if model.config.use_dem else [])
    baseline_preds = [predict_with_model(model, s, device) for s in tensor_samples]
    deltas = np.zeros((len(metric_defs), len(channel_names)))
    for ci, channel in enumerate(channel_names):
        ablated_preds = []
        for sample in tensor_samples:
            if channel == "dem":
                ablated = replace(sample, dem=torch.zeros_like(sample.dem))
            else:
                images = sample.images.clone()
                images[:, ci] = 0.0  # standardized zero = the channel mean
                ablated = replace(sample, images=images)
            ablated_preds.append(predict_with_model(model, ablated, device))
        for mi, (name, _, _, _) in enumerate(metric_defs):
            per_sample_delta = [
                _per_sample_metric(task, base, rec, name)
                - _per_sample_metric(task, abl, rec, name)
                for base, abl, rec in zip(baseline_preds, ablated_preds, records)
            ]
            deltas[mi, ci] = float(np.mean(per_sample_delta))

    saliency = SaliencyReport(
        metric_names=metric_names,
        channel_names=channel_names,
        raw=deltas,
        lower_is_better=[m[1] for m in metric_defs],
    )
    saliency.save_json(out_dir / "saliency.json")
    saliency.save_csv(out_dir / "saliency.csv")
    _heatmap(saliency, out_dir / "saliency_heatmap.png")

    # -- subgroup discovery and attribution ----------------------------------
    result: dict = {"saliency": saliency.to_dict(), "notices": notices}
    if not model.config.use_climate or any(r.climate is None for r in records):
        notices.append("subgroup analysis skipped: model was built without climate input")
        logger.info(notices[-1])
    else:
        windows_by_id = {r.sample_id: r.climate.windows for r in records}
        variable_names = records[0].climate.variable_names
        itemsets = bin_dataset(windows_by_id, variable_names)
        subgroups = enumerate_subgroups(itemsets, theta)

        stats_by_metric = {}
        for name, lower, builder, pool in metric_defs:
            stats_by_metric[name] = {
                rec.sample_id: builder(pred, rec)
                for pred, rec in zip(baseline_preds, records)
            }

        def members_of(j: frozenset) -> list:
            return [i for i, s in itemsets.items() if j <= s]

        def value_fn(name, pool):
            stat = stats_by_metric[name]
            full = pool(list(stat.values()))

            def value(j: frozenset) -> float:
                if not j:
                    return 0.0
                return pool([stat[i] for i in members_of(j)]) - full

            return value

        per_metric_values = {}
        for name, lower, builder, pool in metric_defs:
            value = value_fn(name, pool)
            for sg in subgroups:
                sg.divergence[name] = value(sg.items)
            per_metric_values[name] = value

        per_sample_scores = {
            name: {
                rec.sample_id: _per_sample_metric(task, pred, rec, name)
                for pred, rec in zip(baseline_preds, records)
            }
            for name, *_ in metric_defs
        }

        worst_rows = []
        for name, lower, _, _ in metric_defs:
            candidates = [sg for sg in subgroups if sg.items]
            if welch_alpha is not None:
                scores = per_sample_scores[name]
                kept = []
                for sg in candidates:
                    inside = [scores[i] for i in sg.member_ids]
                    outside = [scores[i] for i in scores if i not in set(sg.member_ids)]
                    if welch_significant(inside, outside, welch_alpha):
                        kept.append(sg)
                candidates = kept
            if not candidates:
                notices.append(f"no reportable subgroup for metric {name}")
                continue
            worst = (max if lower else min)(candidates, key=lambda sg: sg.divergence[name])
            worst_rows.append(
                {
                    "metric": name,
                    "subgroup": worst.describe(),
                    "support": worst.support,
                    "divergence": worst.divergence[name],
                }
            )

        universe = sorted({item for s in itemsets.values() for item in s})
        frequent_sets = [sg.items for sg in subgroups]
        attribution_rows = []
        most_least = {}
        for name, lower, _, _ in metric_defs:
            value = per_metric_values[name]
            phis = {}
            for item in universe:
                phi = global_shapley(item, frequent_sets, value)
                if phi is not None:
                    phis[item] = phi
                    attribution_rows.append(
                        {
                            "metric": name,
                            "item": f"{item.variable}={item.bin}",
                            "global_shapley": phi,
                        }
                    )
            ranked = sorted(phis, key=lambda i: phis[i], reverse=True)
            most_least[name] = {
                "most": [f"{i.variable}={i.bin}" for i in ranked[:2]],
                "least": [f"{i.variable}={i.bin}" for i in ranked[-2:]][::-1],
            }

        _write_subgroups(out_dir, subgroups, metric_names)
        (out_dir / "divergent_subgroups.json").write_text(
            json.dumps(worst_rows, indent=2, sort_keys=True)
        )
        _write_rows_csv(
            out_dir / "divergent_subgroups.csv",
            ["metric", "subgroup", "support", "divergence"],
            worst_rows,
        )
        (out_dir / "attribution.json").write_text(
            json.dumps(
                {"items": attribution_rows, "most_least": most_least},
                indent=2,
                sort_keys=True,
            )
        )
        _write_rows_csv(
            out_dir / "attribution.csv",
            ["metric", "item", "global_shapley"],
            attribution_rows,
        )
        result["most_least"] = most_least
        result["divergent_subgroups"] = worst_rows

    info = {
        "task": task.value,
        "split": split.value,
        "sample_count": len(records),
        "theta": theta,
        "welch_alpha": welch_alpha,
        "notices": notices,
        "run_info": extra.get("run_info", {}),
    }
    (out_dir / "explain_info.json").write_text(json.dumps(info, indent=2, sort_keys=True))
    return result


def _write_subgroups(out_dir: Path, subgroups: list[Subgroup], metric_names: list[str]) -> None:
    payload = [
        {
            "items": sg.describe(),
            "support": sg.support,
            "n_members": len(sg.member_ids),
            "divergence": {k: sg.divergence.get(k) for k in metric_names},
        }
        for sg in subgroups
    ]
    (out_dir / "subgroups.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    with open(out_dir / "subgroups.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["items", "support", "n_members"] + metric_names)
        for sg in subgroups:
            writer.writerow(
                [sg.describe(), repr(sg.support), len(sg.member_ids)]
                + [repr(sg.divergence.get(k)) for k in metric_names]
            )


def _write_rows_csv(path: Path, header: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [repr(row[k]) if isinstance(row[k], float) else row[k] for k in header]
            )


def _heatmap(saliency: SaliencyReport, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = saliency.normalized()
    fig, ax = plt.subplots(figsize=(1.2 * len(saliency.channel_names), 1.0 + 0.6 * len(saliency.metric_names)))
    im = ax.imshow(data, cmap="RdBu_r", vmin=-1.0, vmax=1.0)
    ax.set_xticks(range(len(saliency.channel_names)), saliency.channel_names, rotation=45)
    ax.set_yticks(range(len(saliency.metric_names)), saliency.metric_names)
    for r in range(data.shape[0]):
        for c in range(data.shape[1]):
            ax.text(c, r, f"{data[r, c]:.2f}", ha="center", va="center", fontsize=8)
    fig.colorbar(im, ax=ax, label="row-normalized saliency")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
