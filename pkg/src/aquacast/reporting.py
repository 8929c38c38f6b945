"""Consolidated reporting: merges every metric report found under a results
tree into comparison tables (markdown + CSV) and renders loss curves, metric
bars, and saliency heatmaps with deterministic file names.
"""

from __future__ import annotations

import json
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import UserError
from .metrics import MetricReport
from .xai import SaliencyReport

MISSING = "—"


def _find(results_dir: Path, pattern: str) -> list[Path]:
    return sorted(results_dir.rglob(pattern))


def _run_label(results_dir: Path, path: Path) -> str:
    rel = path.relative_to(results_dir)
    parts = [p for p in rel.parts[:-1] if p not in ("eval", "explain", "train")]
    return "/".join(parts) if parts else "."


def generate_report(results_dir: Path | str, out_dir: Path | str) -> Path:
    results_dir = Path(results_dir)
    out_dir = Path(out_dir)
    if not results_dir.exists():
        raise UserError(f"results directory not found: {results_dir}")
    report_files = _find(results_dir, "report_*.json")
    if not report_files:
        raise UserError(f"no metric reports under {results_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for path in report_files:
        rep = MetricReport.load_json(path)
        rows.append(
            {
                "run": _run_label(results_dir, path),
                "task": rep.task,
                "model": rep.model,
                "values": rep.values,
                "samples": rep.sample_count,
            }
        )

    by_task: dict[str, list[dict]] = defaultdict(list)
    for row in rows:
        by_task[row["task"]].append(row)

    lines = ["# Run comparison", ""]
    infos = _find(results_dir, "eval_info.json")
    if infos:
        info = json.loads(infos[0].read_text())
        lines += ["## Settings", "", "```json", json.dumps(info.get("run_info", {}), indent=2, sort_keys=True), "```", ""]
    csv_lines = []
    for task, task_rows in sorted(by_task.items()):
        columns = sorted({k for row in task_rows for k in row["values"]})
        lines.append(f"## Task: {task}")
        lines.append("")
        lines.append("| run | model | " + " | ".join(columns) + " |")
        lines.append("|" + "---|" * (len(columns) + 2))
        csv_lines.append("task,run,model," + ",".join(columns))
        for row in sorted(task_rows, key=lambda r: (r["run"], r["model"])):
            cells = [
                f"{row['values'][c]:.4f}" if c in row["values"] else MISSING
                for c in columns
            ]
            lines.append(f"| {row['run']} | {row['model']} | " + " | ".join(cells) + " |")
            csv_lines.append(
                ",".join(
                    [task, row["run"], row["model"]]
                    + [repr(row["values"][c]) if c in row["values"] else MISSING for c in columns]
                )
            )
        lines.append("")

    ttest_files = _find(results_dir, "ttests.json")
    if ttest_files:
        lines.append("## Significance vs persistence (paired t-test)")
        lines.append("")
        for path in ttest_files:
            data = json.loads(path.read_text())
            lines.append(f"### {_run_label(results_dir, path)}")
            lines.append("")
            lines.append("| metric | p-value | p<0.05 | p<0.01 |")
            lines.append("|---|---|---|---|")
            for metric, entry in sorted(data.items()):
                star05 = "*" if entry["significant_p05"] else ""
                star01 = "*" if entry["significant_p01"] else ""
                lines.append(f"| {metric} | {entry['p_value']:.3g} | {star05} | {star01} |")
            lines.append("")

    (out_dir / "metrics.csv").write_text("\n".join(csv_lines) + "\n")
    _plot_losses(results_dir, out_dir)
    _plot_metric_bars(by_task, out_dir)
    _merge_saliency(results_dir, out_dir, lines)

    report_path = out_dir / "report.md"
    report_path.write_text("\n".join(lines) + "\n")
    return report_path


def _plot_losses(results_dir: Path, out_dir: Path) -> None:
    logs = _find(results_dir, "training_log.jsonl")
    if not logs:
        return
    fig, ax = plt.subplots(figsize=(7, 4))
    for path in logs:
        entries = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        if not entries:
            continue
        losses = [e["mean_loss"] for e in entries]
        ax.plot(range(len(losses)), losses, label=_run_label(results_dir, path))
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_dir / "loss_curves.png", dpi=120)
    plt.close(fig)


def _plot_metric_bars(by_task: dict, out_dir: Path) -> None:
    primary = {"change": "chg_f1", "direction": "direction_mean_f1", "magnitude": "mae"}
    fig, axes = plt.subplots(1, max(len(by_task), 1), figsize=(4 * max(len(by_task), 1), 3.5))
    if len(by_task) <= 1:
        axes = [axes]
    for ax, (task, rows) in zip(axes, sorted(by_task.items())):
        key = primary.get(task)
        labels, values = [], []
        for row in sorted(rows, key=lambda r: (r["run"], r["model"])):
            if key and key in row["values"]:
                labels.append(f"{row['run']}:{row['model']}")
                values.append(row["values"][key])
        ax.bar(range(len(values)), values, color="tab:blue")
        ax.set_xticks(range(len(labels)), labels, rotation=60, ha="right", fontsize=7)
        ax.set_title(f"{task}: {key}")
    fig.tight_layout()
    fig.savefig(out_dir / "metric_bars.png", dpi=120)
    plt.close(fig)


def _merge_saliency(results_dir: Path, out_dir: Path, lines: list[str]) -> None:
    files = _find(results_dir, "saliency.json")
    if not files:
        return
    reports = [SaliencyReport.load_json(p) for p in files]
    channel_names = reports[0].channel_names
    metric_names: list[str] = []
    rows = []
    for rep, path in zip(reports, files):
        label = _run_label(results_dir, path)
        norm = rep.normalized()
        for name, row in zip(rep.metric_names, norm):
            metric_names.append(f"{label}:{name}")
            padded = list(row) + [0.0] * (len(channel_names) - len(row))
            rows.append(padded[: len(channel_names)])
    data = np.array(rows)
    fig, ax = plt.subplots(figsize=(1.2 * len(channel_names), 1.0 + 0.5 * len(metric_names)))
    im = ax.imshow(data, cmap="RdBu_r", vmin=-1, vmax=1)
    ax.set_xticks(range(len(channel_names)), channel_names, rotation=45)
    ax.set_yticks(range(len(metric_names)), metric_names, fontsize=7)
    fig.colorbar(im, ax=ax, label="row-normalized saliency")
    fig.tight_layout()
    fig.savefig(out_dir / "saliency_heatmap.png", dpi=120)
    plt.close(fig)
    lines.append("## Saliency")
    lines.append("")
    lines.append("![saliency](saliency_heatmap.png)")
    lines.append("")
