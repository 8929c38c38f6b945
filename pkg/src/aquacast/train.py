"""Training harness: sample-to-tensor conversion, optional spatial
augmentation, the cosine/warmup schedule, and the two-phase (pretrain then
fine-tune) loop with best/last checkpointing and resume support.

Determinism: batch order is drawn from a stateless per-(phase, epoch) RNG,
so a resumed run replays exactly the batches an uninterrupted run would see.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .baselines import Task
from .config import AugmentConfig, ExperimentConfig
from .data.series import (
    NormalizationStats,
    SampleRecord,
    Split,
    compute_normalization_stats,
    standardize_record,
)
from .data.storage import load_manifest_samples
from .errors import TrainingDiverged, UserError
from .losses import combo_classification_loss, total_regression_loss
from .metrics import confusion_metrics, mae
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.network import ClimateGatedUNet

logger = logging.getLogger(__name__)


def cosine_warmup_lr(step: int, total_steps: int, max_lr: float, warmup_frac: float) -> float:
    """Linear warmup to max_lr, then cosine decay; exactly max_lr at the end
    of warmup and 0 at the final step."""
    if total_steps <= 1:
        return max_lr
    warmup_steps = max(1, round(warmup_frac * total_steps))
    if step <= warmup_steps:
        return max_lr * step / warmup_steps
    progress = (step - warmup_steps) / max(1, total_steps - 1 - warmup_steps)
    return max_lr * 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))


@dataclass
class TensorSample:
    images: torch.Tensor  # (T, C, H, W) standardized
    dem: torch.Tensor | None  # (1, H, W)
    climate: torch.Tensor | None  # (T, T1, C1)
    label: torch.Tensor  # task-dependent
    valid: torch.Tensor  # (H, W) bool, target support
    sample_id: str


def record_to_tensors(
    record: SampleRecord, stats: NormalizationStats, task: Task, use_dem: bool, use_climate: bool
) -> TensorSample:
    std = standardize_record(record, stats)
    images = torch.from_numpy(std.scene.images.copy())
    dem = torch.from_numpy(std.dem.elevation.copy()) if use_dem and std.dem is not None else None
    climate = (
        torch.from_numpy(std.climate.windows.copy())
        if use_climate and std.climate is not None
        else None
    )
    if use_dem and dem is None:
        raise UserError("model requires a DEM but the sample has none")
    if use_climate and climate is None:
        raise UserError("model requires climate windows but the sample has none")
    tp = record.targets
    if task is Task.CHANGE:
        label = torch.from_numpy(tp.change_mask.astype(np.int64))
    elif task is Task.DIRECTION:
        label = torch.from_numpy(tp.direction_mask.astype(np.int64))
    else:
        # Magnitude is regressed on the half-scale ([0, 1]) target and
        # doubled back at prediction time.
        label = torch.from_numpy((tp.magnitude / 2.0).astype(np.float32))
    valid = torch.from_numpy(tp.target.valid.copy())
    return TensorSample(images, dem, climate, label, valid, record.sample_id)


def _collate(samples: list[TensorSample]):
    images = torch.stack([s.images for s in samples])
    dem = torch.stack([s.dem for s in samples]) if samples[0].dem is not None else None
    climate = (
        torch.stack([s.climate for s in samples]) if samples[0].climate is not None else None
    )
    labels = torch.stack([s.label for s in samples])
    valid = torch.stack([s.valid for s in samples])
    return images, dem, climate, labels, valid


# ---------------------------------------------------------------------------
# Spatial augmentation (rotation, translation, zoom-crop), applied with one
# transform per sample to inputs and labels alike: continuous grids sample
# bilinearly, masks and labels nearest; pixels mapped from outside the frame
# become ignore-labeled.


def _affine_grid(theta_deg, translate, scale, hw, dtype):
    h, w = hw
    a = math.radians(theta_deg)
    cos, sin = math.cos(a) / scale, math.sin(a) / scale
    mat = torch.tensor(
        [[cos, -sin, translate[0]], [sin, cos, translate[1]]], dtype=dtype
    ).unsqueeze(0)
    return torch.nn.functional.affine_grid(mat, (1, 1, h, w), align_corners=False)


def augment_sample(sample: TensorSample, task: Task, rng: np.random.Generator, cfg: AugmentConfig) -> TensorSample:
    theta = float(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg))
    tx, ty = rng.uniform(-cfg.translate_frac, cfg.translate_frac, size=2)
    scale = float(rng.uniform(cfg.crop_scale_min, cfg.crop_scale_max))
    hw = sample.images.shape[-2:]
    grid = _affine_grid(theta, (float(tx), float(ty)), scale, hw, sample.images.dtype)

    def warp(x: torch.Tensor, mode: str) -> torch.Tensor:
        flat = x.reshape(1, -1, *hw).float()
        out = torch.nn.functional.grid_sample(
            flat, grid, mode=mode, padding_mode="zeros", align_corners=False
        )
        return out.reshape(x.shape)

    inside = warp(torch.ones(1, *hw), "nearest")[0] > 0.5
    images = warp(sample.images, "bilinear")
    dem = warp(sample.dem, "bilinear") if sample.dem is not None else None
    if task is Task.MAGNITUDE:
        label = warp(sample.label.unsqueeze(0), "nearest")[0]
    else:
        label = warp(sample.label.unsqueeze(0).float(), "nearest")[0].long()
        label[~inside] = -1
    valid = warp(sample.valid.unsqueeze(0).float(), "nearest")[0] > 0.5
    valid &= inside
    return TensorSample(images, dem, sample.climate, label, valid, sample.sample_id)


# ---------------------------------------------------------------------------


def compute_loss(model_out, labels, valid, task: Task, loss_cfg) -> torch.Tensor:
    if task is Task.MAGNITUDE:
        return total_regression_loss(model_out[:, 0], labels, loss_cfg, valid)
    return combo_classification_loss(model_out, labels)


def validation_score(model: ClimateGatedUNet, samples: list[TensorSample], task: Task, device) -> float:
    """Higher-is-better scalar for checkpoint selection."""
    model.eval()
    preds, gts, valids = [], [], []
    with torch.no_grad():
        for i in range(0, len(samples), 8):
            images, dem, climate, labels, valid = _collate(samples[i : i + 8])
            out = model(
                images.to(device),
                dem.to(device) if dem is not None else None,
                climate.to(device) if climate is not None else None,
            ).cpu()
            preds.append(out)
            gts.append(labels)
            valids.append(valid)
    pred = torch.cat(preds)
    gt = torch.cat(gts)
    valid = torch.cat(valids)
    if task is Task.MAGNITUDE:
        return -mae(pred[:, 0].numpy(), gt.numpy(), valid.numpy())
    if task is Task.CHANGE:
        hard = (pred[:, 0] > 0).long().numpy()
        return confusion_metrics(hard, gt.numpy(), 2)[1].f1
    hard = pred.argmax(dim=1).numpy()
    scores = confusion_metrics(hard, gt.numpy(), 3)
    return 0.5 * (scores[0].f1 + scores[2].f1)  # mean of NEG and POS


@dataclass
class TrainResult:
    best_checkpoint: Path
    last_checkpoint: Path
    log_path: Path
    best_score: float


def _phases(cfg: ExperimentConfig, records_by_split) -> list[tuple[str, list, int, float]]:
    phases = []
    pretrain = records_by_split.get(Split.PRETRAIN, [])
    finetune = records_by_split.get(Split.FINETUNE, [])
    if pretrain and cfg.schedule.pretrain_epochs > 0:
        phases.append(("pretrain", pretrain, cfg.schedule.pretrain_epochs, cfg.schedule.pretrain_lr))
    if finetune and cfg.schedule.finetune_epochs > 0:
        phases.append(("finetune", finetune, cfg.schedule.finetune_epochs, cfg.schedule.finetune_lr))
    if not phases:
        raise UserError("no trainable samples: need a pretrain or finetune split")
    return phases


def train_model(
    cfg: ExperimentConfig,
    manifest_path: Path | str,
    out_dir: Path | str,
    resume_from: Path | str | None = None,
    stop_after_epochs: int | None = None,
) -> TrainResult:
    """Run the configured phases; ``stop_after_epochs`` ends this invocation
    early (checkpoints intact) without altering the schedule, emulating an
    interrupted run that a later ``resume_from`` continues exactly."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    device = torch.device("cuda" if torch.cuda.is_available() else "cpu")
    torch.manual_seed(cfg.seed)

    records = load_manifest_samples(manifest_path)
    records_by_split: dict[Split, list[SampleRecord]] = {}
    for rec in records:
        records_by_split.setdefault(rec.split, []).append(rec)
    pretrain = records_by_split.get(Split.PRETRAIN, [])
    if not pretrain:
        raise UserError("manifest has no pretrain samples; statistics need that split")
    stats = compute_normalization_stats(pretrain)

    # Validation is carved from the fine-tune split when present (10%),
    # otherwise from the pretrain split.
    val_source = Split.FINETUNE if records_by_split.get(Split.FINETUNE) else Split.PRETRAIN
    pool = records_by_split[val_source]
    n_val = max(1, int(round(cfg.schedule.val_fraction * len(pool))))
    val_records = pool[-n_val:]
    records_by_split[val_source] = pool[:-n_val]

    task = cfg.task
    to_tensor = lambda rec: record_to_tensors(
        rec, stats, task, cfg.model.use_dem, cfg.model.use_climate
    )
    val_samples = [to_tensor(r) for r in val_records]

    phases = _phases(cfg, records_by_split)
    model = ClimateGatedUNet(cfg.model).to(device)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=phases[0][3], weight_decay=cfg.schedule.weight_decay
    )

    start_phase, start_epoch = 0, 0
    best_score = -math.inf
    if resume_from is not None:
        model, extra = load_checkpoint(resume_from, expected_config=cfg.model)
        model = model.to(device)
        optimizer = torch.optim.AdamW(
            model.parameters(), lr=phases[0][3], weight_decay=cfg.schedule.weight_decay
        )
        optimizer.load_state_dict(extra["optimizer_state"])
        start_phase = extra["phase_index"]
        start_epoch = extra["epoch"] + 1
        best_score = extra.get("best_score", -math.inf)
        logger.info("resumed from %s at phase %d epoch %d", resume_from, start_phase, start_epoch)

    log_path = out_dir / "training_log.jsonl"
    best_path = out_dir / "best.pt"
    last_path = out_dir / "last.pt"
    log_fh = open(log_path, "a" if resume_from else "w")

    batch = cfg.schedule.batch_size
    epochs_this_run = 0
    try:
        for phase_index, (phase_name, phase_records, epochs, max_lr) in enumerate(phases):
            if phase_index < start_phase:
                continue
            train_samples = [to_tensor(r) for r in phase_records]
            steps_per_epoch = math.ceil(len(train_samples) / batch)
            total_steps = steps_per_epoch * epochs
            first_epoch = start_epoch if phase_index == start_phase else 0
            for epoch in range(first_epoch, epochs):
                rng = np.random.default_rng(
                    (cfg.seed * 1_000_003 + phase_index * 10_007 + epoch) % (2 ** 63)
                )
                order = rng.permutation(len(train_samples))
                model.train()
                epoch_losses = []
                for step_in_epoch in range(steps_per_epoch):
                    global_step = epoch * steps_per_epoch + step_in_epoch + 1
                    lr = cosine_warmup_lr(global_step, total_steps, max_lr, cfg.schedule.warmup_frac)
                    for group in optimizer.param_groups:
                        group["lr"] = lr
                    idx = order[step_in_epoch * batch : (step_in_epoch + 1) * batch]
                    chunk = [train_samples[i] for i in idx]
                    if cfg.augment.enabled:
                        chunk = [augment_sample(s, task, rng, cfg.augment) for s in chunk]
                    images, dem, climate, labels, valid = _collate(chunk)
                    out = model(
                        images.to(device),
                        dem.to(device) if dem is not None else None,
                        climate.to(device) if climate is not None else None,
                    )
                    loss = compute_loss(out, labels.to(device), valid.to(device), task, cfg.loss)
                    if not torch.isfinite(loss):
                        dump = out_dir / "divergence_dump.json"
                        dump.write_text(json.dumps({
                            "phase": phase_name, "epoch": epoch, "step": step_in_epoch,
                            "lr": lr, "loss": float(loss.item()),
                            "sample_ids": [s.sample_id for s in chunk],
                        }, indent=2))
                        raise TrainingDiverged(f"non-finite loss at {phase_name} epoch {epoch}; see {dump}")
                    optimizer.zero_grad()
                    loss.backward()
                    optimizer.step()
                    epoch_losses.append(float(loss.item()))
                score = validation_score(model, val_samples, task, device)
                entry = {
                    "phase": phase_name,
                    "epoch": epoch,
                    "mean_loss": float(np.mean(epoch_losses)),
                    "lr_last": lr,
                    "val_score": score,
                }
                log_fh.write(json.dumps(entry) + "\n")
                log_fh.flush()
                logger.info("%s epoch %d: loss %.4f val %.4f", phase_name, epoch, entry["mean_loss"], score)
                extra = {
                    "optimizer_state": optimizer.state_dict(),
                    "phase_index": phase_index,
                    "phase": phase_name,
                    "epoch": epoch,
                    "best_score": max(best_score, score),
                    "normalization": stats.to_dict(),
                    "experiment": cfg.to_dict(),
                    "run_info": cfg.run_info(),
                }
                save_checkpoint(last_path, model, extra)
                if score > best_score:
                    best_score = score
                    save_checkpoint(best_path, model, extra)
                epochs_this_run += 1
                if stop_after_epochs is not None and epochs_this_run >= stop_after_epochs:
                    return TrainResult(best_path, last_path, log_path, best_score)
            start_epoch = 0
    finally:
        log_fh.close()
    if not best_path.exists():  # all scores were -inf (degenerate); keep last
        save_checkpoint(best_path, model, extra)
    return TrainResult(best_path, last_path, log_path, best_score)
