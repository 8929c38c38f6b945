"""Training losses.

Regression: a Huber base loss combined at multiple spatial scales and over
wavelet sub-bands, mixed as ``alpha_total * multiscale + (1 - alpha_total) *
wavelet``. Classification: an equally weighted sum of generalized Dice and
focal losses with ignore-label support.

Validity handling: invalid pixels are excluded from the base-scale Huber
mean; for downscaled and wavelet terms both prediction and target are
zero-filled at invalid pixels first, so those pixels contribute zero error
and zero gradient at every scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .wavelets import _check_family, dwt2


@dataclass
class RegressionLossConfig:
    huber_delta: float = 1.0
    scales: tuple[int, ...] = (2, 4)
    wavelet_family: str = "haar"
    wavelet_levels: int = 2
    alpha_low: float = 1.0
    detail_weights: tuple[float, ...] = (1.0, 1.0)
    alpha_total: float = 0.5

    def __post_init__(self) -> None:
        if self.huber_delta <= 0:
            raise ValueError("huber_delta must be positive")
        if not self.scales:
            raise ValueError("at least one scale is required")
        for s in self.scales:
            if int(s) != s or s < 2:
                raise ValueError(f"scales must be integers >= 2, got {s}")
        if not 0.0 <= self.alpha_total <= 1.0:
            raise ValueError("alpha_total must lie in [0, 1]")
        if self.alpha_low < 0 or any(w < 0 for w in self.detail_weights):
            raise ValueError("loss weights must be nonnegative")
        if len(self.detail_weights) != self.wavelet_levels:
            raise ValueError(
                f"need one detail weight per wavelet level: "
                f"{len(self.detail_weights)} weights for {self.wavelet_levels} levels"
            )
        _check_family(self.wavelet_family)


def huber(pred: torch.Tensor, tgt: torch.Tensor, delta: float) -> torch.Tensor:
    """Per-element Huber loss: quadratic for |e| <= delta, linear beyond."""
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if pred.shape != tgt.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(tgt.shape)}")
    err = pred - tgt
    abs_err = err.abs()
    quad = 0.5 * err ** 2
    lin = delta * (abs_err - 0.5 * delta)
    return torch.where(abs_err <= delta, quad, lin)


def _masked_mean(per_pixel: torch.Tensor, valid: torch.Tensor | None) -> torch.Tensor:
    if valid is None:
        return per_pixel.mean()
    n = valid.sum()
    if n == 0:
        raise ValueError("empty loss support: no valid pixels")
    return (per_pixel * valid).sum() / n


def _zero_fill(pred: torch.Tensor, tgt: torch.Tensor, valid: torch.Tensor | None):
    if valid is None:
        return pred, tgt
    return pred * valid, tgt * valid


def downscale(grid: torch.Tensor, factor: int) -> torch.Tensor:
    """Average pooling with kernel = stride = factor on the trailing 2 dims.

    Dimensions not divisible by the factor are zero-padded up to the next
    multiple before pooling (padded zeros count toward the average).
    """
    if factor < 2:
        raise ValueError(f"downscale factor must be >= 2, got {factor}")
    h, w = grid.shape[-2:]
    pad_h = (-h) % factor
    pad_w = (-w) % factor
    x = grid.reshape(-1, 1, h, w)
    if pad_h or pad_w:
        x = F.pad(x, (0, pad_w, 0, pad_h))
    x = F.avg_pool2d(x, kernel_size=factor, stride=factor)
    return x.reshape(*grid.shape[:-2], *x.shape[-2:])


def multiscale_loss(
    pred: torch.Tensor,
    tgt: torch.Tensor,
    config: RegressionLossConfig,
    valid: torch.Tensor | None = None,
) -> torch.Tensor:
    """(1/M) * [Huber(pred, tgt) + sum_i Huber(down_si(pred), down_si(tgt))]."""
    if pred.shape != tgt.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(tgt.shape)}")
    total = _masked_mean(huber(pred, tgt, config.huber_delta), valid)
    pred_f, tgt_f = _zero_fill(pred, tgt, valid)
    for s in config.scales:
        total = total + huber(downscale(pred_f, s), downscale(tgt_f, s), config.huber_delta).mean()
    return total / len(config.scales)


def wavelet_loss(
    pred: torch.Tensor,
    tgt: torch.Tensor,
    config: RegressionLossConfig,
    valid: torch.Tensor | None = None,
) -> torch.Tensor:
    """alpha_low * mean Huber over approximation coefficients plus the
    weighted per-level mean Huber over detail coefficients (all three
    orientations pooled within a level)."""
    if pred.shape != tgt.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(tgt.shape)}")
    pred_f, tgt_f = _zero_fill(pred, tgt, valid)
    dec_p = dwt2(pred_f, config.wavelet_levels, config.wavelet_family)
    dec_t = dwt2(tgt_f, config.wavelet_levels, config.wavelet_family)
    loss = config.alpha_low * huber(dec_p.approx, dec_t.approx, config.huber_delta).mean()
    for w_i, bands_p, bands_t in zip(config.detail_weights, dec_p.details, dec_t.details):
        level_terms = [
            huber(bp, bt, config.huber_delta) for bp, bt in zip(bands_p, bands_t)
        ]
        loss = loss + w_i * torch.cat([t.reshape(-1) for t in level_terms]).mean()
    return loss


def total_regression_loss(
    pred: torch.Tensor,
    tgt: torch.Tensor,
    config: RegressionLossConfig,
    valid: torch.Tensor | None = None,
) -> torch.Tensor:
    """alpha_total * multiscale + (1 - alpha_total) * wavelet."""
    a = config.alpha_total
    if a == 1.0:
        return multiscale_loss(pred, tgt, config, valid)
    if a == 0.0:
        return wavelet_loss(pred, tgt, config, valid)
    return a * multiscale_loss(pred, tgt, config, valid) + (1.0 - a) * wavelet_loss(
        pred, tgt, config, valid
    )


@dataclass
class ClassificationLossConfig:
    focal_gamma: float = 2.0
    dice_smooth: float = 1e-6


def _class_probabilities(logits: torch.Tensor) -> torch.Tensor:
    """(N, K, ...) class probabilities from logits.

    A single-channel logit map is treated as the positive-class logit of a
    two-class problem (classes ordered [negative, positive]); multi-channel
    maps go through softmax.
    """
    if logits.shape[1] == 1:
        p = torch.sigmoid(logits)
        return torch.cat([1.0 - p, p], dim=1)
    return torch.softmax(logits, dim=1)


def combo_classification_loss(
    logits: torch.Tensor,
    mask: torch.Tensor,
    ignore_label: int = -1,
    config: ClassificationLossConfig | None = None,
) -> torch.Tensor:
    """Generalized Dice + focal loss, equally weighted, over non-ignored pixels.

    Dice class weights are 1 / (class pixel count)^2; classes absent from the
    ground truth are dropped from the Dice sums. The focal term is
    (1 - p_true)^gamma * cross-entropy.
    """
    if config is None:
        config = ClassificationLossConfig()
    if logits.dim() != mask.dim() + 1:
        raise ValueError(
            f"expected logits (N, K, ...) and mask (N, ...), got {tuple(logits.shape)} / {tuple(mask.shape)}"
        )
    keep = mask != ignore_label
    if not bool(keep.any()):
        raise ValueError("empty loss support: all pixels ignore-labeled")

    probs = _class_probabilities(logits)
    n_classes = probs.shape[1]
    labels = mask.clamp(min=0).long()
    onehot = F.one_hot(labels, n_classes).movedim(-1, 1).to(probs.dtype)
    keep_f = keep.unsqueeze(1).to(probs.dtype)

    # Generalized Dice over the non-ignored support.
    inter = (probs * onehot * keep_f).sum(dim=tuple(range(2, probs.dim()))).sum(dim=0)
    sums = ((probs + onehot) * keep_f).sum(dim=tuple(range(2, probs.dim()))).sum(dim=0)
    counts = (onehot * keep_f).sum(dim=tuple(range(2, probs.dim()))).sum(dim=0)
    present = counts > 0
    weights = torch.zeros_like(counts)
    weights[present] = 1.0 / counts[present] ** 2
    dice = 1.0 - (2.0 * (weights * inter).sum() + config.dice_smooth) / (
        (weights * sums).sum() + config.dice_smooth
    )

    p_true = (probs * onehot).sum(dim=1).clamp_min(1e-12)
    focal = ((1.0 - p_true) ** config.focal_gamma) * (-torch.log(p_true))
    focal = focal[keep].mean()

    return dice + focal
