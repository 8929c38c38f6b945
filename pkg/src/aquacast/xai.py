"""Explainability: climate-variability binning, subgroup discovery with
performance divergence, exact Shapley attribution of itemsets, and
perturbation-based channel saliency.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Hashable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import stats as _scipy_stats

BIN_LABELS = ("L", "M", "H")


class ClimateItem(NamedTuple):
    variable: str
    bin: str


def variability_bins(stds: Sequence[float]) -> list[str]:
    """Assign L/M/H by the empirical tertiles of per-sample variability.

    Boundaries sit at the 33.3% and 66.7% quantiles; values exactly on a
    boundary go to the lower bin.
    """
    stds = np.asarray(stds, dtype=np.float64)
    if stds.size < 3:
        raise ValueError(f"need at least 3 samples to bin, got {stds.size}")
    q1, q2 = np.quantile(stds, [1.0 / 3.0, 2.0 / 3.0])
    out = []
    for s in stds:
        if s <= q1:
            out.append("L")
        elif s <= q2:
            out.append("M")
        else:
            out.append("H")
    return out


def sample_variability(windows: np.ndarray) -> np.ndarray:
    """Per-variable std over a sample's concatenated (T, T1, C1) climate
    window; returns shape (C1,)."""
    w = np.asarray(windows, dtype=np.float64)
    return w.reshape(-1, w.shape[-1]).std(axis=0)


def bin_dataset(
    windows_by_id: Mapping[Hashable, np.ndarray], variable_names: Sequence[str]
) -> dict[Hashable, frozenset[ClimateItem]]:
    """Bin every sample's variability per variable; returns each sample's
    itemset (one item per variable)."""
    ids = list(windows_by_id)
    stds = np.stack([sample_variability(windows_by_id[i]) for i in ids])
    items: dict[Hashable, set[ClimateItem]] = {i: set() for i in ids}
    for v, name in enumerate(variable_names):
        for i, label in zip(ids, variability_bins(stds[:, v])):
            items[i].add(ClimateItem(name, label))
    return {i: frozenset(s) for i, s in items.items()}


@dataclass
class Subgroup:
    items: frozenset[ClimateItem]
    support: float
    member_ids: tuple
    divergence: dict[str, float] = field(default_factory=dict)

    def sort_key(self) -> tuple:
        return (len(self.items), sorted((i.variable, i.bin) for i in self.items))

    def describe(self) -> str:
        if not self.items:
            return "{}"
        parts = sorted(f"{i.variable}={i.bin}" for i in self.items)
        return "{" + ", ".join(parts) + "}"


def enumerate_subgroups(
    itemsets_by_id: Mapping[Hashable, frozenset[ClimateItem]], theta: float
) -> list[Subgroup]:
    """Frequent-itemset enumeration (apriori) over the binned samples.

    Returns every conjunction with support >= theta, including the empty
    itemset (the full dataset). Output is deterministic and closed under
    taking subsets.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    ids = sorted(itemsets_by_id, key=str)
    n = len(ids)
    if n == 0:
        raise ValueError("no samples to enumerate subgroups over")

    def members(candidate: frozenset[ClimateItem]) -> tuple:
        return tuple(i for i in ids if candidate <= itemsets_by_id[i])

    results = [Subgroup(frozenset(), 1.0, tuple(ids))]
    # Level 1: frequent single items.
    universe = sorted({item for s in itemsets_by_id.values() for item in s})
    current: list[frozenset[ClimateItem]] = []
    for item in universe:
        candidate = frozenset([item])
        m = members(candidate)
        if len(m) / n >= theta:
            current.append(candidate)
            results.append(Subgroup(candidate, len(m) / n, m))
    # Level k: join frequent (k-1)-itemsets, prune by the apriori property.
    while current:
        frequent_prev = set(current)
        candidates = set()
        for a, b in itertools.combinations(current, 2):
            joined = a | b
            if len(joined) != len(a) + 1:
                continue
            if len({i.variable for i in joined}) != len(joined):
                continue  # at most one bin per variable
            if all(frozenset(sub) in frequent_prev for sub in itertools.combinations(joined, len(joined) - 1)):
                candidates.add(joined)
        current = []
        for candidate in sorted(candidates, key=lambda s: sorted((i.variable, i.bin) for i in s)):
            m = members(candidate)
            if len(m) / n >= theta:
                current.append(candidate)
                results.append(Subgroup(candidate, len(m) / n, m))
    results.sort(key=Subgroup.sort_key)
    return results


def divergence(
    member_ids: Iterable[Hashable],
    stats_by_id: Mapping[Hashable, object],
    pool_metric: Callable[[list], float],
) -> float:
    """Metric over the subgroup members minus the metric over the full
    dataset, both pooled with ``pool_metric`` (micro conventions)."""
    members = [stats_by_id[i] for i in member_ids]
    if not members:
        raise ValueError("cannot evaluate a metric on an empty subgroup")
    full = list(stats_by_id.values())
    return pool_metric(members) - pool_metric(full)


def shapley_items(
    itemset: frozenset[ClimateItem],
    value: Callable[[frozenset[ClimateItem]], float],
) -> dict[ClimateItem, float]:
    """Exact Shapley values of the items of one itemset, with coalition value
    v(J) for J subseteq itemset and v(empty) = 0.

    Efficiency holds by construction: the values sum to v(itemset).
    """
    items = sorted(itemset)
    k = len(items)
    if k > 5:
        raise ValueError(f"exact enumeration limited to 5 items, got {k}")
    cache: dict[frozenset, float] = {frozenset(): 0.0}

    def v(subset: frozenset) -> float:
        if subset not in cache:
            cache[subset] = float(value(subset))
        return cache[subset]

    phi: dict[ClimateItem, float] = {}
    for item in items:
        others = [i for i in items if i != item]
        total = 0.0
        for r in range(len(others) + 1):
            weight = math.factorial(r) * math.factorial(k - r - 1) / math.factorial(k)
            for combo in itertools.combinations(others, r):
                j = frozenset(combo)
                total += weight * (v(j | {item}) - v(j))
        phi[item] = total
    return phi


def global_shapley(
    item: ClimateItem,
    frequent_itemsets: Sequence[frozenset[ClimateItem]],
    value: Callable[[frozenset[ClimateItem]], float],
) -> float | None:
    """Unweighted mean of the item's Shapley value across all frequent
    itemsets containing it; None when the item occurs in none.

    Positive values mean the item is associated with an above-average
    metric. The aggregation rule is isolated here so alternatives (e.g.
    support-weighted means) can be swapped in.
    """
    containing = [s for s in frequent_itemsets if item in s]
    if not containing:
        return None
    return float(np.mean([shapley_items(s, value)[item] for s in containing]))


def welch_significant(
    member_scores: Sequence[float], other_scores: Sequence[float], alpha: float = 0.05
) -> bool:
    """Welch's t-test between per-sample scores inside and outside a
    subgroup; True when the difference is significant at the given level."""
    a = np.asarray(member_scores, dtype=np.float64)
    b = np.asarray(other_scores, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        return False
    if np.ptp(a) == 0 and np.ptp(b) == 0:
        return bool(a.mean() != b.mean())
    res = _scipy_stats.ttest_ind(a, b, equal_var=False)
    return bool(res.pvalue < alpha)


# ---------------------------------------------------------------------------
# Perturbation-based channel saliency


def ablate_channel(images: np.ndarray, channel: int) -> np.ndarray:
    """Zero one channel across all timesteps of a (T, C, H, W) stack."""
    if not 0 <= channel < images.shape[1]:
        raise ValueError(f"channel {channel} out of range for {images.shape[1]} channels")
    out = images.copy()
    out[:, channel] = 0.0
    return out


def channel_saliency(
    predict_fn: Callable[..., np.ndarray],
    samples: Sequence[dict],
    metric_fn: Callable[[np.ndarray, dict], float],
    channel: int,
) -> float:
    """Mean over samples of (baseline metric − metric after zeroing the
    channel in every timestep). Inputs are assumed standardized, so zeros
    are the mean-value token.

    Each sample dict needs an ``images`` array; extra keys are passed
    through to ``predict_fn``.
    """
    deltas = []
    for sample in samples:
        baseline = metric_fn(predict_fn(sample, sample["images"]), sample)
        ablated = metric_fn(predict_fn(sample, ablate_channel(sample["images"], channel)), sample)
        deltas.append(baseline - ablated)
    return float(np.mean(deltas))


def dem_saliency(
    predict_fn: Callable[..., np.ndarray],
    samples: Sequence[dict],
    metric_fn: Callable[[np.ndarray, dict], float],
) -> float | None:
    """Ablate the DEM entirely; None when the samples carry no DEM."""
    if not samples or samples[0].get("dem") is None:
        return None
    deltas = []
    for sample in samples:
        baseline = metric_fn(predict_fn(sample, sample["images"]), sample)
        blanked = dict(sample)
        blanked["dem"] = np.zeros_like(sample["dem"])
        ablated = metric_fn(predict_fn(blanked, sample["images"]), sample)
        deltas.append(baseline - ablated)
    return float(np.mean(deltas))


def normalize_saliency_rows(
    matrix: np.ndarray, negate_rows: Sequence[int] = ()
) -> np.ndarray:
    """Row-normalize to [-1, 1] by each row's max absolute value (all-zero
    rows unchanged). Rows listed in ``negate_rows`` (error-style metrics
    where lower is better) are negated first so +1 always reads as "most
    important"."""
    out = np.asarray(matrix, dtype=np.float64).copy()
    for r in negate_rows:
        out[r] = -out[r]
    for r in range(out.shape[0]):
        peak = np.max(np.abs(out[r]))
        if peak > 0:
            out[r] = out[r] / peak
    return out


@dataclass
class SaliencyReport:
    """Metric × channel ablation deltas, raw and row-normalized."""

    metric_names: list[str]
    channel_names: list[str]
    raw: np.ndarray
    lower_is_better: list[bool]

    def normalized(self) -> np.ndarray:
        rows = [i for i, flag in enumerate(self.lower_is_better) if flag]
        return normalize_saliency_rows(self.raw, rows)

    def to_dict(self) -> dict:
        return {
            "metric_names": self.metric_names,
            "channel_names": self.channel_names,
            "raw": [[float(x) for x in row] for row in self.raw],
            "normalized": [[float(x) for x in row] for row in self.normalized()],
            "lower_is_better": self.lower_is_better,
        }

    def save_json(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load_json(cls, path: Path | str) -> "SaliencyReport":
        d = json.loads(Path(path).read_text())
        return cls(
            metric_names=list(d["metric_names"]),
            channel_names=list(d["channel_names"]),
            raw=np.asarray(d["raw"], dtype=np.float64),
            lower_is_better=list(d["lower_is_better"]),
        )

    def save_csv(self, path: Path | str) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric"] + self.channel_names)
            for name, row in zip(self.metric_names, self.raw):
                writer.writerow([name] + [repr(float(x)) for x in row])
