"""Desk-scale synthetic scene generator.

Produces fully labeled samples whose water dynamics are driven by a latent
water level (or channel offset) that integrates a monthly climate balance

    b(m) = pr_anomaly(m) − beta * tmmx_anomaly(m)

so the stored climate windows carry genuine predictive signal: the same
anomalies that are written into the climate table move the shoreline. The
anomalies follow a slowly mixing AR(1) process, which makes the future trend
partially predictable from the past windows and from the past frames.

Sign convention of the change target (median(past) − median(future)):
a *shrinking* lake loses water, so pixels at the receding shoreline go from
high to low water index and get positive target values (POS direction);
a *growing* lake wets new pixels, which get negative values (NEG direction).

With ``noise=0`` all stochastic corruption (band noise and sensor-artifact
blobs, whose amplitude scales with the noise level) is off, and a ``static``
scene yields an identically zero target.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ..raster import GridStack, make_target_pack
from .series import (
    BAND_NAMES,
    ClimateWindowSet,
    DEFAULT_CLIMATE_VARS,
    DemGrid,
    SampleRecord,
    SceneSeries,
    Sensor,
    split_assign,
)

DYNAMICS = ("shrinking_lake", "growing_lake", "meandering_river", "static")

# Monthly climate anomalies: mildly persistent AR(1). The cumulative future
# balance is then dominated by the per-sample regime bias, which is readable
# from the stored windows, so the latent trend stays learnable.
_AR_PHI = 0.75
_AR_SIGMA = 0.3
_BETA = 0.7
_WATER_INDEX_LAND = -0.35
_WATER_INDEX_SPAN = 0.9


@dataclass
class SyntheticConfig:
    height: int = 64
    width: int = 64
    series_length: int = 5
    window_months: int = 12
    future_length: int = 5
    dynamics: str = "shrinking_lake"
    noise: float = 0.02
    cloud_fraction: float = 0.05
    threshold: float = 0.1
    artifact_prob: float = 0.3
    trend_gain: float = 1.3
    start_year: int = 1995
    variable_names: tuple[str, ...] = field(default=DEFAULT_CLIMATE_VARS)

    def __post_init__(self) -> None:
        if self.dynamics not in DYNAMICS:
            raise ValueError(f"unknown dynamics {self.dynamics!r}: expected one of {DYNAMICS}")
        if min(self.height, self.width) < 8:
            raise ValueError("grid must be at least 8x8")
        if self.series_length < 2 or self.future_length < 1:
            raise ValueError("series_length must be >= 2 and future_length >= 1")
        if self.window_months < 1:
            raise ValueError("window_months must be >= 1")
        if not 0.0 <= self.cloud_fraction < 1.0:
            raise ValueError("cloud_fraction must lie in [0, 1)")
        if self.noise < 0 or self.threshold <= 0:
            raise ValueError("noise must be >= 0 and threshold > 0")


def _month_range(start: tuple[int, int], end: tuple[int, int]) -> list[tuple[int, int]]:
    a = start[0] * 12 + start[1] - 1
    b = end[0] * 12 + end[1] - 1
    return [(k // 12, k % 12 + 1) for k in range(a, b + 1)]


def _ar1(rng: np.random.Generator, n: int, phi: float, sigma: float) -> np.ndarray:
    out = np.empty(n)
    out[0] = rng.normal(0.0, sigma / np.sqrt(1.0 - phi ** 2))
    eps = rng.normal(0.0, sigma, size=n)
    for i in range(1, n):
        out[i] = phi * out[i - 1] + eps[i]
    return out


def _terrain(cfg: SyntheticConfig, rng: np.random.Generator):
    """Per-sample terrain in 'level units' (pixels), plus geometry context."""
    h, w = cfg.height, cfg.width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    bumps = ndimage.gaussian_filter(rng.normal(0.0, 1.0, size=(h, w)), sigma=4.0) * 2.0
    if cfg.dynamics == "meandering_river":
        amp = rng.uniform(4.0, 10.0)
        wavelen = rng.uniform(h / 1.5, 3.0 * h)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        center_x = w / 2.0 + amp * np.sin(2.0 * np.pi * yy[:, 0] / wavelen + phase)
        dist = np.abs(xx - center_x[:, None])
        return dist + bumps * 0.3, {"half_width": rng.uniform(3.0, 6.0)}
    cx = rng.uniform(0.35, 0.65) * w
    cy = rng.uniform(0.35, 0.65) * h
    aniso = rng.uniform(0.8, 1.25)
    theta = rng.uniform(0.0, np.pi)
    dx, dy = xx - cx, yy - cy
    u = np.cos(theta) * dx + np.sin(theta) * dy
    v = -np.sin(theta) * dx + np.cos(theta) * dy
    dist = np.sqrt((u * aniso) ** 2 + (v / aniso) ** 2)
    return dist + bumps, {"base_level": rng.uniform(0.28, 0.40) * min(h, w)}


_SEASONAL = {
    # name: (mean, seasonal amplitude, peak month, anomaly scale, clip at zero)
    "tmmx": (24.0, 8.0, 7, 2.0, False),
    "aet": (55.0, 25.0, 7, 12.0, True),
    "ro": (25.0, 15.0, 3, 10.0, True),
    "pr": (60.0, 30.0, 11, 25.0, True),
    "soil": (70.0, 30.0, 4, 20.0, True),
}


def _climate_series(cfg: SyntheticConfig, rng: np.random.Generator, months):
    """Monthly values for the five default variables plus the latent balance."""
    n = len(months)
    anomalies = {name: _ar1(rng, n, _AR_PHI, _AR_SIGMA) for name in cfg.variable_names}
    if cfg.dynamics == "shrinking_lake":
        pr_bias, tmmx_bias = -0.6, 0.5
    elif cfg.dynamics == "growing_lake":
        pr_bias, tmmx_bias = 0.6, -0.5
    else:
        pr_bias, tmmx_bias = 0.0, 0.0
    values = np.empty((n, len(cfg.variable_names)))
    for j, name in enumerate(cfg.variable_names):
        mean, amp, peak, scale, clip = _SEASONAL[name]
        anom = anomalies[name].copy()
        if name == "pr":
            anom += pr_bias
        elif name == "tmmx":
            anom += tmmx_bias
        month_nums = np.array([m for _, m in months], dtype=np.float64)
        seasonal = amp * np.cos(2.0 * np.pi * (month_nums - peak) / 12.0)
        col = mean + seasonal + scale * anom
        values[:, j] = np.maximum(col, 0.0) if clip else col
        anomalies[name] = anom
    balance = anomalies["pr"] - _BETA * anomalies["tmmx"]
    return values, balance


def _render_frames(cfg, rng, terrain, geom, levels):
    """Reflectance frames + validity masks for a sequence of level values."""
    h, w = cfg.height, cfg.width
    soft = 1.0
    n = len(levels)
    images = np.empty((n, len(BAND_NAMES), h, w), dtype=np.float64)
    valid = np.empty((n, h, w), dtype=bool)
    for i, level in enumerate(levels):
        if cfg.dynamics == "meandering_river":
            frac = 1.0 / (1.0 + np.exp(-(geom["half_width"] - np.abs(terrain - level)) / soft))
        else:
            frac = 1.0 / (1.0 + np.exp(-(level - terrain) / soft))
        m = _WATER_INDEX_LAND + _WATER_INDEX_SPAN * frac
        land = 1.0 - frac
        bands = {
            "blue": 0.06 + 0.04 * land,
            "green": 0.25 * (1.0 + m),
            "red": 0.06 + 0.10 * land,
            "nir": 0.05 + 0.28 * land,
            "swir1": 0.25 * (1.0 - m),
        }
        bands["swir2"] = 0.8 * bands["swir1"]
        frame = np.stack([bands[b] for b in BAND_NAMES])
        if cfg.noise > 0:
            frame = frame + rng.normal(0.0, cfg.noise, size=frame.shape)
        # Occasional sensor-artifact blob; amplitude tied to the noise level so
        # noise=0 disables corruption entirely.
        if rng.random() < cfg.artifact_prob:
            bx, by = rng.uniform(0, w), rng.uniform(0, h)
            radius = rng.uniform(h / 8.0, h / 3.0)
            yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
            blob = np.exp(-((xx - bx) ** 2 + (yy - by) ** 2) / (2.0 * radius ** 2))
            for bi in (1, 3, 4):  # green, nir, swir1
                frame[bi] += rng.normal(0.0, 6.0 * cfg.noise, size=(h, w)) * blob
        images[i] = np.maximum(frame, 1e-4)
        if cfg.cloud_fraction > 0:
            valid[i] = rng.random((h, w)) >= cfg.cloud_fraction
        else:
            valid[i] = True
    return images.astype(np.float32), valid


def generate_synthetic_scene(
    config: SyntheticConfig,
    seed: int,
    sensor: Sensor = Sensor.LANDSAT5,
    region: str = "usa",
    sample_id: str | None = None,
) -> SampleRecord:
    """Deterministically generate one fully labeled sample for the given seed."""
    rng = np.random.default_rng(seed)
    cfg = config
    terrain, geom = _terrain(cfg, rng)

    n_total = cfg.series_length + cfg.future_length
    first_image = datetime.date(cfg.start_year, 7, 1)
    image_dates = [datetime.date(cfg.start_year + i, 7, 1) for i in range(n_total)]
    months = _month_range(
        (first_image.year - (cfg.window_months + 11) // 12 - 1, 1),
        (image_dates[-1].year, 12),
    )
    climate_values, balance = _climate_series(cfg, rng, months)

    if cfg.dynamics == "static":
        gain = 0.0
    elif cfg.dynamics == "meandering_river":
        gain = rng.uniform(0.8, 1.25) * cfg.trend_gain * 0.75
    else:
        gain = rng.uniform(0.8, 1.25) * cfg.trend_gain
    cumulative = np.cumsum(balance) / 12.0
    month_keys = {ym: i for i, ym in enumerate(months)}
    if cfg.dynamics == "meandering_river":
        base = 0.0  # lateral offset from the base centerline
    else:
        base = geom["base_level"]
    levels = []
    for d in image_dates:
        k = month_keys[(d.year, d.month)]
        levels.append(base + gain * cumulative[k])

    images, valid = _render_frames(cfg, rng, terrain, geom, levels)
    t = cfg.series_length
    if sample_id is None:
        sample_id = f"synth-{seed:08d}"
    scene = SceneSeries(
        images=images[:t],
        valid=valid[:t],
        dates=image_dates[:t],
        sensor=sensor,
        region=region,
        basin_id=sample_id,
    )
    future = SceneSeries(
        images=images[t:],
        valid=valid[t:],
        dates=image_dates[t:],
        sensor=sensor,
        region=region,
        basin_id=sample_id,
    )

    past_index = scene.mndwi_stack()
    future_index = future.mndwi_stack()
    targets = make_target_pack(past_index, future_index, cfg.threshold)

    window_values = np.empty(
        (t, cfg.window_months, len(cfg.variable_names)), dtype=np.float32
    )
    for i, d in enumerate(image_dates[:t]):
        end = month_keys[(d.year, d.month)]
        window_values[i] = climate_values[end - cfg.window_months + 1 : end + 1]
    climate = ClimateWindowSet(window_values, tuple(cfg.variable_names))

    dem = DemGrid((180.0 + 2.5 * terrain[None]).astype(np.float32))
    return SampleRecord(
        sample_id=sample_id,
        scene=scene,
        future=future,
        targets=targets,
        split=split_assign(sensor, region),
        climate=climate,
        dem=dem,
    )


def index_stack_from_scene(scene: SceneSeries) -> GridStack:
    """Convenience alias used by baselines and evaluation."""
    return scene.mndwi_stack()
