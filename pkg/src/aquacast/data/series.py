"""Sample assembly: band harmonization, completeness filtering,
zero-imputation, climate windowing, standardization, and split assignment.
"""

from __future__ import annotations

import datetime
import warnings
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..raster import Grid2D, GridStack, TargetPack, compute_mndwi

BAND_NAMES = ("blue", "green", "red", "nir", "swir1", "swir2")

DEFAULT_CLIMATE_VARS = ("tmmx", "aet", "ro", "pr", "soil")

FULL_CLIMATE_VARS = (
    "aet", "def", "pet", "pr", "ro", "soil", "srad",
    "swe", "tmmx", "tmin", "vap", "vpd", "pdsi", "ws",
)

KNOWN_REGIONS = ("usa", "europe", "brazil")


class Sensor(Enum):
    LANDSAT5 = "landsat5"
    SENTINEL2 = "sentinel2"


class Split(Enum):
    PRETRAIN = "pretrain"
    FINETUNE = "finetune"
    TEST = "test"


# Source band providing each harmonized slot, in BAND_NAMES order.
SENSOR_BAND_SOURCES: dict[Sensor, tuple[str, ...]] = {
    Sensor.LANDSAT5: ("B1", "B2", "B3", "B4", "B5", "B7"),
    Sensor.SENTINEL2: ("B2", "B3", "B4", "B8", "B11", "B12"),
}


@dataclass
class SceneSeries:
    """T×C×H×W reflectance series with per-pixel validity and dates."""

    images: np.ndarray  # (T, C, H, W) float32
    valid: np.ndarray  # (T, H, W) bool
    dates: list[datetime.date]
    sensor: Sensor
    region: str
    basin_id: str

    def __post_init__(self) -> None:
        self.images = np.asarray(self.images, dtype=np.float32)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.images.ndim != 4:
            raise ValueError(f"images must be (T, C, H, W), got {self.images.shape}")
        t, c, h, w = self.images.shape
        if c != len(BAND_NAMES):
            raise ValueError(f"expected {len(BAND_NAMES)} bands, got {c}")
        if self.valid.shape != (t, h, w):
            raise ValueError(
                f"valid mask shape {self.valid.shape} != expected {(t, h, w)}"
            )
        if len(self.dates) != t:
            raise ValueError("one date per frame is required")

    @property
    def series_length(self) -> int:
        return self.images.shape[0]

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return self.images.shape[2], self.images.shape[3]

    def frame_observed(self) -> np.ndarray:
        """True per frame iff the frame has at least one valid pixel
        (all-invalid frames are imputation placeholders)."""
        return self.valid.any(axis=(1, 2))

    def band(self, name: str, frame: int) -> Grid2D:
        idx = BAND_NAMES.index(name)
        return Grid2D(self.images[frame, idx].astype(np.float64), self.valid[frame])

    def mndwi_stack(self) -> GridStack:
        """Per-frame water index computed from the green and swir1 bands."""
        frames = [
            compute_mndwi(self.band("green", i), self.band("swir1", i))
            for i in range(self.series_length)
        ]
        return GridStack(frames=frames, dates=list(self.dates))


@dataclass
class ClimateWindowSet:
    """Per-image monthly climate windows, shape (T, T1, C1)."""

    windows: np.ndarray
    variable_names: tuple[str, ...]

    def __post_init__(self) -> None:
        self.windows = np.asarray(self.windows, dtype=np.float32)
        if self.windows.ndim != 3:
            raise ValueError(f"windows must be (T, T1, C1), got {self.windows.shape}")
        if self.windows.shape[2] != len(self.variable_names):
            raise ValueError("one variable name per climate channel is required")


@dataclass
class DemGrid:
    """Static elevation raster, shape (1, H, W), meters."""

    elevation: np.ndarray

    def __post_init__(self) -> None:
        self.elevation = np.asarray(self.elevation, dtype=np.float32)
        if self.elevation.ndim != 3 or self.elevation.shape[0] != 1:
            raise ValueError(f"elevation must be (1, H, W), got {self.elevation.shape}")


@dataclass
class SampleRecord:
    """One training/evaluation sample: past scene (model input), future scene
    (label side only), optional climate and DEM, and derived targets."""

    sample_id: str
    scene: SceneSeries
    future: SceneSeries
    targets: TargetPack
    split: Split
    climate: ClimateWindowSet | None = None
    dem: DemGrid | None = None


def harmonize_bands(sensor: Sensor, raw: Mapping[str, np.ndarray]) -> np.ndarray:
    """Stack sensor-specific source bands into the fixed 6-band order
    blue, green, red, nir, swir1, swir2."""
    sources = SENSOR_BAND_SOURCES[sensor]
    missing = [b for b in sources if b not in raw]
    if missing:
        raise ValueError(f"missing band {missing[0]} for sensor {sensor.value}")
    stacked = np.stack([np.asarray(raw[b], dtype=np.float32) for b in sources])
    if stacked.ndim != 3:
        raise ValueError("each band must be a 2-D grid")
    return stacked


def filter_completeness(series: SceneSeries, nominal_slots: int, min_frac: float = 0.8) -> bool:
    """Keep a series iff observed frames / nominal slots >= min_frac."""
    if nominal_slots <= 0:
        raise ValueError("nominal_slots must be positive")
    present = int(series.frame_observed().sum())
    return present / nominal_slots >= min_frac


def impute_series(series: SceneSeries, nominal_dates: Sequence[datetime.date]) -> SceneSeries:
    """Regularize a series onto the nominal yearly grid, filling missing slots
    with all-zero frames marked entirely invalid.

    Frames are matched to slots by calendar year. Target construction must
    use only observed frames; all-invalid placeholders are skipped by the
    validity-aware median automatically.
    """
    observed = series.frame_observed()
    if not observed.any():
        raise ValueError("empty series: no observed frames to impute around")
    by_year: dict[int, int] = {}
    for i, d in enumerate(series.dates):
        if not observed[i]:
            continue
        if d.year in by_year:
            raise ValueError(f"two observed frames in slot year {d.year}")
        by_year[d.year] = i
    slot_years = [d.year for d in nominal_dates]
    stray = sorted(set(by_year) - set(slot_years))
    if stray:
        raise ValueError(f"frame year {stray[0]} has no nominal slot")
    t, c = len(nominal_dates), series.images.shape[1]
    h, w = series.spatial_shape
    images = np.zeros((t, c, h, w), dtype=np.float32)
    valid = np.zeros((t, h, w), dtype=bool)
    dates: list[datetime.date] = []
    for slot, slot_date in enumerate(nominal_dates):
        src = by_year.get(slot_date.year)
        if src is None:
            dates.append(slot_date)
        else:
            images[slot] = series.images[src]
            valid[slot] = series.valid[src]
            dates.append(series.dates[src])
    return replace(series, images=images, valid=valid, dates=dates)


@dataclass
class ClimateTable:
    """Monthly climate series: values[m, v] for month m and variable v."""

    variables: tuple[str, ...]
    months: list[tuple[int, int]]  # (year, month), strictly increasing
    values: np.ndarray  # (n_months, n_vars) float64

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.months), len(self.variables)):
            raise ValueError(
                f"values shape {self.values.shape} != "
                f"({len(self.months)}, {len(self.variables)})"
            )
        keys = [y * 12 + (m - 1) for y, m in self.months]
        if any(b <= a for a, b in zip(keys, keys[1:])):
            raise ValueError("months must be strictly increasing")


def select_climate_vars(
    table: ClimateTable, names: Sequence[str] = DEFAULT_CLIMATE_VARS
) -> ClimateTable:
    """Restrict a climate table to the named variables, in the given order."""
    missing = [n for n in names if n not in table.variables]
    if missing:
        raise ValueError(f"climate variable {missing[0]!r} not present")
    idx = [table.variables.index(n) for n in names]
    return ClimateTable(tuple(names), list(table.months), table.values[:, idx])


def window_climate(
    table: ClimateTable, image_dates: Sequence[datetime.date], t1: int
) -> ClimateWindowSet:
    """Build one (T1, C1) window per image covering the T1 months up to and
    including the image month, oldest month first."""
    if t1 < 1:
        raise ValueError("t1 must be >= 1")
    index = {y * 12 + (m - 1): i for i, (y, m) in enumerate(table.months)}
    windows = np.empty((len(image_dates), t1, len(table.variables)), dtype=np.float32)
    missing: list[str] = []
    for i, d in enumerate(image_dates):
        end = d.year * 12 + (d.month - 1)
        for j, key in enumerate(range(end - t1 + 1, end + 1)):
            row = index.get(key)
            if row is None:
                missing.append(f"{key // 12:04d}-{key % 12 + 1:02d}")
            else:
                windows[i, j] = table.values[row]
    if missing:
        raise ValueError(
            "climate coverage gap: missing months " + ", ".join(sorted(set(missing)))
        )
    return ClimateWindowSet(windows, tuple(table.variables))


@dataclass
class NormalizationStats:
    """Per-channel standardization statistics, computed on the pretrain split."""

    image_mean: np.ndarray
    image_std: np.ndarray
    dem_mean: float
    dem_std: float
    climate_mean: np.ndarray
    climate_std: np.ndarray

    def to_dict(self) -> dict:
        return {
            "image_mean": self.image_mean.tolist(),
            "image_std": self.image_std.tolist(),
            "dem_mean": self.dem_mean,
            "dem_std": self.dem_std,
            "climate_mean": self.climate_mean.tolist(),
            "climate_std": self.climate_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(
            image_mean=np.asarray(d["image_mean"], dtype=np.float64),
            image_std=np.asarray(d["image_std"], dtype=np.float64),
            dem_mean=float(d["dem_mean"]),
            dem_std=float(d["dem_std"]),
            climate_mean=np.asarray(d["climate_mean"], dtype=np.float64),
            climate_std=np.asarray(d["climate_std"], dtype=np.float64),
        )


def compute_normalization_stats(records: Iterable[SampleRecord]) -> NormalizationStats:
    """Means and stds over all pixels of the input-side modalities.

    Accumulates in float64. Imputed zero frames are part of the model input
    and therefore included.
    """
    n_img = None
    s_img = s2_img = None
    n_dem = 0
    s_dem = s2_dem = 0.0
    n_clim = None
    s_clim = s2_clim = None
    count_img = 0
    count_clim = 0
    for rec in records:
        x = rec.scene.images.astype(np.float64)
        if s_img is None:
            n_img = x.shape[1]
            s_img = np.zeros(n_img)
            s2_img = np.zeros(n_img)
        s_img += x.sum(axis=(0, 2, 3))
        s2_img += (x ** 2).sum(axis=(0, 2, 3))
        count_img += x.shape[0] * x.shape[2] * x.shape[3]
        if rec.dem is not None:
            e = rec.dem.elevation.astype(np.float64)
            s_dem += float(e.sum())
            s2_dem += float((e ** 2).sum())
            n_dem += e.size
        if rec.climate is not None:
            w = rec.climate.windows.astype(np.float64)
            if s_clim is None:
                n_clim = w.shape[2]
                s_clim = np.zeros(n_clim)
                s2_clim = np.zeros(n_clim)
            s_clim += w.sum(axis=(0, 1))
            s2_clim += (w ** 2).sum(axis=(0, 1))
            count_clim += w.shape[0] * w.shape[1]
    if count_img == 0:
        raise ValueError("no records to compute statistics from")

    def _finish(s, s2, n):
        mean = s / n
        var = np.maximum(s2 / n - mean ** 2, 0.0)
        return mean, np.sqrt(var)

    image_mean, image_std = _finish(s_img, s2_img, count_img)
    if n_dem:
        dem_mean, dem_std = _finish(np.array([s_dem]), np.array([s2_dem]), n_dem)
        dem_mean, dem_std = float(dem_mean[0]), float(dem_std[0])
    else:
        dem_mean, dem_std = 0.0, 1.0
    if count_clim:
        climate_mean, climate_std = _finish(s_clim, s2_clim, count_clim)
    else:
        climate_mean = np.zeros(0)
        climate_std = np.ones(0)
    return NormalizationStats(image_mean, image_std, dem_mean, dem_std, climate_mean, climate_std)


def _safe_scale(name: str, std: np.ndarray) -> np.ndarray:
    scale = std.copy()
    zero = scale == 0
    if np.any(zero):
        warnings.warn(f"{name}: zero-std channel(s) pass through unstandardized")
        scale[zero] = 1.0
    return scale


def standardize_record(record: SampleRecord, stats: NormalizationStats) -> SampleRecord:
    """(x − mean)/std for the scene images, DEM and climate windows.

    Zero-std channels pass through unchanged with a warning. The future
    series and the targets are label-side and left untouched.
    """
    img_scale = _safe_scale("images", stats.image_std)
    images = (record.scene.images.astype(np.float64) - stats.image_mean[None, :, None, None]) / img_scale[None, :, None, None]
    scene = replace(record.scene, images=images.astype(np.float32))
    dem = record.dem
    if dem is not None:
        dem_std = stats.dem_std
        if dem_std == 0:
            warnings.warn("dem: zero std, passing through unstandardized")
            dem_std = 1.0
        dem = DemGrid(((dem.elevation.astype(np.float64) - stats.dem_mean) / dem_std).astype(np.float32))
    climate = record.climate
    if climate is not None:
        clim_scale = _safe_scale("climate", stats.climate_std)
        windows = (climate.windows.astype(np.float64) - stats.climate_mean[None, None, :]) / clim_scale[None, None, :]
        climate = ClimateWindowSet(windows.astype(np.float32), climate.variable_names)
    return replace(record, scene=scene, dem=dem, climate=climate)


def split_assign(sensor: Sensor, region: str) -> Split:
    """Temporal-generalization split rule: the older sensor pretrains, the
    newer sensor fine-tunes on Brazil and tests on Europe/USA."""
    region_l = region.lower()
    if region_l not in KNOWN_REGIONS:
        raise ValueError(f"unknown region {region!r}: expected one of {KNOWN_REGIONS}")
    if sensor is Sensor.LANDSAT5:
        return Split.PRETRAIN
    if region_l == "brazil":
        return Split.FINETUNE
    return Split.TEST
