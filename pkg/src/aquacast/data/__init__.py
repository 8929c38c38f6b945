from .series import (
    BAND_NAMES,
    DEFAULT_CLIMATE_VARS,
    FULL_CLIMATE_VARS,
    ClimateTable,
    ClimateWindowSet,
    DemGrid,
    NormalizationStats,
    SampleRecord,
    SceneSeries,
    Sensor,
    Split,
    compute_normalization_stats,
    filter_completeness,
    harmonize_bands,
    impute_series,
    select_climate_vars,
    split_assign,
    standardize_record,
    window_climate,
)
from .storage import (
    Manifest,
    ManifestEntry,
    dataset_digest,
    load_manifest_samples,
    load_sample,
    save_sample,
)
from .synthetic import DYNAMICS, SyntheticConfig, generate_synthetic_scene

__all__ = [
    "BAND_NAMES",
    "DEFAULT_CLIMATE_VARS",
    "FULL_CLIMATE_VARS",
    "DYNAMICS",
    "ClimateTable",
    "ClimateWindowSet",
    "DemGrid",
    "Manifest",
    "ManifestEntry",
    "NormalizationStats",
    "SampleRecord",
    "SceneSeries",
    "Sensor",
    "Split",
    "SyntheticConfig",
    "compute_normalization_stats",
    "dataset_digest",
    "filter_completeness",
    "generate_synthetic_scene",
    "harmonize_bands",
    "impute_series",
    "load_manifest_samples",
    "load_sample",
    "save_sample",
    "select_climate_vars",
    "split_assign",
    "standardize_record",
    "window_climate",
]
