"""On-disk sample format and dataset manifest.

A sample is a directory with one ``.npz`` container per modality plus a
``metadata.json`` sidecar holding dates, identity fields, the threshold, and
a sha256 checksum per container. Round-trips are bit-exact; any missing or
corrupt required field is a hard error naming the field.
"""

from __future__ import annotations

import datetime
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..raster import Grid2D, TargetPack
from .series import (
    ClimateWindowSet,
    DemGrid,
    SampleRecord,
    SceneSeries,
    Sensor,
    Split,
)

FORMAT_VERSION = 1

_METADATA = "metadata.json"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_npz(path: Path, **arrays: np.ndarray) -> str:
    np.savez(path, **arrays)
    return _sha256(path)


def _dates(series: SceneSeries) -> list[str]:
    return [d.isoformat() for d in series.dates]


def save_sample(record: SampleRecord, directory: Path | str) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    checksums: dict[str, str] = {}
    checksums["scene.npz"] = _write_npz(
        directory / "scene.npz", images=record.scene.images, valid=record.scene.valid
    )
    checksums["future.npz"] = _write_npz(
        directory / "future.npz", images=record.future.images, valid=record.future.valid
    )
    checksums["targets.npz"] = _write_npz(
        directory / "targets.npz",
        target_values=record.targets.target.values,
        target_valid=record.targets.target.valid,
        change_mask=record.targets.change_mask,
        direction_mask=record.targets.direction_mask,
        magnitude=record.targets.magnitude,
    )
    meta = {
        "format_version": FORMAT_VERSION,
        "sample_id": record.sample_id,
        "split": record.split.value,
        "threshold": record.targets.threshold,
        "scene": {
            "sensor": record.scene.sensor.value,
            "region": record.scene.region,
            "basin_id": record.scene.basin_id,
            "dates": _dates(record.scene),
        },
        "future": {
            "sensor": record.future.sensor.value,
            "region": record.future.region,
            "basin_id": record.future.basin_id,
            "dates": _dates(record.future),
        },
        "climate": None,
        "dem": None,
    }
    if record.climate is not None:
        checksums["climate.npz"] = _write_npz(
            directory / "climate.npz", windows=record.climate.windows
        )
        meta["climate"] = {"variable_names": list(record.climate.variable_names)}
    if record.dem is not None:
        checksums["dem.npz"] = _write_npz(directory / "dem.npz", elevation=record.dem.elevation)
        meta["dem"] = {}
    meta["checksums"] = checksums
    (directory / _METADATA).write_text(json.dumps(meta, indent=2, sort_keys=True))
    return directory


def _load_npz(directory: Path, name: str, checksums: dict[str, str]) -> dict[str, np.ndarray]:
    path = directory / name
    if not path.exists():
        raise ValueError(f"missing sample field: {name}")
    digest = _sha256(path)
    if digest != checksums.get(name):
        raise ValueError(f"checksum mismatch for sample field: {name}")
    with np.load(path) as data:
        return {k: data[k] for k in data.files}


def _parse_dates(strings: list[str]) -> list[datetime.date]:
    return [datetime.date.fromisoformat(s) for s in strings]


def load_sample(directory: Path | str) -> SampleRecord:
    directory = Path(directory)
    meta_path = directory / _METADATA
    if not meta_path.exists():
        raise ValueError(f"missing sample field: {_METADATA}")
    meta = json.loads(meta_path.read_text())
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported sample format version {meta.get('format_version')}")
    checksums = meta.get("checksums", {})

    def _series(name: str) -> SceneSeries:
        arrays = _load_npz(directory, f"{name}.npz", checksums)
        info = meta[name]
        return SceneSeries(
            images=arrays["images"],
            valid=arrays["valid"],
            dates=_parse_dates(info["dates"]),
            sensor=Sensor(info["sensor"]),
            region=info["region"],
            basin_id=info["basin_id"],
        )

    scene = _series("scene")
    future = _series("future")
    tgt = _load_npz(directory, "targets.npz", checksums)
    targets = TargetPack(
        target=Grid2D(tgt["target_values"], tgt["target_valid"]),
        change_mask=tgt["change_mask"],
        direction_mask=tgt["direction_mask"],
        magnitude=tgt["magnitude"],
        threshold=float(meta["threshold"]),
    )
    climate = None
    if meta.get("climate") is not None:
        arrays = _load_npz(directory, "climate.npz", checksums)
        climate = ClimateWindowSet(
            arrays["windows"], tuple(meta["climate"]["variable_names"])
        )
    dem = None
    if meta.get("dem") is not None:
        arrays = _load_npz(directory, "dem.npz", checksums)
        dem = DemGrid(arrays["elevation"])
    return SampleRecord(
        sample_id=meta["sample_id"],
        scene=scene,
        future=future,
        targets=targets,
        split=Split(meta["split"]),
        climate=climate,
        dem=dem,
    )


@dataclass
class ManifestEntry:
    path: str  # relative to the manifest directory
    split: Split
    sample_id: str


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    seed: int | None = None
    config: dict = field(default_factory=dict)

    def for_split(self, split: Split) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split is split]

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "seed": self.seed,
            "config": self.config,
            "samples": [
                {"path": e.path, "split": e.split.value, "sample_id": e.sample_id}
                for e in self.entries
            ],
        }

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: Path | str) -> "Manifest":
        d = json.loads(Path(path).read_text())
        entries = [
            ManifestEntry(s["path"], Split(s["split"]), s["sample_id"])
            for s in d["samples"]
        ]
        return cls(entries=entries, seed=d.get("seed"), config=d.get("config", {}))


def load_manifest_samples(
    manifest_path: Path | str, split: Split | None = None
) -> list[SampleRecord]:
    manifest_path = Path(manifest_path)
    manifest = Manifest.load(manifest_path)
    entries = manifest.entries if split is None else manifest.for_split(split)
    return [load_sample(manifest_path.parent / e.path) for e in entries]


def dataset_digest(manifest_path: Path | str) -> str:
    """sha256 over the manifest and every file of every sample, in a fixed
    order; equal digests mean bit-identical datasets."""
    manifest_path = Path(manifest_path)
    manifest = Manifest.load(manifest_path)
    h = hashlib.sha256()
    h.update(manifest_path.read_bytes())
    for entry in sorted(manifest.entries, key=lambda e: e.path):
        sample_dir = manifest_path.parent / entry.path
        for f in sorted(sample_dir.iterdir()):
            h.update(f.name.encode())
            h.update(f.read_bytes())
    return h.hexdigest()
