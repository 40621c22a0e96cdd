"""Core signal/dataset types and the on-disk dataset directory format.

A dataset directory holds:
  manifest.json    text metadata (n_samples, length, sample_rate_hz,
                   labels[], split[], speed_profile_ids[], format_version)
  vibration.f32le  raw little-endian float32, row-major [N, L]
  voltage.f32le    raw little-endian float32, row-major [N, L]

Byte order and width of the payload files are normative; round-tripping a
dataset through write_dataset/read_dataset is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1

MANIFEST_NAME = "manifest.json"
VIBRATION_NAME = "vibration.f32le"
VOLTAGE_NAME = "voltage.f32le"


class DatasetError(Exception):
    """Base class for dataset I/O and validation failures."""


class MissingManifestError(DatasetError):
    pass


class PayloadMismatchError(DatasetError):
    pass


class NonFiniteDataError(DatasetError):
    pass


@dataclass(frozen=True)
class Signal:
    """Fixed-length 1D amplitude series. Immutable after construction."""

    values: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("signal values must be a nonempty 1D array")
        if not np.all(np.isfinite(v)):
            raise NonFiniteDataError("signal contains non-finite values")
        if not (self.sample_rate_hz > 0):
            raise ValueError("sample_rate_hz must be positive")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class PairedSample:
    """Time-aligned (vibration, voltage) pair with condition metadata."""

    vibration: Signal
    voltage: Signal
    condition_label: str
    speed_profile_id: str = ""

    def __post_init__(self):
        if len(self.vibration) != len(self.voltage):
            raise ValueError("vibration and voltage lengths differ")
        if self.vibration.sample_rate_hz != self.voltage.sample_rate_hz:
            raise ValueError("vibration and voltage sample rates differ")


@dataclass(frozen=True)
class DatasetManifest:
    n_samples: int
    length: int
    sample_rate_hz: float
    labels: tuple[str, ...]        # per-sample condition labels
    split: tuple[str, ...]         # per-sample "train" / "test"
    speed_profile_ids: tuple[str, ...]
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if len(self.labels) != self.n_samples or len(self.split) != self.n_samples:
            raise DatasetError("manifest labels/split length must equal n_samples")
        if len(self.speed_profile_ids) != self.n_samples:
            raise DatasetError("manifest speed_profile_ids length must equal n_samples")
        bad = set(self.split) - {"train", "test"}
        if bad:
            raise DatasetError(f"unknown split values: {sorted(bad)}")

    @property
    def label_set(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.labels)))


@dataclass(frozen=True)
class Dataset:
    samples: tuple[PairedSample, ...]
    manifest: DatasetManifest

    def __post_init__(self):
        m = self.manifest
        if len(self.samples) != m.n_samples:
            raise DatasetError(
                f"manifest declares {m.n_samples} samples, got {len(self.samples)}"
            )
        for s in self.samples:
            if len(s.vibration) != m.length:
                raise DatasetError("sample length does not match manifest length")
            if s.condition_label not in m.label_set:
                raise DatasetError(f"label {s.condition_label!r} not in manifest label set")

    def train_samples(self) -> list[PairedSample]:
        return [s for s, sp in zip(self.samples, self.manifest.split) if sp == "train"]

    def test_samples(self) -> list[PairedSample]:
        return [s for s, sp in zip(self.samples, self.manifest.split) if sp == "test"]


def normalize(signal: Signal) -> Signal:
    """Scale a signal by its max absolute value so max(|out|) == 1.

    All-zero input is returned unchanged (documented degenerate case).
    """
    peak = float(np.max(np.abs(signal.values)))
    if peak == 0.0:
        return signal
    return Signal(signal.values / np.float32(peak), signal.sample_rate_hz)


def slice_nonoverlapping(long_series, length: int, sample_rate_hz: float) -> list[Signal]:
    """Cut a long series into floor(len/L) disjoint L-point signals.

    Remainder points are discarded. A series shorter than L is an error.
    """
    arr = np.asarray(long_series, dtype=np.float32)
    if arr.ndim != 1:
        raise ValueError("expected a 1D series")
    if length <= 0:
        raise ValueError("length must be positive")
    if arr.size < length:
        raise ValueError(
            f"series of {arr.size} points is shorter than slice length {length}"
        )
    n = arr.size // length
    return [
        Signal(arr[i * length:(i + 1) * length], sample_rate_hz) for i in range(n)
    ]


def write_dataset(dataset: Dataset, path) -> None:
    """Write a dataset directory (manifest + f32le payloads)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    m = dataset.manifest
    manifest_doc = {
        "format_version": m.format_version,
        "n_samples": m.n_samples,
        "length": m.length,
        "sample_rate_hz": m.sample_rate_hz,
        "labels": list(m.labels),
        "split": list(m.split),
        "speed_profile_ids": list(m.speed_profile_ids),
    }
    (path / MANIFEST_NAME).write_text(json.dumps(manifest_doc, indent=2) + "\n")
    vib = np.stack([s.vibration.values for s in dataset.samples]).astype("<f4")
    volt = np.stack([s.voltage.values for s in dataset.samples]).astype("<f4")
    (path / VIBRATION_NAME).write_bytes(vib.tobytes())
    (path / VOLTAGE_NAME).write_bytes(volt.tobytes())


_MANIFEST_KEYS = {
    "format_version", "n_samples", "length", "sample_rate_hz",
    "labels", "split", "speed_profile_ids",
}


def read_dataset(path) -> Dataset:
    """Read a dataset directory, validating manifest/payload consistency."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise MissingManifestError(f"no {MANIFEST_NAME} in {path}")
    doc = json.loads(manifest_path.read_text())
    unknown = set(doc) - _MANIFEST_KEYS
    if unknown:
        raise DatasetError(f"unknown manifest keys: {sorted(unknown)}")
    manifest = DatasetManifest(
        n_samples=int(doc["n_samples"]),
        length=int(doc["length"]),
        sample_rate_hz=float(doc["sample_rate_hz"]),
        labels=tuple(doc["labels"]),
        split=tuple(doc["split"]),
        speed_profile_ids=tuple(doc.get("speed_profile_ids", [""] * int(doc["n_samples"]))),
        format_version=int(doc["format_version"]),
    )
    n, length = manifest.n_samples, manifest.length
    arrays = {}
    for name in (VIBRATION_NAME, VOLTAGE_NAME):
        payload_path = path / name
        if not payload_path.is_file():
            raise PayloadMismatchError(f"missing payload file {name}")
        raw = payload_path.read_bytes()
        if len(raw) != n * length * 4:
            raise PayloadMismatchError(
                f"{name}: expected {n * length * 4} bytes for [{n}, {length}] "
                f"float32, got {len(raw)}"
            )
        arr = np.frombuffer(raw, dtype="<f4").reshape(n, length)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteDataError(f"{name} contains non-finite values")
        arrays[name] = arr
    samples = tuple(
        PairedSample(
            vibration=Signal(arrays[VIBRATION_NAME][i], manifest.sample_rate_hz),
            voltage=Signal(arrays[VOLTAGE_NAME][i], manifest.sample_rate_hz),
            condition_label=manifest.labels[i],
            speed_profile_id=manifest.speed_profile_ids[i],
        )
        for i in range(n)
    )
    return Dataset(samples=samples, manifest=manifest)
