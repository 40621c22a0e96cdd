"""Deterministic synthetic benchmark: paired pulse-voltage / vibration data
over steady and vary-state speed profiles with emulated bearing faults.

Voltage is a rectangular pulse train, one pulse per shaft revolution at 10%
duty; vibration is shaft harmonics plus, for faulty specs, decaying resonance
impulses at characteristic_order impacts per revolution, plus Gaussian noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .signals import (
    Dataset,
    DatasetManifest,
    PairedSample,
    Signal,
    normalize,
    slice_nonoverlapping,
)

SEGMENT_KINDS = ("standstill", "accelerate", "steady", "decelerate")
FAULT_KINDS = ("none", "inner_race", "outer_race")

PULSE_DUTY = 0.1

# Typical ball-pass orders for a small test bearing.
INNER_RACE_ORDER = 5.43
OUTER_RACE_ORDER = 3.58

DEFAULT_SAMPLE_RATE_HZ = 8192.0
DEFAULT_NOISE_STD = 0.05


@dataclass(frozen=True)
class Segment:
    kind: str
    duration_s: float
    start_hz: float
    end_hz: float

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if self.duration_s <= 0:
            raise ValueError("segment duration must be positive")
        if self.kind == "standstill" and (self.start_hz != 0 or self.end_hz != 0):
            raise ValueError("standstill segments must have zero frequency")
        if self.kind == "steady" and self.start_hz != self.end_hz:
            raise ValueError("steady segments must hold a constant frequency")
        if self.start_hz < 0 or self.end_hz < 0:
            raise ValueError("frequencies must be nonnegative")


@dataclass(frozen=True)
class SpeedProfile:
    segments: tuple[Segment, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("profile needs at least one segment")
        for a, b in zip(self.segments, self.segments[1:]):
            if a.end_hz != b.start_hz:
                raise ValueError(
                    f"discontinuous profile: {a.end_hz} Hz -> {b.start_hz} Hz"
                )

    @property
    def duration_s(self) -> float:
        return sum(s.duration_s for s in self.segments)

    @staticmethod
    def steady(hz: float, duration_s: float) -> "SpeedProfile":
        return SpeedProfile((Segment("steady", duration_s, hz, hz),))

    @staticmethod
    def vary_state(peak_hz: float, standstill_s: float = 0.75, ramp_s: float = 1.0,
                   steady_s: float = 2.0) -> "SpeedProfile":
        """standstill -> accelerate -> steady -> decelerate -> standstill."""
        return SpeedProfile((
            Segment("standstill", standstill_s, 0.0, 0.0),
            Segment("accelerate", ramp_s, 0.0, peak_hz),
            Segment("steady", steady_s, peak_hz, peak_hz),
            Segment("decelerate", ramp_s, peak_hz, 0.0),
            Segment("standstill", standstill_s, 0.0, 0.0),
        ))


@dataclass(frozen=True)
class FaultSpec:
    kind: str = "none"
    severity: float = 1.0
    characteristic_order: float = OUTER_RACE_ORDER

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if not (0 < self.severity <= 1):
            raise ValueError("severity must lie in (0, 1]")
        if self.characteristic_order <= 1:
            raise ValueError("characteristic_order must exceed 1")

    @property
    def label(self) -> str:
        if self.kind == "none":
            return "NC"
        prefix = "IF" if self.kind == "inner_race" else "OF"
        if self.severity <= 0.4:
            degree = 1
        elif self.severity <= 0.75:
            degree = 2
        else:
            degree = 3
        return f"{prefix}{degree}"


def instantaneous_frequency(profile: SpeedProfile, sample_rate_hz: float) -> np.ndarray:
    """Per-sample rotation frequency (Hz) over the whole profile."""
    parts = []
    for seg in profile.segments:
        n = int(round(seg.duration_s * sample_rate_hz))
        parts.append(np.linspace(seg.start_hz, seg.end_hz, n, endpoint=False))
    return np.concatenate(parts)


def _phase_revolutions(freq: np.ndarray, sample_rate_hz: float,
                       phase_offset: float = 0.0) -> np.ndarray:
    return np.cumsum(freq) / sample_rate_hz + phase_offset


def gen_voltage_record(profile: SpeedProfile, sample_rate_hz: float,
                       phase_offset: float = 0.0) -> np.ndarray:
    freq = instantaneous_frequency(profile, sample_rate_hz)
    phase = _phase_revolutions(freq, sample_rate_hz, phase_offset)
    pulses = ((phase % 1.0) < PULSE_DUTY) & (freq > 0)
    return pulses.astype(np.float32)


def gen_voltage(profile: SpeedProfile, sample_rate_hz: float, length: int) -> Signal:
    """Rectangular pulse train, one pulse per revolution; standstill emits zero."""
    record = gen_voltage_record(profile, sample_rate_hz)
    if record.size < length:
        raise ValueError(
            f"profile yields {record.size} samples, shorter than length {length}"
        )
    return normalize(Signal(record[:length], sample_rate_hz))


def _impulse_kernel(sample_rate_hz: float) -> np.ndarray:
    # Decaying resonance burst; resonance well above shaft harmonics.
    f_res = 0.12 * sample_rate_hz
    tau = 6.0 / f_res
    t = np.arange(int(round(4 * tau * sample_rate_hz))) / sample_rate_hz
    return np.exp(-t / tau) * np.sin(2 * np.pi * f_res * t)


def gen_vibration_record(profile: SpeedProfile, fault: FaultSpec,
                         sample_rate_hz: float, noise_std: float,
                         seed: int, phase_offset: float = 0.0) -> np.ndarray:
    freq = instantaneous_frequency(profile, sample_rate_hz)
    phase = _phase_revolutions(freq, sample_rate_hz, phase_offset)
    running = (freq > 0).astype(np.float64)
    base = running * (
        np.sin(2 * np.pi * phase) + 0.45 * np.sin(4 * np.pi * phase)
    )
    out = 0.8 * base
    if fault.kind != "none":
        kernel = _impulse_kernel(sample_rate_hz)
        fault_phase = fault.characteristic_order * phase
        crossings = np.flatnonzero(np.diff(np.floor(fault_phase)) > 0) + 1
        amp = 1.2 * fault.severity
        impulses = np.zeros(out.size + kernel.size)
        for idx in crossings:
            a = amp
            if fault.kind == "inner_race":
                # Load-zone modulation at shaft frequency.
                a *= 0.55 + 0.45 * np.sin(2 * np.pi * phase[idx])
            impulses[idx:idx + kernel.size] += a * kernel
        out = out + impulses[:out.size]
    rng = np.random.default_rng(seed)
    out = out + rng.normal(0.0, noise_std, out.size)
    return out.astype(np.float32)


def gen_vibration(profile: SpeedProfile, fault: FaultSpec, sample_rate_hz: float,
                  length: int, noise_std: float = DEFAULT_NOISE_STD,
                  seed: int = 0) -> Signal:
    record = gen_vibration_record(profile, fault, sample_rate_hz, noise_std, seed)
    if record.size < length:
        raise ValueError(
            f"profile yields {record.size} samples, shorter than length {length}"
        )
    return normalize(Signal(record[:length], sample_rate_hz))


@dataclass(frozen=True)
class BenchEntry:
    profile: SpeedProfile
    fault: FaultSpec
    count: int
    speed_jitter: float = 0.1   # per-record relative speed fluctuation

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("entry count must be positive")
        if not (0 <= self.speed_jitter < 1):
            raise ValueError("speed_jitter must lie in [0, 1)")


def _scaled_profile(profile: SpeedProfile, factor: float) -> SpeedProfile:
    if factor == 1.0:
        return profile
    return SpeedProfile(tuple(
        Segment(s.kind, s.duration_s, s.start_hz * factor, s.end_hz * factor)
        for s in profile.segments
    ))


def make_dataset(entries, sample_rate_hz: float, length: int, seed: int,
                 noise_std: float = DEFAULT_NOISE_STD,
                 train_fraction: float = 0.7) -> Dataset:
    """Generate paired samples for each entry and assign a seeded 70/30 split.

    Long records are sliced into non-overlapping length-L windows; records are
    regenerated (fresh noise seed) until each entry reaches its sample count.
    """
    root_ss = np.random.SeedSequence(seed)
    split_rng = np.random.default_rng(root_ss.spawn(1)[0])
    samples: list[PairedSample] = []
    split: list[str] = []
    for ei, entry in enumerate(entries):
        entry_ss = np.random.SeedSequence([seed, ei])
        per_record = int(entry.profile.duration_s * sample_rate_hz) // length
        if per_record < 1:
            raise ValueError(
                f"entry {ei}: profile too short to yield one {length}-point sample"
            )
        entry_rng = np.random.default_rng(entry_ss)
        collected = []
        record_idx = 0
        while len(collected) < entry.count:
            rec_seed = int(entry_ss.generate_state(1, np.uint32)[0]) + record_idx
            # Per-record shaft phase offset and speed fluctuation; voltage and
            # vibration share both so the pair stays aligned.
            offset = float(entry_rng.uniform(0.0, 1.0))
            factor = float(entry_rng.uniform(
                1.0 - entry.speed_jitter, 1.0 + entry.speed_jitter
            ))
            profile = _scaled_profile(entry.profile, factor)
            volt_record = gen_voltage_record(profile, sample_rate_hz, offset)
            vib_record = gen_vibration_record(
                profile, entry.fault, sample_rate_hz, noise_std, rec_seed, offset
            )
            volt_slices = slice_nonoverlapping(volt_record, length, sample_rate_hz)
            vib_slices = slice_nonoverlapping(vib_record, length, sample_rate_hz)
            for volt_s, vib_s in zip(volt_slices, vib_slices):
                if len(collected) >= entry.count:
                    break
                collected.append(PairedSample(
                    vibration=normalize(vib_s),
                    voltage=normalize(volt_s),
                    condition_label=entry.fault.label,
                    speed_profile_id=f"p{ei:02d}",
                ))
            record_idx += 1
        n = len(collected)
        n_train = int(round(train_fraction * n))
        assignment = np.array(["test"] * n, dtype=object)
        order = split_rng.permutation(n)
        assignment[order[:n_train]] = "train"
        samples.extend(collected)
        split.extend(assignment.tolist())
    manifest = DatasetManifest(
        n_samples=len(samples),
        length=length,
        sample_rate_hz=sample_rate_hz,
        labels=tuple(s.condition_label for s in samples),
        split=tuple(split),
        speed_profile_ids=tuple(s.speed_profile_id for s in samples),
    )
    return Dataset(samples=tuple(samples), manifest=manifest)


class BenchSpecError(ValueError):
    pass


_TOP_KEYS = {"sample_rate_hz", "length", "seed", "noise_std", "entries"}
_ENTRY_KEYS = {"profile", "fault", "count", "speed_jitter"}
_SEGMENT_KEYS = {"kind", "duration_s", "start_hz", "end_hz"}
_FAULT_KEYS = {"kind", "severity", "characteristic_order"}


def _reject_unknown(doc: dict, allowed: set, where: str):
    unknown = set(doc) - allowed
    if unknown:
        raise BenchSpecError(f"unknown key {sorted(unknown)[0]!r} in {where}")


def load_bench_spec(path):
    """Parse a JSON benchmark spec into (entries, sample_rate_hz, L, seed, noise_std)."""
    doc = json.loads(Path(path).read_text())
    _reject_unknown(doc, _TOP_KEYS, "spec")
    try:
        entries = []
        for i, e in enumerate(doc["entries"]):
            _reject_unknown(e, _ENTRY_KEYS, f"entries[{i}]")
            segments = []
            for j, seg in enumerate(e["profile"]["segments"]):
                _reject_unknown(seg, _SEGMENT_KEYS, f"entries[{i}].profile.segments[{j}]")
                segments.append(Segment(
                    kind=seg["kind"],
                    duration_s=float(seg["duration_s"]),
                    start_hz=float(seg.get("start_hz", 0.0)),
                    end_hz=float(seg.get("end_hz", 0.0)),
                ))
            fault_doc = e.get("fault", {})
            _reject_unknown(fault_doc, _FAULT_KEYS, f"entries[{i}].fault")
            kind = fault_doc.get("kind", "none")
            default_order = INNER_RACE_ORDER if kind == "inner_race" else OUTER_RACE_ORDER
            fault = FaultSpec(
                kind=kind,
                severity=float(fault_doc.get("severity", 1.0)),
                characteristic_order=float(
                    fault_doc.get("characteristic_order", default_order)
                ),
            )
            entries.append(BenchEntry(
                profile=SpeedProfile(tuple(segments)),
                fault=fault,
                count=int(e["count"]),
                speed_jitter=float(e.get("speed_jitter", 0.1)),
            ))
    except KeyError as exc:
        raise BenchSpecError(f"missing required key {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise BenchSpecError(str(exc)) from exc
    return (
        entries,
        float(doc.get("sample_rate_hz", DEFAULT_SAMPLE_RATE_HZ)),
        int(doc.get("length", 2048)),
        int(doc.get("seed", 0)),
        float(doc.get("noise_std", DEFAULT_NOISE_STD)),
    )
