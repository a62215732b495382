"""Canonical signal windows, stream segmentation, and the scripted synthesizer.

A stream is a flat amplitude sequence at a fixed sampling rate. All downstream
processing consumes non-overlapping fixed-length windows cut from it; the
canonical on-disk form is JSONL with one window per line.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataIntegrityError, SchemaError

DATASETS = ("icentia11k", "af_ppg_ecg", "ppg_dalia", "wesad", "synthetic")
MODALITIES = ("ECG", "PPG")
SEGMENT_KINDS = ("normal", "tachycardia", "bradycardia", "af_like")

DEFAULT_WINDOW_LEN_S = 10.0


@dataclass
class SampleWindow:
    """One fixed-length raw signal segment at a known timeline position."""

    patient_id: str
    dataset: str
    modality: str
    fs: float
    start_s: float
    duration_s: float
    window_index: int
    samples: list[float]

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s

    def expected_n_samples(self) -> int:
        return int(round(self.fs * self.duration_s))

    def validate(self) -> None:
        if self.dataset not in DATASETS:
            raise SchemaError(f"unknown dataset {self.dataset!r}")
        if self.modality not in MODALITIES:
            raise SchemaError(f"unknown modality {self.modality!r}")
        if not self.fs > 0:
            raise SchemaError("fs must be > 0")
        if self.start_s < 0:
            raise SchemaError("start_s must be >= 0")
        if not self.duration_s > 0:
            raise SchemaError("duration_s must be > 0")
        if self.window_index < 0:
            raise SchemaError("window_index must be >= 0")
        if len(self.samples) != self.expected_n_samples():
            raise SchemaError(
                f"samples length {len(self.samples)} != round(fs*duration)="
                f"{self.expected_n_samples()}"
            )

    def to_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "dataset": self.dataset,
            "modality": self.modality,
            "fs": self.fs,
            "start_s": self.start_s,
            "duration_s": self.duration_s,
            "window_index": self.window_index,
            "samples": [float(v) for v in self.samples],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SampleWindow":
        try:
            win = cls(
                patient_id=str(d["patient_id"]),
                dataset=str(d["dataset"]),
                modality=str(d["modality"]),
                fs=float(d["fs"]),
                start_s=float(d["start_s"]),
                duration_s=float(d["duration_s"]),
                window_index=int(d["window_index"]),
                samples=[float(v) for v in d["samples"]],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad window record: {exc}") from exc
        win.validate()
        return win


def segment_stream(
    samples: Sequence[float],
    fs: float,
    window_len_s: float = DEFAULT_WINDOW_LEN_S,
    *,
    patient_id: str = "synthetic",
    dataset: str = "synthetic",
    modality: str = "ECG",
    t0_s: float = 0.0,
    first_index: int = 0,
) -> tuple[list[SampleWindow], int]:
    """Tile a stream into non-overlapping fixed-length windows.

    Returns (windows, n_discarded). A trailing remainder shorter than one
    window is dropped, never padded; the tally makes the tiling auditable:
    sum(len(w.samples)) + n_discarded == len(samples).
    """
    if not fs > 0:
        raise ConfigError("fs must be > 0")
    if not window_len_s > 0:
        raise ConfigError("window_len_s must be > 0")
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        return [], 0
    if not np.all(np.isfinite(arr)):
        raise DataIntegrityError("stream contains non-finite samples")

    n_per = int(round(fs * window_len_s))
    n_full = arr.size // n_per
    windows: list[SampleWindow] = []
    for i in range(n_full):
        chunk = arr[i * n_per : (i + 1) * n_per]
        windows.append(
            SampleWindow(
                patient_id=patient_id,
                dataset=dataset,
                modality=modality,
                fs=fs,
                start_s=t0_s + i * window_len_s,
                duration_s=window_len_s,
                window_index=first_index + i,
                samples=chunk.tolist(),
            )
        )
    discarded = int(arr.size - n_full * n_per)
    return windows, discarded


# ---------------------------------------------------------------------------
# Window JSONL round-trip


def write_windows_jsonl(windows: Iterable[SampleWindow], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for w in windows:
            fh.write(json.dumps(w.to_dict()) + "\n")
            n += 1
    return n


def read_windows_jsonl(
    path, *, strict: bool = True
) -> tuple[list[SampleWindow], list[str]]:
    """Load windows from JSONL.

    In strict mode any invalid line raises. Otherwise invalid lines are
    skipped and described in the returned warnings list (one entry per
    problem); continuity breaks between consecutive windows are warned about
    in both modes.
    """
    windows: list[SampleWindow] = []
    warnings: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                win = SampleWindow.from_dict(d)
            except (json.JSONDecodeError, SchemaError) as exc:
                if strict:
                    raise SchemaError(f"{path}:{lineno}: {exc}") from exc
                warnings.append(f"{path}:{lineno}: {exc}")
                continue
            windows.append(win)
    for prev, cur in zip(windows, windows[1:]):
        if cur.window_index != prev.window_index + 1:
            warnings.append(
                f"{path}: window_index jumps {prev.window_index} -> {cur.window_index}"
            )
        elif not math.isclose(cur.start_s, prev.start_s + prev.duration_s, abs_tol=1e-6):
            warnings.append(
                f"{path}: window {cur.window_index} start {cur.start_s} is not "
                f"contiguous with previous end {prev.start_s + prev.duration_s}"
            )
    return windows, warnings


# ---------------------------------------------------------------------------
# Scripted synthetic streams


@dataclass
class ScriptSegment:
    start_s: float
    end_s: float
    kind: str
    # target HR in bpm for tachycardia/bradycardia, relative RR jitter
    # magnitude for af_like; ignored for normal
    param: float | None = None

    def to_dict(self) -> dict:
        return {"start_s": self.start_s, "end_s": self.end_s, "kind": self.kind, "param": self.param}

    @classmethod
    def from_dict(cls, d: dict) -> "ScriptSegment":
        return cls(
            start_s=float(d["start_s"]),
            end_s=float(d["end_s"]),
            kind=str(d["kind"]),
            param=None if d.get("param") is None else float(d["param"]),
        )


@dataclass
class StreamScript:
    """Declarative description of a synthetic stream with labeled episodes."""

    total_duration_s: float
    base_hr_bpm: float = 70.0
    segments: list[ScriptSegment] = field(default_factory=list)
    noise_seed: int = 0

    def validate(self) -> None:
        if not self.total_duration_s > 0:
            raise ConfigError("total_duration_s must be > 0")
        if not 20 <= self.base_hr_bpm <= 220:
            raise ConfigError("base_hr_bpm outside sane range")
        ordered = sorted(self.segments, key=lambda s: s.start_s)
        prev_end = 0.0
        for seg in ordered:
            if seg.kind not in SEGMENT_KINDS:
                raise ConfigError(f"unknown segment kind {seg.kind!r}")
            if seg.start_s < 0 or seg.end_s > self.total_duration_s:
                raise ConfigError("segment outside [0, total_duration_s]")
            if seg.end_s <= seg.start_s:
                raise ConfigError("segment end must exceed start")
            if seg.start_s < prev_end:
                raise ConfigError("segments overlap")
            prev_end = seg.end_s

    def to_dict(self) -> dict:
        return {
            "total_duration_s": self.total_duration_s,
            "base_hr_bpm": self.base_hr_bpm,
            "segments": [s.to_dict() for s in self.segments],
            "noise_seed": self.noise_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StreamScript":
        script = cls(
            total_duration_s=float(d["total_duration_s"]),
            base_hr_bpm=float(d.get("base_hr_bpm", 70.0)),
            segments=[ScriptSegment.from_dict(s) for s in d.get("segments", [])],
            noise_seed=int(d.get("noise_seed", 0)),
        )
        script.validate()
        return script


DEFAULT_AF_JITTER = 0.35


def _segment_at(script: StreamScript, t: float) -> ScriptSegment | None:
    for seg in script.segments:
        if seg.start_s <= t < seg.end_s:
            return seg
    return None


def _beat_times(script: StreamScript, rng: np.random.Generator) -> np.ndarray:
    """Walk the timeline emitting beat instants at the scripted local rate."""
    times = []
    t = 0.25  # first beat away from the array edge
    base_rr = 60.0 / script.base_hr_bpm
    while t < script.total_duration_s:
        times.append(t)
        seg = _segment_at(script, t)
        if seg is None or seg.kind == "normal":
            rr = base_rr
        elif seg.kind in ("tachycardia", "bradycardia"):
            target = seg.param if seg.param is not None else script.base_hr_bpm
            rr = 60.0 / target
        else:  # af_like: independent uniform jitter around the base interval
            m = seg.param if seg.param is not None else DEFAULT_AF_JITTER
            rr = base_rr * rng.uniform(1.0 - m, 1.0 + m)
        # small physiological wobble outside AF so RR is not bit-constant
        if seg is None or seg.kind != "af_like":
            rr = rr * (1.0 + 0.004 * rng.standard_normal())
        t += max(rr, 0.25)
    return np.asarray(times)


def synthesize_stream(
    script: StreamScript, fs: float = 100.0, modality: str = "ECG"
) -> tuple[np.ndarray, list[dict]]:
    """Render a scripted stream to amplitudes plus ground-truth episode labels.

    Deterministic for a given (script, fs, modality). Episode annotations echo
    the non-normal segments as {start_s, end_s, label} for evaluation oracles.
    """
    script.validate()
    if modality not in MODALITIES:
        raise ConfigError(f"unknown modality {modality!r}")
    rng = np.random.default_rng(script.noise_seed)
    n = int(round(script.total_duration_s * fs))
    t_axis = np.arange(n) / fs

    sig = 0.08 * np.sin(2 * np.pi * 0.25 * t_axis)  # respiration-scale wander
    beats = _beat_times(script, rng)
    width = 0.012 if modality == "ECG" else 0.11  # pulse waves are much broader
    half = int(math.ceil(4 * width * fs))
    for b in beats:
        c = int(round(b * fs))
        lo, hi = max(0, c - half), min(n, c + half + 1)
        if lo >= hi:
            continue
        tt = t_axis[lo:hi] - b
        sig[lo:hi] += np.exp(-0.5 * (tt / width) ** 2)
    sig += 0.01 * rng.standard_normal(n)

    annotations = [
        {"start_s": seg.start_s, "end_s": seg.end_s, "label": seg.kind}
        for seg in sorted(script.segments, key=lambda s: s.start_s)
        if seg.kind != "normal"
    ]
    return sig, annotations


def write_annotations_jsonl(annotations: Iterable[dict], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for ann in annotations:
            fh.write(json.dumps(ann) + "\n")
            n += 1
    return n


def read_annotations_jsonl(path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out
