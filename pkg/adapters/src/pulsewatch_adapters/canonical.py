"""Emission of the canonical formats the monitoring engine consumes.

The window schema is the engine's documented JSONL contract: one object per
line with patient_id, dataset, modality, fs, start_s, duration_s,
window_index, samples; windows tile the stream and a short trailing remainder
is dropped. Episode annotations are {patient_id, onset_s, offset_s, label}.
Per-window reference labels go to a labels.jsonl sidecar keyed by
window_index (these are the hidden ground-truth fields, never part of the
window file itself).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdapterManifest:
    dataset: str
    source_path: str
    converter_version: str
    emitted_patients: list[str] = field(default_factory=list)
    windows_per_patient: dict[str, int] = field(default_factory=dict)
    proactive_windows_per_patient: dict[str, int] = field(default_factory=dict)
    annotation_coverage: dict[str, dict] = field(default_factory=dict)
    skipped_records: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "source_path": self.source_path,
            "converter_version": self.converter_version,
            "emitted_patients": self.emitted_patients,
            "windows_per_patient": self.windows_per_patient,
            "proactive_windows_per_patient": self.proactive_windows_per_patient,
            "annotation_coverage": self.annotation_coverage,
            "skipped_records": self.skipped_records,
        }

    def save(self, out_dir) -> str:
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def window_records(
    samples: np.ndarray,
    fs: float,
    window_s: float,
    patient_id: str,
    dataset: str,
    modality: str,
) -> list[dict]:
    """Tile a stream into canonical window dicts (remainder dropped)."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    n_per = int(round(fs * window_s))
    n_full = x.size // n_per
    records = []
    for i in range(n_full):
        chunk = x[i * n_per : (i + 1) * n_per]
        records.append(
            {
                "patient_id": patient_id,
                "dataset": dataset,
                "modality": modality,
                "fs": float(fs),
                "start_s": i * window_s,
                "duration_s": window_s,
                "window_index": i,
                "samples": [float(v) for v in chunk],
            }
        )
    return records


def write_jsonl(rows: list[dict], path) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return len(rows)


def label_rows(windows: list[dict], per_window_labels: list[dict]) -> list[dict]:
    rows = []
    for win, labels in zip(windows, per_window_labels):
        row = {
            "window_index": win["window_index"],
            "window_start_s": win["start_s"],
            "window_end_s": win["start_s"] + win["duration_s"],
        }
        row.update({k: v for k, v in labels.items() if v is not None})
        rows.append(row)
    return rows


def episodes_from_spans(
    spans: list[tuple[float, float, str]], patient_id: str, keep_labels: set[str]
) -> list[dict]:
    return [
        {"patient_id": patient_id, "onset_s": start, "offset_s": end, "label": label}
        for start, end, label in spans
        if label in keep_labels and end > start
    ]


def majority_span_label(
    spans: list[tuple[float, float, str]], start_s: float, end_s: float
) -> str | None:
    """Label covering the largest share of [start_s, end_s), if any."""
    cover: dict[str, float] = {}
    for s, e, label in spans:
        overlap = min(e, end_s) - max(s, start_s)
        if overlap > 0:
            cover[label] = cover.get(label, 0.0) + overlap
    if not cover:
        return None
    return max(sorted(cover), key=lambda k: cover[k])
