"""AF-labeled wrist PPG converter.

Expects one .mat file per patient under <src>, each holding:
  PPG          1xN or Nx1 waveform
  fs           scalar sampling rate (Hz)
  af_intervals Mx2 [onset_s, offset_s] rows (may be empty)

The AF intervals become episode annotations and per-window hidden
rhythm_class labels (AF inside an interval by majority overlap, N elsewhere).
"""
from __future__ import annotations

import glob
import os

import numpy as np
from scipy.io import loadmat

from .canonical import (
    AdapterManifest,
    episodes_from_spans,
    label_rows,
    majority_span_label,
    window_records,
    write_jsonl,
)

QA_WINDOW_S = 300.0
PROACTIVE_WINDOW_S = 10.0


def _load_record(path) -> tuple[np.ndarray, float, list[tuple[float, float, str]]]:
    mat = loadmat(path)
    missing = [k for k in ("PPG", "fs") if k not in mat]
    if missing:
        raise ValueError(f"{path}: missing variables {missing}")
    ppg = np.asarray(mat["PPG"], dtype=float).reshape(-1)
    fs = float(np.asarray(mat["fs"]).reshape(-1)[0])
    total_s = ppg.size / fs
    spans: list[tuple[float, float, str]] = []
    intervals = np.asarray(mat.get("af_intervals", np.zeros((0, 2))), dtype=float)
    if intervals.size:
        for onset, offset in intervals.reshape(-1, 2):
            spans.append((float(onset), float(offset), "AF"))
    # everything outside the AF intervals is reference-normal
    cursor = 0.0
    n_spans = []
    for onset, offset, _ in sorted(spans):
        if onset > cursor:
            n_spans.append((cursor, onset, "N"))
        cursor = max(cursor, offset)
    if cursor < total_s:
        n_spans.append((cursor, total_s, "N"))
    return ppg, fs, sorted(spans + n_spans)


def convert(
    source_dir: str,
    out_dir: str,
    qa_window_s: float = QA_WINDOW_S,
    proactive_windows: bool = False,
    version: str = "0.1.0",
) -> AdapterManifest:
    manifest = AdapterManifest("af_ppg_ecg", source_dir, version)
    paths = sorted(glob.glob(os.path.join(source_dir, "*.mat")))
    if not paths:
        raise FileNotFoundError(
            f"no .mat records under {source_dir!r}; supply a local copy of the "
            "source dataset (it is not redistributed with this converter)"
        )
    for path in paths:
        patient_id = os.path.splitext(os.path.basename(path))[0]
        try:
            ppg, fs, spans = _load_record(path)
        except (ValueError, OSError, KeyError) as exc:
            manifest.skipped_records.append(
                {"record": os.path.basename(path), "reason": str(exc)}
            )
            continue
        pdir = os.path.join(out_dir, patient_id)
        os.makedirs(pdir, exist_ok=True)
        windows = window_records(ppg, fs, qa_window_s, patient_id, "af_ppg_ecg", "PPG")
        write_jsonl(windows, os.path.join(pdir, "windows.jsonl"))
        labels = [
            {"rhythm_class": majority_span_label(
                spans, w["start_s"], w["start_s"] + w["duration_s"])}
            for w in windows
        ]
        write_jsonl(label_rows(windows, labels), os.path.join(pdir, "labels.jsonl"))
        episodes = episodes_from_spans(spans, patient_id, keep_labels={"AF"})
        write_jsonl(episodes, os.path.join(pdir, "episodes.jsonl"))
        manifest.emitted_patients.append(patient_id)
        manifest.windows_per_patient[patient_id] = len(windows)
        manifest.annotation_coverage[patient_id] = {
            "af_episodes": len(episodes),
            "labeled_windows": sum(1 for l in labels if l["rhythm_class"] is not None),
        }
        if proactive_windows:
            pro = window_records(
                ppg, fs, PROACTIVE_WINDOW_S, patient_id, "af_ppg_ecg", "PPG"
            )
            write_jsonl(pro, os.path.join(pdir, "windows_10s.jsonl"))
            manifest.proactive_windows_per_patient[patient_id] = len(pro)
    os.makedirs(out_dir, exist_ok=True)
    manifest.save(out_dir)
    return manifest
