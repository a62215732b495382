"""Wrist-wearable pickle converters (activity/HR and stress datasets).

Both source formats ship one pickle per subject with wrist BVP at 64 Hz:

  activity/HR ('ppg_dalia'):
    {'signal': {'wrist': {'BVP': array}}, 'label': array of reference HR
     values on 8 s windows shifted by 2 s, 'subject': 'S1'}
  stress ('wesad'):
    {'signal': {'wrist': {'BVP': array}}, 'label': protocol ids at 700 Hz,
     'subject': 'S2'}

Reference HR maps to the hidden ecg_reference_hr_bpm label; protocol ids map
to hidden stress_label / protocol_label_id, and contiguous stress spans become
episode annotations.
"""
from __future__ import annotations

import glob
import os
import pickle

import numpy as np

from .canonical import (
    AdapterManifest,
    episodes_from_spans,
    label_rows,
    window_records,
    write_jsonl,
)

BVP_FS = 64.0
QA_WINDOW_S = 60.0
DALIA_HR_STEP_S = 2.0
DALIA_HR_SPAN_S = 8.0
WESAD_LABEL_FS = 700.0
WESAD_PROTOCOL = {0: None, 1: "baseline", 2: "stress", 3: "amusement",
                  4: "meditation"}


def _load_pickle(path) -> dict:
    with open(path, "rb") as fh:
        obj = pickle.load(fh, encoding="latin1")
    if not isinstance(obj, dict) or "signal" not in obj:
        raise ValueError(f"{path}: not a subject archive (missing 'signal')")
    try:
        bvp = np.asarray(obj["signal"]["wrist"]["BVP"], dtype=float).reshape(-1)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: missing wrist BVP channel: {exc}") from exc
    return {"bvp": bvp, "label": np.asarray(obj.get("label", [])).reshape(-1),
            "subject": str(obj.get("subject", os.path.splitext(os.path.basename(path))[0]))}


def _dalia_window_hr(label: np.ndarray, start_s: float, end_s: float) -> float | None:
    if label.size == 0:
        return None
    # label k covers [k*2, k*2+8) seconds
    hits = [
        float(label[k]) for k in range(label.size)
        if k * DALIA_HR_STEP_S < end_s and k * DALIA_HR_STEP_S + DALIA_HR_SPAN_S > start_s
    ]
    return sum(hits) / len(hits) if hits else None


def _wesad_window_protocol(label: np.ndarray, start_s: float, end_s: float) -> int | None:
    if label.size == 0:
        return None
    lo = int(start_s * WESAD_LABEL_FS)
    hi = min(int(end_s * WESAD_LABEL_FS), label.size)
    if hi <= lo:
        return None
    segment = label[lo:hi].astype(int)
    values, counts = np.unique(segment, return_counts=True)
    return int(values[np.argmax(counts)])


def _stress_spans(label: np.ndarray) -> list[tuple[float, float, str]]:
    spans = []
    in_stress = False
    start = 0.0
    for i, v in enumerate(label.astype(int)):
        t = i / WESAD_LABEL_FS
        if v == 2 and not in_stress:
            in_stress, start = True, t
        elif v != 2 and in_stress:
            spans.append((start, t, "stress"))
            in_stress = False
    if in_stress:
        spans.append((start, label.size / WESAD_LABEL_FS, "stress"))
    return spans


def convert(
    dataset: str,
    source_dir: str,
    out_dir: str,
    qa_window_s: float = QA_WINDOW_S,
    proactive_windows: bool = False,
    version: str = "0.1.0",
) -> AdapterManifest:
    if dataset not in ("ppg_dalia", "wesad"):
        raise ValueError(f"unsupported wrist dataset {dataset!r}")
    manifest = AdapterManifest(dataset, source_dir, version)
    paths = sorted(glob.glob(os.path.join(source_dir, "**", "*.pkl"), recursive=True))
    if not paths:
        raise FileNotFoundError(
            f"no .pkl subject archives under {source_dir!r}; supply a local copy "
            "of the source dataset (it is not redistributed with this converter)"
        )
    for path in paths:
        try:
            rec = _load_pickle(path)
        except (ValueError, OSError, pickle.UnpicklingError) as exc:
            manifest.skipped_records.append(
                {"record": os.path.basename(path), "reason": str(exc)}
            )
            continue
        patient_id = rec["subject"]
        pdir = os.path.join(out_dir, patient_id)
        os.makedirs(pdir, exist_ok=True)
        windows = window_records(rec["bvp"], BVP_FS, qa_window_s, patient_id, dataset, "PPG")
        write_jsonl(windows, os.path.join(pdir, "windows.jsonl"))

        labels = []
        for w in windows:
            start, end = w["start_s"], w["start_s"] + w["duration_s"]
            if dataset == "ppg_dalia":
                labels.append({"ecg_reference_hr_bpm": _dalia_window_hr(rec["label"], start, end)})
            else:
                pid = _wesad_window_protocol(rec["label"], start, end)
                labels.append({
                    "protocol_label_id": pid,
                    "stress_label": WESAD_PROTOCOL.get(pid),
                })
        write_jsonl(label_rows(windows, labels), os.path.join(pdir, "labels.jsonl"))

        episodes = []
        if dataset == "wesad":
            episodes = episodes_from_spans(
                _stress_spans(rec["label"]), patient_id, keep_labels={"stress"}
            )
        write_jsonl(episodes, os.path.join(pdir, "episodes.jsonl"))

        manifest.emitted_patients.append(patient_id)
        manifest.windows_per_patient[patient_id] = len(windows)
        manifest.annotation_coverage[patient_id] = {
            "labeled_windows": sum(
                1 for l in labels if any(v is not None for v in l.values())
            ),
            "episodes": len(episodes),
        }
        if proactive_windows:
            pro = window_records(rec["bvp"], BVP_FS, 10.0, patient_id, dataset, "PPG")
            write_jsonl(pro, os.path.join(pdir, "windows_10s.jsonl"))
            manifest.proactive_windows_per_patient[patient_id] = len(pro)
    os.makedirs(out_dir, exist_ok=True)
    manifest.save(out_dir)
    return manifest
