"""Icentia11k-style converter: WFDB ECG records with rhythm annotations.

Expects <src>/<record>.hea + .dat + optional .atr per patient record (one
record per patient). Rhythm aux notes ('(N', '(AFIB', '(AFL') become hidden
per-window rhythm_class labels mapped {AFIB -> AF, AFL -> Other, N -> N}, and
contiguous AF spans become episode annotations.
"""
from __future__ import annotations

import glob
import os

from . import wfdb_min
from .canonical import (
    AdapterManifest,
    episodes_from_spans,
    label_rows,
    majority_span_label,
    window_records,
    write_jsonl,
)

RHYTHM_MAP = {"AFIB": "AF", "AFL": "Other", "N": "N"}
QA_WINDOW_S = 300.0
PROACTIVE_WINDOW_S = 10.0


def convert(
    source_dir: str,
    out_dir: str,
    qa_window_s: float = QA_WINDOW_S,
    proactive_windows: bool = False,
    version: str = "0.1.0",
) -> AdapterManifest:
    manifest = AdapterManifest("icentia11k", source_dir, version)
    headers = sorted(glob.glob(os.path.join(source_dir, "*.hea")))
    if not headers:
        raise FileNotFoundError(
            f"no WFDB headers under {source_dir!r}; supply a local copy of the "
            "source dataset (it is not redistributed with this converter)"
        )
    for hea_path in headers:
        record_dir = os.path.dirname(hea_path)
        try:
            header = wfdb_min.read_header(hea_path)
            physical = wfdb_min.read_signal(header, record_dir)[:, 0]
        except (wfdb_min.WfdbFormatError, OSError, ValueError) as exc:
            manifest.skipped_records.append(
                {"record": os.path.basename(hea_path), "reason": str(exc)}
            )
            continue
        patient_id = header.record_name
        atr_path = os.path.join(record_dir, f"{header.record_name}.atr")
        spans = []
        if os.path.exists(atr_path):
            anns = wfdb_min.read_annotations(atr_path)
            spans = [
                (s, e, RHYTHM_MAP.get(label, "Other"))
                for s, e, label in wfdb_min.rhythm_intervals(
                    anns, header.fs, header.n_samples
                )
            ]

        pdir = os.path.join(out_dir, patient_id)
        os.makedirs(pdir, exist_ok=True)
        windows = window_records(
            physical, header.fs, qa_window_s, patient_id, "icentia11k", "ECG"
        )
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
            "rhythm_spans": len(spans),
            "af_episodes": len(episodes),
            "labeled_windows": sum(1 for l in labels if l["rhythm_class"] is not None),
        }
        if proactive_windows:
            pro = window_records(
                physical, header.fs, PROACTIVE_WINDOW_S, patient_id, "icentia11k", "ECG"
            )
            write_jsonl(pro, os.path.join(pdir, "windows_10s.jsonl"))
            manifest.proactive_windows_per_patient[patient_id] = len(pro)
    os.makedirs(out_dir, exist_ok=True)
    manifest.save(out_dir)
    return manifest
