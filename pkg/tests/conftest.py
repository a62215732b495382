"""Shared fixtures: synthetic streams, replayed memories, QA data dirs."""
from __future__ import annotations

import pytest

from pulsewatch.engine import MonitorEngine, RuleConfig
from pulsewatch.streams import (
    ScriptSegment,
    StreamScript,
    segment_stream,
    synthesize_stream,
    write_annotations_jsonl,
    write_windows_jsonl,
)

FS = 100.0

# 2-hour stream with the three rule-relevant abnormalities, aligned to
# 10-second window boundaries. The extreme segments are short enough that the
# sustained-elevation rule cannot also cross its 0.8 trailing ratio there.
ACCEPTANCE_SCRIPT = StreamScript(
    total_duration_s=7200.0,
    base_hr_bpm=70.0,
    segments=[
        ScriptSegment(1000.0, 1120.0, "tachycardia", 160.0),
        ScriptSegment(2500.0, 2620.0, "bradycardia", 35.0),
        ScriptSegment(4000.0, 4900.0, "tachycardia", 110.0),
    ],
    noise_seed=42,
)

AF_SCRIPT = StreamScript(
    total_duration_s=3600.0,
    base_hr_bpm=70.0,
    segments=[
        ScriptSegment(600.0, 720.0, "tachycardia", 160.0),
        ScriptSegment(1500.0, 2700.0, "af_like", 0.35),
    ],
    noise_seed=11,
)


def synth_windows(script: StreamScript, patient_id: str = "synth-001", fs: float = FS):
    samples, annotations = synthesize_stream(script, fs=fs)
    windows, _ = segment_stream(
        samples, fs=fs, patient_id=patient_id, dataset="synthetic", modality="ECG"
    )
    return windows, annotations


@pytest.fixture(scope="session")
def quiet_windows():
    """12 minutes of unremarkable 70 bpm signal."""
    script = StreamScript(total_duration_s=720.0, base_hr_bpm=70.0, noise_seed=5)
    return synth_windows(script)[0]


@pytest.fixture(scope="session")
def acceptance_stream():
    return synth_windows(ACCEPTANCE_SCRIPT)


@pytest.fixture(scope="session")
def replayed(acceptance_stream):
    """Rule-only replay of the 2-hour acceptance stream."""
    windows, annotations = acceptance_stream
    engine = MonitorEngine(RuleConfig())
    memory, alerts = engine.replay(windows)
    return memory, alerts, annotations


@pytest.fixture(scope="session")
def qa_data_dir(tmp_path_factory, acceptance_stream, replayed):
    """Per-patient data directory with windows + ground-truth states."""
    memory, _alerts, annotations = replayed
    windows, _ = acceptance_stream
    root = tmp_path_factory.mktemp("qa_data")
    pdir = root / "synth-001"
    pdir.mkdir()
    write_windows_jsonl(windows, pdir / "windows.jsonl")
    write_annotations_jsonl(annotations, pdir / "annotations.jsonl")
    memory.persist(pdir)
    return root
