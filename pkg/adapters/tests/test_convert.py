import json
import os
import pickle

import numpy as np
import pytest
from scipy.io import savemat

from pulsewatch_adapters.cli import convert, main as cli_main

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

WINDOW_FIELDS = {
    "patient_id", "dataset", "modality", "fs", "start_s", "duration_s",
    "window_index", "samples",
}


def read_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def check_window_schema(rows, dataset, modality):
    assert rows, "no windows emitted"
    for i, row in enumerate(rows):
        assert set(row) == WINDOW_FIELDS
        assert row["dataset"] == dataset
        assert row["modality"] == modality
        assert row["window_index"] == i
        assert row["start_s"] == pytest.approx(i * row["duration_s"])
        assert len(row["samples"]) == round(row["fs"] * row["duration_s"])


class TestIcentiaConversion:
    def test_fixture_converts(self, tmp_path):
        manifest = convert("icentia11k", FIXTURES, str(tmp_path),
                           qa_window_s=30.0, proactive_windows=True)
        assert manifest.emitted_patients == ["synthetic01"]
        pdir = tmp_path / "synthetic01"

        windows = read_jsonl(pdir / "windows.jsonl")
        check_window_schema(windows, "icentia11k", "ECG")
        assert len(windows) == 2  # 60 s at 30 s windows

        pro = read_jsonl(pdir / "windows_10s.jsonl")
        check_window_schema(pro, "icentia11k", "ECG")
        assert len(pro) == 6  # 60 s at 10 s windows

        episodes = read_jsonl(pdir / "episodes.jsonl")
        assert episodes == [{
            "patient_id": "synthetic01", "onset_s": 30.0, "offset_s": 60.0,
            "label": "AF",
        }]

        labels = read_jsonl(pdir / "labels.jsonl")
        assert [l["rhythm_class"] for l in labels] == ["N", "AF"]

        saved = json.loads((tmp_path / "manifest.json").read_text())
        assert saved["windows_per_patient"]["synthetic01"] == 2
        assert saved["proactive_windows_per_patient"]["synthetic01"] == 6
        assert saved["skipped_records"] == []

    def test_deterministic(self, tmp_path):
        convert("icentia11k", FIXTURES, str(tmp_path / "a"), qa_window_s=30.0)
        convert("icentia11k", FIXTURES, str(tmp_path / "b"), qa_window_s=30.0)
        for name in ("windows.jsonl", "labels.jsonl", "episodes.jsonl"):
            assert (tmp_path / "a" / "synthetic01" / name).read_bytes() == (
                tmp_path / "b" / "synthetic01" / name
            ).read_bytes()

    def test_missing_source_aborts_with_provenance_message(self, tmp_path, capsys):
        rc = cli_main(["icentia11k", str(tmp_path / "empty"), str(tmp_path / "out")])
        assert rc == 2
        err = json.loads(capsys.readouterr().err)
        assert "local copy" in err["error"]["message"]

    def test_partial_record_skipped_and_tallied(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        for name in ("synthetic01.hea", "synthetic01.dat", "synthetic01.atr"):
            (src / name).write_bytes(open(os.path.join(FIXTURES, name), "rb").read())
        (src / "broken.hea").write_text("broken 1 250\n")  # missing n_samples
        manifest = convert("icentia11k", str(src), str(tmp_path / "out"),
                           qa_window_s=30.0)
        assert manifest.emitted_patients == ["synthetic01"]
        assert len(manifest.skipped_records) == 1
        assert manifest.skipped_records[0]["record"] == "broken.hea"


def synth_bvp(duration_s=180.0, fs=64.0, hr_bpm=75.0):
    t = np.arange(int(duration_s * fs)) / fs
    return np.sin(2 * np.pi * (hr_bpm / 60.0) * t) + 0.1 * np.sin(2 * np.pi * 0.2 * t)


class TestWristConversion:
    def test_dalia_pickle(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        bvp = synth_bvp()
        n_hr = int((180.0 - 8.0) / 2.0) + 1
        archive = {
            "signal": {"wrist": {"BVP": bvp.reshape(-1, 1)}},
            "label": np.full(n_hr, 75.0),
            "subject": "S1",
        }
        with open(src / "S1.pkl", "wb") as fh:
            pickle.dump(archive, fh)
        manifest = convert("ppg_dalia", str(src), str(tmp_path / "out"))
        assert manifest.emitted_patients == ["S1"]
        windows = read_jsonl(tmp_path / "out" / "S1" / "windows.jsonl")
        check_window_schema(windows, "ppg_dalia", "PPG")
        assert len(windows) == 3  # 180 s at 60 s windows
        labels = read_jsonl(tmp_path / "out" / "S1" / "labels.jsonl")
        assert all(l["ecg_reference_hr_bpm"] == pytest.approx(75.0) for l in labels)

    def test_wesad_pickle_with_stress_episode(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        bvp = synth_bvp()
        label = np.ones(int(180.0 * 700.0), dtype=int)
        lo, hi = int(60.0 * 700.0), int(120.0 * 700.0)
        label[lo:hi] = 2  # stress for the middle minute
        archive = {"signal": {"wrist": {"BVP": bvp}}, "label": label, "subject": "S2"}
        with open(src / "S2.pkl", "wb") as fh:
            pickle.dump(archive, fh)
        manifest = convert("wesad", str(src), str(tmp_path / "out"))
        assert manifest.emitted_patients == ["S2"]
        labels = read_jsonl(tmp_path / "out" / "S2" / "labels.jsonl")
        assert [l.get("stress_label") for l in labels] == ["baseline", "stress", "baseline"]
        episodes = read_jsonl(tmp_path / "out" / "S2" / "episodes.jsonl")
        assert len(episodes) == 1
        assert episodes[0]["onset_s"] == pytest.approx(60.0)
        assert episodes[0]["offset_s"] == pytest.approx(120.0)

    def test_malformed_pickle_skipped(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        with open(src / "junk.pkl", "wb") as fh:
            pickle.dump({"nothing": True}, fh)
        manifest = convert("wesad", str(src), str(tmp_path / "out"))
        assert manifest.emitted_patients == []
        assert len(manifest.skipped_records) == 1


class TestAfPpgConversion:
    def test_mat_record(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        fs = 64.0
        ppg = synth_bvp(duration_s=900.0, fs=fs)
        savemat(src / "patient07.mat", {
            "PPG": ppg, "fs": fs, "af_intervals": np.array([[300.0, 600.0]]),
        })
        manifest = convert("af_ppg_ecg", str(src), str(tmp_path / "out"))
        assert manifest.emitted_patients == ["patient07"]
        windows = read_jsonl(tmp_path / "out" / "patient07" / "windows.jsonl")
        check_window_schema(windows, "af_ppg_ecg", "PPG")
        assert len(windows) == 3  # 900 s at 300 s windows
        labels = read_jsonl(tmp_path / "out" / "patient07" / "labels.jsonl")
        assert [l["rhythm_class"] for l in labels] == ["N", "AF", "N"]
        episodes = read_jsonl(tmp_path / "out" / "patient07" / "episodes.jsonl")
        assert episodes == [{
            "patient_id": "patient07", "onset_s": 300.0, "offset_s": 600.0,
            "label": "AF",
        }]

    def test_missing_variables_skipped(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        savemat(src / "bad.mat", {"whatever": np.zeros(4)})
        manifest = convert("af_ppg_ecg", str(src), str(tmp_path / "out"))
        assert manifest.emitted_patients == []
        assert manifest.skipped_records[0]["record"] == "bad.mat"
