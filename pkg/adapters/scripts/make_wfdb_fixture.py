"""Regenerate the bundled synthetic WFDB fixture (deterministic, no RNG).

60 seconds of ECG-like signal at 250 Hz with beats exactly every 0.8 s
(75 bpm, an exact 200 samples), beat annotations on every spike, and a rhythm change to AFIB at
30 s so converters have one labeled AF interval to map.

Usage: python3 adapters/scripts/make_wfdb_fixture.py [out_dir]
"""
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))
from pulsewatch_adapters import wfdb_min  # noqa: E402

FS = 250.0
DURATION_S = 60.0
BEAT_PERIOD_S = 0.8  # 75 bpm, integer sample count at 250 Hz
RECORD = "synthetic01"


def build_signal() -> tuple[np.ndarray, list[int]]:
    n = int(DURATION_S * FS)
    t = np.arange(n) / FS
    sig = 0.05 * np.sin(2 * np.pi * 0.25 * t)
    beat_samples = []
    beat = 0.4
    while beat < DURATION_S:
        c = int(round(beat * FS))
        beat_samples.append(c)
        lo, hi = max(0, c - 15), min(n, c + 16)
        tt = t[lo:hi] - beat
        sig[lo:hi] += 1.2 * np.exp(-0.5 * (tt / 0.012) ** 2)
        beat += BEAT_PERIOD_S
    return sig, beat_samples


def main() -> None:
    out_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
        os.path.dirname(__file__), "..", "tests", "fixtures"
    )
    sig, beat_samples = build_signal()
    wfdb_min.write_record(out_dir, RECORD, sig, FS, gain=200.0)
    annotations = [
        wfdb_min.Annotation(sample=0, code=wfdb_min.CODE_RHYTHM, aux="(N"),
        wfdb_min.Annotation(
            sample=int(30.0 * FS), code=wfdb_min.CODE_RHYTHM, aux="(AFIB"
        ),
    ]
    annotations += [
        wfdb_min.Annotation(sample=s, code=wfdb_min.CODE_NORMAL_BEAT)
        for s in beat_samples
    ]
    annotations.sort(key=lambda a: (a.sample, a.code != wfdb_min.CODE_RHYTHM))
    wfdb_min.write_annotations(os.path.join(out_dir, f"{RECORD}.atr"), annotations)
    print(f"wrote {RECORD}.hea/.dat/.atr under {out_dir} "
          f"({len(beat_samples)} beats, AFIB from 30s)")


if __name__ == "__main__":
    main()
