"""Tune the rhythm-screen thresholds on a synthetic development split.

Builds labeled 5-minute windows (regular vs irregular), grid-searches the
screen thresholds for balanced accuracy, reports the held-out confusion, and
writes the tuned config as JSON.

Usage: python3 scripts/tune_screen_thresholds.py [--out screen.json]
"""
import argparse
import json

from pulsewatch.beats import derive_rr, detect_peaks
from pulsewatch.evaluate import eval_rhythm
from pulsewatch.features import WindowFeatures, signal_quality
from pulsewatch.rhythm import classify_rhythm, tune_thresholds
from pulsewatch.streams import ScriptSegment, StreamScript, segment_stream, synthesize_stream


def labeled_windows(kind: str, label: str, n: int, seed0: int):
    out = []
    for k in range(n):
        segments = [] if kind == "normal" else [ScriptSegment(0.0, 300.0, kind, 0.35)]
        script = StreamScript(
            total_duration_s=300.0, base_hr_bpm=70.0,
            segments=segments, noise_seed=seed0 + k,
        )
        samples, _ = synthesize_stream(script, fs=100.0)
        window = segment_stream(samples, fs=100.0, window_len_s=300.0)[0][0]
        peaks = detect_peaks(window).peak_times_s
        rr, _ = derive_rr(peaks)
        raw = [b - a for a, b in zip(peaks, peaks[1:])]
        feats = WindowFeatures.from_rr(rr, quality=signal_quality(window, raw))
        out.append((feats, label))
    return out


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="screen_tuned.json")
    parser.add_argument("--n-per-class", type=int, default=24)
    args = parser.parse_args()

    dev = labeled_windows("normal", "N", args.n_per_class, seed0=100)
    dev += labeled_windows("af_like", "AF", args.n_per_class, seed0=900)
    result = tune_thresholds(dev)
    print(f"grid points evaluated : {result.grid_evaluated}")
    print(f"dev balanced accuracy : {result.balanced_accuracy:.3f}")
    print(json.dumps(result.config.to_dict(), indent=2))

    held = labeled_windows("normal", "N", 12, seed0=5000)
    held += labeled_windows("af_like", "AF", 12, seed0=7000)
    predicted = [classify_rhythm(f, result.config).rhythm_class for f, _ in held]
    truth = [label for _, label in held]
    print("held-out:", json.dumps(eval_rhythm(predicted, truth), indent=2))

    result.config.save(args.out)
    print(f"tuned config written to {args.out}")


if __name__ == "__main__":
    main()
