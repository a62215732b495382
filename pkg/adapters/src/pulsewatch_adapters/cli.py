"""Converter command line: `pulsewatch-convert <dataset> <src> <out> [...]`.

Runs only on locally supplied copies of the source datasets; nothing is
bundled or downloaded.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import af_ppg, icentia, wrist

DATASETS = ("icentia11k", "af_ppg_ecg", "ppg_dalia", "wesad")


def convert(dataset: str, source_dir: str, out_dir: str,
            qa_window_s: float | None = None, proactive_windows: bool = False):
    if dataset == "icentia11k":
        kwargs = {} if qa_window_s is None else {"qa_window_s": qa_window_s}
        return icentia.convert(source_dir, out_dir,
                               proactive_windows=proactive_windows, **kwargs)
    if dataset == "af_ppg_ecg":
        kwargs = {} if qa_window_s is None else {"qa_window_s": qa_window_s}
        return af_ppg.convert(source_dir, out_dir,
                              proactive_windows=proactive_windows, **kwargs)
    if dataset in ("ppg_dalia", "wesad"):
        kwargs = {} if qa_window_s is None else {"qa_window_s": qa_window_s}
        return wrist.convert(dataset, source_dir, out_dir,
                             proactive_windows=proactive_windows, **kwargs)
    raise ValueError(f"unknown dataset {dataset!r}")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="pulsewatch-convert", description=__doc__)
    parser.add_argument("dataset", choices=DATASETS)
    parser.add_argument("source_dir")
    parser.add_argument("out_dir")
    parser.add_argument("--proactive-windows", action="store_true",
                        help="also emit 10-second windows for the cardiac datasets")
    parser.add_argument("--qa-window-s", type=float, default=None,
                        help="override the dataset's default window length")
    args = parser.parse_args(argv)
    try:
        manifest = convert(
            args.dataset, args.source_dir, args.out_dir,
            qa_window_s=args.qa_window_s,
            proactive_windows=args.proactive_windows,
        )
    except (FileNotFoundError, ValueError, OSError) as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}),
              file=sys.stderr)
        return 2
    print(json.dumps({
        "dataset": manifest.dataset,
        "patients": manifest.emitted_patients,
        "windows": manifest.windows_per_patient,
        "proactive_windows": manifest.proactive_windows_per_patient,
        "skipped": len(manifest.skipped_records),
    }))
    return 0


if __name__ == "__main__":
    sys.exit(main())
