"""Generate a synthetic QA benchmark, answer it offline, and score it.

Pipeline: scripted stream -> monitor replay -> template QA generation ->
deterministic dev/test split -> offline agent answers -> accuracy report.

Usage: python3 scripts/build_qa_benchmark.py --out DIR [--n-per-cell 10]
"""
import argparse
import json
import os

from pulsewatch.agent import Query, WindowLocator, run_query
from pulsewatch.engine import MonitorEngine, RuleConfig
from pulsewatch.evaluate import (
    VISIBLE_CELLS,
    generate_synthetic_qa,
    score_qa,
    split_dev_test,
    write_qa_jsonl,
)
from pulsewatch.streams import ScriptSegment, StreamScript, segment_stream, synthesize_stream, write_windows_jsonl
from pulsewatch.tools import ToolContext, build_registry

SCRIPT = StreamScript(
    total_duration_s=7200.0,
    base_hr_bpm=70.0,
    segments=[
        ScriptSegment(1200.0, 1320.0, "tachycardia", 160.0),
        ScriptSegment(3000.0, 3900.0, "tachycardia", 110.0),
        ScriptSegment(5000.0, 5120.0, "bradycardia", 35.0),
    ],
    noise_seed=7,
)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--n-per-cell", type=int, default=10)
    args = parser.parse_args()

    pdir = os.path.join(args.out, "data", "synth-001")
    os.makedirs(pdir, exist_ok=True)
    samples, _ = synthesize_stream(SCRIPT, fs=100.0)
    windows, _ = segment_stream(samples, fs=100.0, patient_id="synth-001")
    write_windows_jsonl(windows, os.path.join(pdir, "windows.jsonl"))
    memory, _ = MonitorEngine(RuleConfig()).replay(windows)
    memory.persist(pdir)

    examples, skipped = generate_synthetic_qa(memory.states, args.n_per_cell, VISIBLE_CELLS)
    qa_path = os.path.join(args.out, "qa.jsonl")
    write_qa_jsonl(examples, qa_path)
    print(f"examples generated : {len(examples)} (skipped cells: {len(skipped)})")

    dev, test = split_dev_test(examples, dev_frac=0.30)
    print(f"dev/test split     : {len(dev)}/{len(test)}")

    context = ToolContext(data_dir=os.path.join(args.out, "data"), fair=True)
    registry = build_registry()
    predictions = {}
    for ex in examples:
        result = run_query(
            Query(ex.question, WindowLocator.from_dict(ex.locator),
                  tier=ex.tier, qtype=ex.qtype, options=ex.options, target=ex.target),
            registry, context,
        )
        predictions[ex.id] = result.answer
    with open(os.path.join(args.out, "predictions.jsonl"), "w", encoding="utf-8") as fh:
        for qid, answer in predictions.items():
            fh.write(json.dumps({"id": qid, "answer": answer}) + "\n")

    report = score_qa(examples, predictions)
    print(json.dumps(report, indent=2))
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)


if __name__ == "__main__":
    main()
