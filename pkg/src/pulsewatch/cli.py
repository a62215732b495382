"""Operator command line: synth / monitor / qa / eval / tools / split.

Every command is reproducible offline: identical config and inputs give
byte-identical outputs. Failures exit nonzero with a machine-readable error
object on stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .agent import HttpCompletionBackend, Query, WindowLocator, run_query
from .config import RunConfig
from .engine import MonitorEngine
from .errors import PulsewatchError
from .evaluate import (
    EpisodeAnnotation,
    eval_proactive,
    read_qa_jsonl,
    score_qa,
    split_dev_test,
)
from .judge import GuidelineStore, HttpJudgeBackend, MockJudgeBackend
from .memory import AlertRecord, PatientMemory, leakage_filter
from .streams import (
    StreamScript,
    read_annotations_jsonl,
    read_windows_jsonl,
    segment_stream,
    synthesize_stream,
    write_annotations_jsonl,
    write_windows_jsonl,
)
from .tools import ToolContext, build_registry


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "offline", False):
        cfg.backend = "offline"
    if getattr(args, "judge", None) is not None:
        cfg.judge = args.judge == "on"
    if getattr(args, "fair", False):
        cfg.fair = True
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def cmd_synth(args) -> int:
    with open(args.script, "r", encoding="utf-8") as fh:
        script = StreamScript.from_dict(json.load(fh))
    samples, annotations = synthesize_stream(script, fs=args.fs, modality=args.modality)
    windows, discarded = segment_stream(
        samples,
        fs=args.fs,
        window_len_s=args.window_len,
        patient_id=args.patient,
        dataset="synthetic",
        modality=args.modality,
    )
    os.makedirs(args.out, exist_ok=True)
    n = write_windows_jsonl(windows, os.path.join(args.out, "windows.jsonl"))
    write_annotations_jsonl(annotations, os.path.join(args.out, "annotations.jsonl"))
    print(json.dumps({
        "windows": n,
        "discarded_samples": discarded,
        "episodes": len(annotations),
        "out": args.out,
    }))
    return 0


def cmd_monitor(args) -> int:
    cfg = _load_config(args)
    windows, warnings = read_windows_jsonl(args.windows, strict=False)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    judge_backend = None
    if cfg.judge:
        judge_backend = (
            MockJudgeBackend() if cfg.backend == "offline" else HttpJudgeBackend()
        )
    guidelines = (
        GuidelineStore.load(cfg.guideline_path)
        if cfg.guideline_path
        else GuidelineStore.bundled()
    )
    engine = MonitorEngine(
        rule_config=cfg.rules,
        screen_config=cfg.screen,
        judge_backend=judge_backend,
        guidelines=guidelines,
    )
    memory, alerts = engine.replay(windows)
    os.makedirs(args.out, exist_ok=True)
    memory.persist(args.out, fair=cfg.fair)
    with open(os.path.join(args.out, "run_config.json"), "w", encoding="utf-8") as fh:
        json.dump({"version": __version__, "config": cfg.to_dict()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps({
        "windows": len(windows),
        "ingest_warnings": len(warnings),
        "alerts": len(alerts),
        "judge_diagnostics": len(engine.report.judge_diagnostics),
        "out": args.out,
    }))
    return 0


def cmd_qa(args) -> int:
    cfg = _load_config(args)
    context = ToolContext(
        data_dir=args.data,
        fair=True,
        rule_config=cfg.rules,
        screen_config=cfg.screen,
    )
    registry = build_registry()
    backend = None if cfg.backend == "offline" else HttpCompletionBackend()

    if args.qa:
        examples = read_qa_jsonl(args.qa)
        queries = [
            (
                ex.id,
                Query(
                    text=ex.question,
                    locator=WindowLocator.from_dict(ex.locator),
                    tier=ex.tier,
                    qtype=ex.qtype,
                    options=ex.options,
                    target=ex.target,
                ),
            )
            for ex in examples
        ]
    elif args.question:
        locator = None
        if args.dataset and args.patient:
            locator = WindowLocator(
                dataset=args.dataset,
                patient_id=args.patient,
                window_start_s=args.start,
                window_end_s=args.end,
            )
        queries = [("q-0", Query(text=args.question, locator=locator))]
    else:
        raise PulsewatchError("either --qa or --question is required")

    rows = []
    for qid, query in queries:
        result = run_query(
            query, registry, context,
            planner_backend=backend, responder_backend=backend,
        )
        rows.append({"id": qid, "answer": result.answer})
    out = args.out or "-"
    payload = "".join(json.dumps(r) + "\n" for r in rows)
    if out == "-":
        sys.stdout.write(payload)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(payload)
        print(json.dumps({"predictions": len(rows), "out": out}))
    return 0


def _read_alerts(path) -> list[AlertRecord]:
    alerts = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                alerts.append(AlertRecord.from_dict(json.loads(line)))
    return alerts


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    if args.qa and args.pred:
        examples = read_qa_jsonl(args.qa)
        predictions: dict[str, str] = {}
        with open(args.pred, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    predictions[str(row["id"])] = str(row["answer"])
        report = score_qa(examples, predictions, cfg.qa_tolerance)
    elif args.alerts and args.episodes:
        alerts = _read_alerts(args.alerts)
        episodes = [
            EpisodeAnnotation.from_dict(d) for d in read_annotations_jsonl(args.episodes)
        ]
        if args.hours is None:
            raise PulsewatchError("--hours is required for proactive evaluation")
        report = eval_proactive(alerts, episodes, args.hours)
    else:
        raise PulsewatchError("need either --qa with --pred, or --alerts with --episodes")
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_tools(args) -> int:
    registry = build_registry()
    print(json.dumps(registry.schema_export(planner_only=args.planner_only), indent=2))
    return 0


def cmd_split(args) -> int:
    examples = read_qa_jsonl(args.qa)
    dev, test = split_dev_test(examples, dev_frac=args.dev_frac, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    for name, part in (("dev_ids.txt", dev), ("test_ids.txt", test)):
        with open(os.path.join(args.out, name), "w", encoding="utf-8") as fh:
            for ex in part:
                fh.write(ex.id + "\n")
    print(json.dumps({"dev": len(dev), "test": len(test), "out": args.out}))
    return 0


def cmd_export(args) -> int:
    memory = PatientMemory.load(args.memory)
    if args.fair:
        memory.states = [leakage_filter(s) for s in memory.states]
    memory.persist(args.out, fair=args.fair)
    print(json.dumps({"states": len(memory.states), "alerts": len(memory.alerts), "out": args.out}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pulsewatch", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="render a scripted synthetic stream to window JSONL")
    sp.add_argument("script", help="stream script JSON file")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--fs", type=float, default=100.0)
    sp.add_argument("--window-len", type=float, default=10.0)
    sp.add_argument("--patient", default="synth-001")
    sp.add_argument("--modality", default="ECG", choices=["ECG", "PPG"])
    sp.set_defaults(func=cmd_synth)

    mp = sub.add_parser("monitor", help="replay windows through the proactive engine")
    mp.add_argument("windows", help="canonical window JSONL file")
    mp.add_argument("--out", required=True)
    mp.add_argument("--config")
    mp.add_argument("--offline", action="store_true")
    mp.add_argument("--judge", choices=["on", "off"], default=None)
    mp.add_argument("--fair", action="store_true")
    mp.add_argument("--seed", type=int)
    mp.set_defaults(func=cmd_monitor)

    qp = sub.add_parser("qa", help="answer questions with the tool agent")
    qp.add_argument("--qa", help="QA example JSONL file")
    qp.add_argument("--question", help="one ad-hoc question")
    qp.add_argument("--dataset")
    qp.add_argument("--patient")
    qp.add_argument("--start", type=float, default=0.0)
    qp.add_argument("--end", type=float, default=0.0)
    qp.add_argument("--data", required=True, help="data directory (per-patient subdirs)")
    qp.add_argument("--out")
    qp.add_argument("--config")
    qp.add_argument("--offline", action="store_true")
    qp.set_defaults(func=cmd_qa)

    ep = sub.add_parser("eval", help="score predictions or alert logs")
    ep.add_argument("--qa")
    ep.add_argument("--pred")
    ep.add_argument("--alerts")
    ep.add_argument("--episodes")
    ep.add_argument("--hours", type=float)
    ep.add_argument("--out")
    ep.add_argument("--config")
    ep.set_defaults(func=cmd_eval)

    tp = sub.add_parser("tools", help="print the tool registry schema")
    tp.add_argument("--planner-only", action="store_true")
    tp.set_defaults(func=cmd_tools)

    kp = sub.add_parser("split", help="deterministic dev/test split of a QA file")
    kp.add_argument("qa")
    kp.add_argument("--dev-frac", type=float, default=0.30)
    kp.add_argument("--seed", default="dev_test_split_v3")
    kp.add_argument("--out", required=True)
    kp.set_defaults(func=cmd_split)

    xp = sub.add_parser("export", help="re-export a persisted memory (optionally fair)")
    xp.add_argument("memory", help="directory holding states.jsonl and alerts.jsonl")
    xp.add_argument("--out", required=True)
    xp.add_argument("--fair", action="store_true")
    xp.set_defaults(func=cmd_export)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PulsewatchError as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}),
              file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(json.dumps({"error": {"type": "FileNotFoundError", "message": str(exc)}}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
