"""End-to-end demo: script a stream, monitor it, score the alerts.

Usage: python3 scripts/demo_end_to_end.py [--out DIR] [--judge]
"""
import argparse
import json
import tempfile

from pulsewatch.engine import MonitorEngine, RuleConfig
from pulsewatch.evaluate import EpisodeAnnotation, eval_proactive
from pulsewatch.judge import MockJudgeBackend
from pulsewatch.streams import ScriptSegment, StreamScript, segment_stream, synthesize_stream

SCRIPT = StreamScript(
    total_duration_s=7200.0,
    base_hr_bpm=70.0,
    segments=[
        ScriptSegment(1000.0, 1120.0, "tachycardia", 160.0),
        ScriptSegment(2500.0, 2620.0, "bradycardia", 35.0),
        ScriptSegment(4000.0, 4900.0, "tachycardia", 110.0),
        ScriptSegment(5400.0, 6600.0, "af_like", 0.35),
    ],
    noise_seed=42,
)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=None, help="where to persist the memory")
    parser.add_argument("--judge", action="store_true", help="enable the offline judge")
    args = parser.parse_args()

    samples, annotations = synthesize_stream(SCRIPT, fs=100.0)
    windows, _ = segment_stream(samples, fs=100.0, patient_id="demo-001")
    engine = MonitorEngine(
        RuleConfig(), judge_backend=MockJudgeBackend() if args.judge else None
    )
    memory, alerts = engine.replay(windows)

    print(f"windows processed : {len(memory.states)}")
    print(f"alerts emitted    : {len(alerts)}")
    for a in alerts:
        print(f"  t={a.time_s:7.0f}s  {a.fired_rule:<22s} urgency={a.urgency}")

    episodes = [EpisodeAnnotation.from_dict(a) for a in annotations]
    report = eval_proactive(alerts, episodes, monitored_hours=SCRIPT.total_duration_s / 3600.0)
    print(json.dumps({k: report[k] for k in (
        "far_per_hour", "latency_median_s", "matched_episodes", "missed_episodes",
    )}, indent=2))

    out = args.out or tempfile.mkdtemp(prefix="pulsewatch-demo-")
    memory.persist(out)
    print(f"memory persisted under {out}")


if __name__ == "__main__":
    main()
