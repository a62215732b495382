"""Scoring for reactive QA and proactive alerting, plus the dev/test split
and the deterministic synthetic QA generator."""
from __future__ import annotations

import hashlib
import json
import math
import re
import statistics
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import ConfigError, SchemaError
from .memory import AlertRecord, MonitoringState
from .targets import (
    BURDEN_OPTIONS,
    HR_CATEGORY_OPTIONS,
    burden_bucket,
    format_number,
    hr_category,
    yes_no,
)

QA_TYPES = ("single_verify", "single_choose", "single_query")


@dataclass
class QAExample:
    id: str
    dataset: str
    tier: str
    qtype: str
    question: str
    answer: str
    target: str
    locator: dict
    options: list[str] | None = None

    def validate(self) -> None:
        if self.tier not in ("A", "B"):
            raise SchemaError(f"unknown tier {self.tier!r}")
        if self.qtype not in QA_TYPES:
            raise SchemaError(f"unknown qtype {self.qtype!r}")
        if self.qtype == "single_choose":
            if not self.options:
                raise SchemaError("single_choose examples need options")
            if self.answer not in self.options:
                raise SchemaError("choose answer must be one of the options")
        if self.qtype == "single_verify" and self.answer not in ("yes", "no"):
            raise SchemaError("verify answers must be yes or no")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "dataset": self.dataset,
            "tier": self.tier,
            "qtype": self.qtype,
            "question": self.question,
            "options": self.options,
            "answer": self.answer,
            "target": self.target,
            "locator": self.locator,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QAExample":
        try:
            ex = cls(
                id=str(d["id"]),
                dataset=str(d["dataset"]),
                tier=str(d["tier"]),
                qtype=str(d["qtype"]),
                question=str(d["question"]),
                answer=str(d["answer"]),
                target=str(d["target"]),
                locator=dict(d["locator"]),
                options=list(d["options"]) if d.get("options") else None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad QA example: {exc}") from exc
        ex.validate()
        return ex


def write_qa_jsonl(examples: Iterable[QAExample], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_dict()) + "\n")
            n += 1
    return n


def read_qa_jsonl(path) -> list[QAExample]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(QAExample.from_dict(json.loads(line)))
            except (json.JSONDecodeError, SchemaError) as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# Reactive QA scoring


@dataclass(frozen=True)
class NumericTolerance:
    abs_tol: float = 2.0
    rel_tol: float = 0.05

    def matches(self, predicted: float, gold: float) -> bool:
        return abs(predicted - gold) <= max(self.abs_tol, self.rel_tol * abs(gold))


_NUMBER_RE = re.compile(r"[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?")


def parse_number(text: str) -> float | None:
    m = _NUMBER_RE.search(text)
    return float(m.group()) if m else None


def _norm(text: str) -> str:
    return " ".join(text.strip().casefold().split())


def score_example(
    example: QAExample, prediction: str, tolerance: NumericTolerance
) -> bool:
    """Correctness of one prediction; parse failures score incorrect."""
    if example.qtype == "single_verify":
        return _norm(prediction) == _norm(example.answer)
    if example.qtype == "single_choose":
        return _norm(prediction) == _norm(example.answer)
    # single_query: numeric when the gold parses as a number, else label match
    try:
        gold_num = float(example.answer)
    except ValueError:
        gold_num = None
    if gold_num is not None:
        pred_num = parse_number(prediction)
        return pred_num is not None and tolerance.matches(pred_num, gold_num)
    return _norm(prediction) == _norm(example.answer)


def score_qa(
    examples: Sequence[QAExample],
    predictions: dict[str, str],
    tolerance: NumericTolerance = NumericTolerance(),
) -> dict:
    """Accuracy overall and per (tier, qtype); requires one prediction per id."""
    example_ids = [ex.id for ex in examples]
    if len(set(example_ids)) != len(example_ids):
        raise SchemaError("duplicate example ids")
    missing = [i for i in example_ids if i not in predictions]
    extra = [i for i in predictions if i not in set(example_ids)]
    if missing or extra:
        raise SchemaError(
            f"prediction ids do not match examples (missing {len(missing)}, extra {len(extra)})"
        )
    cells: dict[str, dict] = {}
    correct_total = 0
    for ex in examples:
        ok = score_example(ex, predictions[ex.id], tolerance)
        correct_total += ok
        key = f"{ex.tier}/{ex.qtype}"
        cell = cells.setdefault(key, {"n": 0, "correct": 0})
        cell["n"] += 1
        cell["correct"] += ok
    for cell in cells.values():
        cell["accuracy"] = cell["correct"] / cell["n"]
    return {
        "overall_accuracy": correct_total / len(examples) if examples else None,
        "n_examples": len(examples),
        "by_cell": dict(sorted(cells.items())),
        "config": {"abs_tol": tolerance.abs_tol, "rel_tol": tolerance.rel_tol},
    }


# ---------------------------------------------------------------------------
# Deterministic dev/test split


def split_dev_test(
    examples: Sequence[QAExample],
    dev_frac: float = 0.30,
    seed: str = "dev_test_split_v3",
) -> tuple[list[QAExample], list[QAExample]]:
    """Stratified deterministic split on (dataset, tier).

    Within each stratum ids are ordered by the SHA-256 hash of seed||id; the
    test side takes ceil((1 - dev_frac) * n), the development side the rest.
    The result is invariant to input order.
    """
    ids = [ex.id for ex in examples]
    if len(set(ids)) != len(ids):
        raise SchemaError("duplicate example ids")
    frac = Fraction(str(dev_frac))
    if not 0 <= frac <= 1:
        raise ConfigError("dev_frac must be within [0, 1]")
    strata: dict[tuple[str, str], list[QAExample]] = {}
    for ex in examples:
        strata.setdefault((ex.dataset, ex.tier), []).append(ex)

    dev: list[QAExample] = []
    test: list[QAExample] = []
    for key in sorted(strata):
        members = strata[key]
        ordered = sorted(
            members,
            key=lambda ex: hashlib.sha256(f"{seed}{ex.id}".encode()).hexdigest(),
        )
        n = len(ordered)
        n_test = math.ceil((1 - frac) * Fraction(n))
        n_dev = n - n_test
        dev.extend(ordered[:n_dev])
        test.extend(ordered[n_dev:])
    return dev, test


# ---------------------------------------------------------------------------
# Proactive evaluation


@dataclass
class EpisodeAnnotation:
    onset_s: float
    offset_s: float
    label: str
    patient_id: str | None = None

    def validate(self) -> None:
        if not self.onset_s < self.offset_s:
            raise SchemaError("episode onset must precede offset")

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeAnnotation":
        ep = cls(
            onset_s=float(d.get("onset_s", d.get("start_s"))),
            offset_s=float(d.get("offset_s", d.get("end_s"))),
            label=str(d["label"]),
            patient_id=d.get("patient_id"),
        )
        ep.validate()
        return ep


def _episode_matches(ep: EpisodeAnnotation, alert: AlertRecord, grace_s: float) -> bool:
    if ep.patient_id is not None and ep.patient_id != alert.patient_id:
        return False
    return ep.onset_s <= alert.time_s <= ep.offset_s + grace_s


def eval_proactive(
    alerts: Sequence[AlertRecord],
    episodes: Sequence[EpisodeAnnotation],
    monitored_hours: float,
    grace_s: float = 0.0,
) -> dict:
    """FAR per monitored hour plus per-episode first-alert latencies.

    An alert matches an episode when its time falls inside
    [onset, offset + grace_s] (same patient when both carry one); unmatched
    alerts are false, unmatched episodes are misses. The default grace is 0.
    """
    if monitored_hours <= 0:
        raise ConfigError("monitored_hours must be > 0")
    for ep in episodes:
        ep.validate()
    by_patient: dict[str | None, list[EpisodeAnnotation]] = {}
    for ep in episodes:
        by_patient.setdefault(ep.patient_id, []).append(ep)
    for members in by_patient.values():
        ordered = sorted(members, key=lambda e: e.onset_s)
        for a, b in zip(ordered, ordered[1:]):
            if b.onset_s < a.offset_s:
                raise SchemaError(
                    f"episodes overlap for one patient: [{a.onset_s}, {a.offset_s}] "
                    f"and [{b.onset_s}, {b.offset_s}]"
                )
    matched_alert_idx: set[int] = set()
    latencies: list[float] = []
    per_episode: list[dict] = []
    for ep in episodes:
        hits = [
            (i, a) for i, a in enumerate(alerts) if _episode_matches(ep, a, grace_s)
        ]
        for i, _ in hits:
            matched_alert_idx.add(i)
        if hits:
            first_time = min(a.time_s for _, a in hits)
            latency = first_time - ep.onset_s
            latencies.append(latency)
            per_episode.append(
                {"label": ep.label, "onset_s": ep.onset_s, "matched": True, "latency_s": latency}
            )
        else:
            per_episode.append(
                {"label": ep.label, "onset_s": ep.onset_s, "matched": False, "latency_s": None}
            )
    false_alerts = len(alerts) - len(matched_alert_idx)
    return {
        "far_per_hour": false_alerts / monitored_hours,
        "latency_median_s": statistics.median(latencies) if latencies else None,
        "latencies_s": latencies,
        "episodes": per_episode,
        "matched_episodes": len(latencies),
        "missed_episodes": len(episodes) - len(latencies),
        "false_alerts": false_alerts,
        "matched_alerts": len(matched_alert_idx),
        "total_alerts": len(alerts),
        "monitored_hours": monitored_hours,
        "config": {"match_grace_s": grace_s},
    }


def eval_rhythm(predicted: Sequence[str], truth: Sequence[str]) -> dict:
    """Confusion statistics with AF as the positive class.

    Rates whose denominator is empty come back absent (None), as does the
    balanced accuracy built on them.
    """
    if len(predicted) != len(truth):
        raise SchemaError("prediction/label lengths differ")
    tp = fp = tn = fn = 0
    for p, t in zip(predicted, truth):
        pos_p, pos_t = p == "AF", t == "AF"
        if pos_t and pos_p:
            tp += 1
        elif pos_t:
            fn += 1
        elif pos_p:
            fp += 1
        else:
            tn += 1
    sens = tp / (tp + fn) if (tp + fn) else None
    spec = tn / (tn + fp) if (tn + fp) else None
    balanced = (sens + spec) / 2 if sens is not None and spec is not None else None
    return {
        "sensitivity": sens,
        "specificity": spec,
        "balanced_accuracy": balanced,
        "confusion": {"tp": tp, "fp": fp, "tn": tn, "fn": fn},
    }


# ---------------------------------------------------------------------------
# Synthetic QA generation (fixed templates, no paraphrasing)


VISIBLE_CELLS = (
    ("A", "single_query", "hr_bpm"),
    ("A", "single_verify", "hr_above_100"),
    ("A", "single_choose", "hr_category"),
    ("B", "single_query", "max_hr_bpm"),
    ("B", "single_query", "mean_hr_bpm"),
    ("B", "single_verify", "max_hr_above_140"),
    ("B", "single_choose", "tachy_burden_category"),
)
HIDDEN_CELLS = (
    ("A", "single_verify", "af_presence"),
    ("B", "single_choose", "af_burden_category"),
)
DEFAULT_CELLS = VISIBLE_CELLS + HIDDEN_CELLS

_QUESTIONS = {
    "hr_bpm": "What is my heart rate right now?",
    "hr_above_100": "Is my heart rate above 100 bpm right now?",
    "hr_category": "How would you describe my current heart rate: low, normal, or elevated?",
    "af_presence": "Does my recording show an irregular rhythm pattern right now?",
    "max_hr_bpm": "What was my maximum heart rate over this monitoring period?",
    "mean_hr_bpm": "What was my average heart rate over this monitoring period?",
    "max_hr_above_140": "Did my heart rate go above 140 bpm at any point in this period?",
    "tachy_burden_category": (
        "How often was my heart rate elevated in this period: "
        "not at all, occasionally, often, or most of the time?"
    ),
    "af_burden_category": (
        "How often did this period show an irregular rhythm: "
        "not at all, occasionally, often, or most of the time?"
    ),
}


def _tier_a_answer(target: str, state: MonitoringState) -> str | None:
    hr = state.hr_bpm
    if target == "hr_bpm":
        return format_number(hr) if hr is not None else None
    if target == "hr_above_100":
        return yes_no(hr > 100.0) if hr is not None else None
    if target == "hr_category":
        return hr_category(hr) if hr is not None else None
    if target == "af_presence":
        if state.rhythm_class is None:
            return None
        return yes_no(state.rhythm_class == "AF")
    return None


def _tier_b_answer(target: str, chunk: list[MonitoringState]) -> str | None:
    hrs = [s.hr_bpm for s in chunk if s.hr_bpm is not None]
    if target in ("max_hr_bpm", "mean_hr_bpm", "max_hr_above_140", "tachy_burden_category"):
        if not hrs:
            return None
        if target == "max_hr_bpm":
            return format_number(max(hrs))
        if target == "mean_hr_bpm":
            return format_number(sum(hrs) / len(hrs))
        if target == "max_hr_above_140":
            return yes_no(max(hrs) > 140.0)
        return burden_bucket(sum(1 for v in hrs if v > 100.0) / len(hrs))
    if target == "af_burden_category":
        labeled = [s.rhythm_class for s in chunk if s.rhythm_class is not None]
        if not labeled:
            return None
        return burden_bucket(sum(1 for c in labeled if c == "AF") / len(labeled))
    return None


def _options_for(target: str) -> list[str] | None:
    if target == "hr_category":
        return list(HR_CATEGORY_OPTIONS)
    if target in ("tachy_burden_category", "af_burden_category"):
        return list(BURDEN_OPTIONS)
    return None


def generate_synthetic_qa(
    states: Sequence[MonitoringState],
    n_per_cell: int = 5,
    cells: Sequence[tuple[str, str, str]] = VISIBLE_CELLS,
) -> tuple[list[QAExample], list[dict]]:
    """Instantiate fixed question templates against a monitoring state log.

    Tier A cells sample individual windows; Tier B cells aggregate over
    consecutive chunks of the log, with answers derived by exactly the rules
    the deterministic responder uses. Cells whose target fields are absent
    everywhere are skipped with a report entry.
    """
    if not states:
        return [], [{"cell": "*", "reason": "no states"}]
    dataset = states[0].dataset
    examples: list[QAExample] = []
    skipped: list[dict] = []
    for tier, qtype, target in cells:
        made = 0
        if tier == "A":
            usable = [
                s for s in states if _tier_a_answer(target, s) is not None
            ]
            if not usable:
                skipped.append({"cell": f"A/{qtype}/{target}", "reason": "target absent in states"})
                continue
            stride = max(1, len(usable) // n_per_cell)
            for k in range(min(n_per_cell, len(usable))):
                s = usable[min(k * stride, len(usable) - 1)]
                answer = _tier_a_answer(target, s)
                examples.append(
                    QAExample(
                        id=f"qa-{dataset}-A-{qtype}-{target}-{k:04d}",
                        dataset=dataset,
                        tier="A",
                        qtype=qtype,
                        question=_QUESTIONS[target],
                        options=_options_for(target),
                        answer=answer,
                        target=target,
                        locator={
                            "dataset": dataset,
                            "patient_id": s.patient_id,
                            "window_start_s": s.window_start_s,
                            "window_end_s": s.window_end_s,
                        },
                    )
                )
                made += 1
        else:
            chunk_len = len(states) // n_per_cell
            if chunk_len < 3:
                chunk_len = max(3, len(states))
            chunks = [
                list(states[i : i + chunk_len])
                for i in range(0, len(states) - chunk_len + 1, chunk_len)
            ][:n_per_cell]
            for k, chunk in enumerate(chunks):
                answer = _tier_b_answer(target, chunk)
                if answer is None:
                    continue
                examples.append(
                    QAExample(
                        id=f"qa-{dataset}-B-{qtype}-{target}-{k:04d}",
                        dataset=dataset,
                        tier="B",
                        qtype=qtype,
                        question=_QUESTIONS[target],
                        options=_options_for(target),
                        answer=answer,
                        target=target,
                        locator={
                            "dataset": dataset,
                            "patient_id": chunk[0].patient_id,
                            "window_start_s": chunk[0].window_start_s,
                            "window_end_s": chunk[-1].window_end_s,
                        },
                    )
                )
                made += 1
            if made == 0:
                skipped.append({"cell": f"B/{qtype}/{target}", "reason": "target absent in states"})
        if made:
            for ex in examples[-made:]:
                ex.validate()
    return examples, skipped
