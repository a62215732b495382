"""Longitudinal per-patient monitoring memory.

Holds the ordered per-window state log, the alert log, a bounded raw-window
cache, and running trailing aggregates. States carry a visible block (always
exported) and a hidden annotation block (reference labels, exported only in
ground-truth files and stripped by the leakage filter).
"""
from __future__ import annotations

import json
import math
import os
from collections import deque
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

from .errors import OrderingError, ParseError, SchemaError
from .streams import SampleWindow

ALERT_RULES = (
    "extreme_bradycardia",
    "extreme_tachycardia",
    "sustained_tachycardia",
    "judge_intervention",
)
URGENCY_LEVELS = ("low", "medium", "high", "critical")

# Visible field names, in canonical serialization order.
VISIBLE_FIELDS = (
    # identity
    "state_id",
    "patient_id",
    "subject_id",
    "recording_id",
    "dataset",
    "modality",
    "window_index",
    "window_start_s",
    "window_end_s",
    "window_duration_s",
    "recording_duration_s",
    # signal-derived cardiac features
    "hr_bpm",
    "mean_hr_bpm",
    "max_hr_bpm",
    "previous_hr_bpm",
    "baseline_resting_hr",
    "hr_deviation_from_baseline",
    "sdnn_ms",
    "rmssd_ms",
    "signal_quality_score",
    "motion_level",
    # short-term aggregate
    "mean_hr_5min",
    "tachycardia_ratio_5min",
    # proactive alert context
    "alert_triggered",
    "alert_rule",
    "alert_reason",
    "urgency",
    # auxiliary containers
    "metadata",
    "dataset_specific",
)

# Annotation-derived fields excluded from every fair-evaluation export.
HIDDEN_FIELDS = (
    "rhythm_class",
    "stress_label",
    "protocol_label_id",
    "activity_label",
    "ecg_reference_hr_bpm",
    "sleep_stage",
    "sleep_epoch_duration_s",
    "is_sleep",
    "is_wake",
    "is_rem",
    "is_nrem",
    "cap_a_overlap",
    "cap_subtype",
    "body_position",
    "previous_rhythm_class",
    "previous_stress_label",
    "previous_protocol_label_id",
    "previous_activity_label",
    "previous_sleep_stage",
    "previous_body_position",
    "af_burden_ratio",
    "af_episode_duration_s",
    "rhythm_transition_count",
    "rhythm_transition_count_per_hour",
    "stress_burden_ratio",
    "stress_duration_s",
    "dominant_stress_label",
    "stress_transition_count",
    "stress_transition_count_per_hour",
    "cap_a_count_window",
    "cap_a_total_duration_s_window",
    "cap_a_count_5min",
    "cap_a_total_duration_s_5min",
)


@dataclass
class MonitoringState:
    """One per-window longitudinal record; absent numerics stay None (null)."""

    state_id: str
    patient_id: str
    dataset: str
    modality: str
    window_index: int
    window_start_s: float
    window_duration_s: float
    window_end_s: float | None = None
    subject_id: str | None = None
    recording_id: str | None = None
    recording_duration_s: float | None = None
    hr_bpm: float | None = None
    mean_hr_bpm: float | None = None
    max_hr_bpm: float | None = None
    previous_hr_bpm: float | None = None
    baseline_resting_hr: float | None = None
    hr_deviation_from_baseline: float | None = None
    sdnn_ms: float | None = None
    rmssd_ms: float | None = None
    signal_quality_score: float | None = None
    motion_level: str | None = None
    mean_hr_5min: float | None = None
    tachycardia_ratio_5min: float | None = None
    alert_triggered: bool = False
    alert_rule: str | None = None
    alert_reason: str | None = None
    urgency: str | None = None
    metadata: dict = field(default_factory=dict)
    dataset_specific: dict = field(default_factory=dict)
    # hidden annotation block (ground-truth files only)
    rhythm_class: str | None = None
    stress_label: str | None = None
    protocol_label_id: int | None = None
    activity_label: str | None = None
    ecg_reference_hr_bpm: float | None = None
    sleep_stage: str | None = None
    sleep_epoch_duration_s: float | None = None
    is_sleep: bool | None = None
    is_wake: bool | None = None
    is_rem: bool | None = None
    is_nrem: bool | None = None
    cap_a_overlap: bool | None = None
    cap_subtype: str | None = None
    body_position: str | None = None
    previous_rhythm_class: str | None = None
    previous_stress_label: str | None = None
    previous_protocol_label_id: int | None = None
    previous_activity_label: str | None = None
    previous_sleep_stage: str | None = None
    previous_body_position: str | None = None
    af_burden_ratio: float | None = None
    af_episode_duration_s: float | None = None
    rhythm_transition_count: int | None = None
    rhythm_transition_count_per_hour: float | None = None
    stress_burden_ratio: float | None = None
    stress_duration_s: float | None = None
    dominant_stress_label: str | None = None
    stress_transition_count: int | None = None
    stress_transition_count_per_hour: float | None = None
    cap_a_count_window: int | None = None
    cap_a_total_duration_s_window: float | None = None
    cap_a_count_5min: int | None = None
    cap_a_total_duration_s_5min: float | None = None

    def __post_init__(self):
        if self.window_end_s is None:
            self.window_end_s = self.window_start_s + self.window_duration_s

    def validate(self) -> None:
        if not math.isclose(
            self.window_end_s, self.window_start_s + self.window_duration_s, abs_tol=1e-6
        ):
            raise SchemaError("window_end_s != window_start_s + window_duration_s")
        if not self.alert_triggered and (
            self.alert_rule is not None or self.alert_reason is not None or self.urgency is not None
        ):
            raise SchemaError("alert fields must be absent when alert_triggered is false")
        if self.alert_rule is not None and self.alert_rule not in ALERT_RULES:
            raise SchemaError(f"unknown alert_rule {self.alert_rule!r}")
        if self.urgency is not None and self.urgency not in URGENCY_LEVELS:
            raise SchemaError(f"unknown urgency {self.urgency!r}")

    def has_hidden_values(self) -> bool:
        return any(getattr(self, name) is not None for name in HIDDEN_FIELDS)

    def to_dict(self, include_hidden: bool = True) -> dict:
        out = {name: getattr(self, name) for name in VISIBLE_FIELDS}
        out["metadata"] = _scrub_container(self.metadata) if not include_hidden else dict(self.metadata)
        out["dataset_specific"] = (
            _scrub_container(self.dataset_specific) if not include_hidden else dict(self.dataset_specific)
        )
        if include_hidden:
            for name in HIDDEN_FIELDS:
                out[name] = getattr(self, name)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "MonitoringState":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SchemaError(f"unknown state fields: {sorted(unknown)}")
        try:
            state = cls(**d)
        except TypeError as exc:
            raise SchemaError(f"bad state record: {exc}") from exc
        state.validate()
        return state


def _scrub_container(container: dict) -> dict:
    """Drop hidden-named keys from an auxiliary container, recursively."""
    hidden = set(HIDDEN_FIELDS)
    out = {}
    for k, v in container.items():
        if k in hidden:
            continue
        out[k] = _scrub_container(v) if isinstance(v, dict) else v
    return out


def leakage_filter(state: MonitoringState) -> MonitoringState:
    """Visible-only copy: every hidden field cleared, containers scrubbed.

    Idempotent; all visible fields are preserved as-is.
    """
    visible = {name: getattr(state, name) for name in VISIBLE_FIELDS}
    visible["metadata"] = _scrub_container(state.metadata)
    visible["dataset_specific"] = _scrub_container(state.dataset_specific)
    return MonitoringState(**visible)


@dataclass
class AlertRecord:
    """A triggered proactive alert."""

    patient_id: str
    window_index: int
    time_s: float
    fired_rule: str
    urgency: str
    reason: str = ""
    advice: str = ""
    cited_sections: list[dict] = field(default_factory=list)

    def validate(self) -> None:
        if self.fired_rule not in ALERT_RULES:
            raise SchemaError(f"unknown fired_rule {self.fired_rule!r}")
        if self.urgency not in URGENCY_LEVELS:
            raise SchemaError(f"unknown urgency {self.urgency!r}")
        for ref in self.cited_sections:
            if set(ref) != {"guideline_id", "section_id"}:
                raise SchemaError("cited_sections entries need guideline_id and section_id")

    def to_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "window_index": self.window_index,
            "time_s": self.time_s,
            "fired_rule": self.fired_rule,
            "urgency": self.urgency,
            "reason": self.reason,
            "advice": self.advice,
            "cited_sections": list(self.cited_sections),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AlertRecord":
        try:
            rec = cls(
                patient_id=str(d["patient_id"]),
                window_index=int(d["window_index"]),
                time_s=float(d["time_s"]),
                fired_rule=str(d["fired_rule"]),
                urgency=str(d["urgency"]),
                reason=str(d.get("reason", "")),
                advice=str(d.get("advice", "")),
                cited_sections=list(d.get("cited_sections", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad alert record: {exc}") from exc
        rec.validate()
        return rec


@dataclass
class TrailingView:
    mean_hr_5min: float | None
    tachycardia_ratio_5min: float | None
    tachycardia_sample_count: int


class PatientMemory:
    """Append-only per-patient log with running trailing aggregates.

    One writer per memory; readers may run between updates. Structural
    equality and persistence cover the two logs; the raw-window cache and the
    trailing deque are bounded operational buffers recomputable from the log.
    """

    def __init__(self, patient_id: str | None = None, raw_cache_size: int = 64):
        self.patient_id = patient_id
        self.states: list[MonitoringState] = []
        self.alerts: list[AlertRecord] = []
        self.raw_cache: deque[SampleWindow] = deque(maxlen=raw_cache_size)
        self._trailing_hr: deque[tuple[float, float]] = deque()  # (window_end_s, hr)
        self.max_hr_bpm: float | None = None

    def __eq__(self, other) -> bool:
        if not isinstance(other, PatientMemory):
            return NotImplemented
        return self.states == other.states and self.alerts == other.alerts

    def update(
        self,
        state: MonitoringState,
        alerts: Sequence[AlertRecord] = (),
        raw_window: SampleWindow | None = None,
    ) -> None:
        """Append one window's state and its alerts; refresh aggregates.

        The incoming index must be exactly last+1 (0 for an empty memory);
        violations raise OrderingError and leave the memory untouched.
        """
        expected = self.states[-1].window_index + 1 if self.states else 0
        if state.window_index != expected:
            raise OrderingError(
                f"window_index {state.window_index} out of order (expected {expected})"
            )
        if self.patient_id is None:
            self.patient_id = state.patient_id
        if self.states:
            state.previous_hr_bpm = self.states[-1].hr_bpm
        if state.hr_bpm is not None:
            self.max_hr_bpm = (
                state.hr_bpm if self.max_hr_bpm is None else max(self.max_hr_bpm, state.hr_bpm)
            )
        state.validate()
        for alert in alerts:
            alert.validate()
        self.states.append(state)
        self.alerts.extend(alerts)
        if raw_window is not None:
            self.raw_cache.append(raw_window)
        if state.hr_bpm is not None:
            self._trailing_hr.append((state.window_end_s, state.hr_bpm))
        cutoff = state.window_end_s - 300.0
        while self._trailing_hr and self._trailing_hr[0][0] <= cutoff:
            self._trailing_hr.popleft()

    def trailing_view(
        self,
        horizon_s: float = 300.0,
        tachy_threshold_bpm: float = 100.0,
    ) -> TrailingView:
        """Aggregates over states whose window end lies within the horizon.

        A state contributes iff window_end_s > current_end - horizon_s; only
        states with a present hr count as samples.
        """
        if not self.states:
            return TrailingView(None, None, 0)
        now = self.states[-1].window_end_s
        if horizon_s == 300.0:
            hrs = [hr for end, hr in self._trailing_hr if end > now - horizon_s]
        else:
            hrs = [
                s.hr_bpm
                for s in self._scan_back(now - horizon_s)
                if s.hr_bpm is not None
            ]
        if not hrs:
            return TrailingView(None, None, 0)
        mean_hr = sum(hrs) / len(hrs)
        ratio = sum(1 for hr in hrs if hr > tachy_threshold_bpm) / len(hrs)
        return TrailingView(mean_hr, ratio, len(hrs))

    def _scan_back(self, cutoff_end_s: float) -> Iterable[MonitoringState]:
        out = []
        for s in reversed(self.states):
            if s.window_end_s <= cutoff_end_s:
                break
            out.append(s)
        return reversed(out)

    def recent_alerts(self, k: int) -> list[AlertRecord]:
        """Last k alerts, most recent first."""
        return list(reversed(self.alerts))[: max(0, k)]

    def explain_last_alert(self) -> tuple[AlertRecord, MonitoringState | None] | None:
        """Most recent alert joined to the state of the same window."""
        if not self.alerts:
            return None
        alert = self.alerts[-1]
        state = next(
            (s for s in reversed(self.states) if s.window_index == alert.window_index),
            None,
        )
        return alert, state

    # -- persistence --------------------------------------------------------

    def persist(self, dir_path, fair: bool = False) -> tuple[str, str]:
        """Write states.jsonl and alerts.jsonl under dir_path.

        fair=True exports the leakage-filtered view (no hidden field names
        appear anywhere in the output).
        """
        os.makedirs(dir_path, exist_ok=True)
        states_path = os.path.join(dir_path, "states.jsonl")
        alerts_path = os.path.join(dir_path, "alerts.jsonl")
        with open(states_path, "w", encoding="utf-8") as fh:
            for s in self.states:
                fh.write(json.dumps(s.to_dict(include_hidden=not fair)) + "\n")
        with open(alerts_path, "w", encoding="utf-8") as fh:
            for a in self.alerts:
                fh.write(json.dumps(a.to_dict()) + "\n")
        return states_path, alerts_path

    @classmethod
    def load(cls, dir_path, raw_cache_size: int = 64) -> "PatientMemory":
        """Rebuild a memory from persisted logs; aggregates are recomputed."""
        states_path = os.path.join(dir_path, "states.jsonl")
        alerts_path = os.path.join(dir_path, "alerts.jsonl")
        states = [
            _parse_at(MonitoringState.from_dict, d, states_path, lineno)
            for lineno, d in _read_jsonl(states_path)
        ]
        alerts = [
            _parse_at(AlertRecord.from_dict, d, alerts_path, lineno)
            for lineno, d in _read_jsonl(alerts_path)
        ]
        mem = cls(raw_cache_size=raw_cache_size)
        mem.states = states
        mem.alerts = alerts
        if states:
            mem.patient_id = states[0].patient_id
            now = states[-1].window_end_s
            for s in states:
                if s.hr_bpm is not None:
                    mem.max_hr_bpm = (
                        s.hr_bpm if mem.max_hr_bpm is None else max(mem.max_hr_bpm, s.hr_bpm)
                    )
                    if s.window_end_s > now - 300.0:
                        mem._trailing_hr.append((s.window_end_s, s.hr_bpm))
        return mem


def _read_jsonl(path) -> list[tuple[int, dict]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append((lineno, json.loads(line)))
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return out


def _parse_at(parser, d: dict, path, lineno: int):
    try:
        return parser(d)
    except SchemaError as exc:
        raise ParseError(f"{path}:{lineno}: {exc}") from exc
