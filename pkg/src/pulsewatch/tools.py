"""Built-in tool set and the execution context handlers run against.

The context owns the on-disk data layout (one directory per patient holding
windows.jsonl / states.jsonl / alerts.jsonl), per-patient caches, configs,
and the offline knowledge fixtures. In fair mode (the default, and the only
mode the QA agent runs in) every state leaving a tool has passed the leakage
filter.
"""
from __future__ import annotations

import json
import os
from importlib import resources

from .beats import DEFAULT_RR_BAND, derive_rr, detect_peaks_over
from .engine import MonitorEngine, RuleConfig, evaluate_rules
from .features import WindowFeatures, signal_quality
from .judge import GuidelineStore
from .memory import (
    AlertRecord,
    MonitoringState,
    PatientMemory,
    TrailingView,
    leakage_filter,
)
from .registry import ArgSpec, ToolDescriptor, ToolError, ToolRegistry
from .rhythm import ScreenConfig, classify_rhythm
from .streams import SampleWindow, read_windows_jsonl

DATASET_MODALITY = {
    "icentia11k": "ECG",
    "af_ppg_ecg": "PPG",
    "ppg_dalia": "PPG",
    "wesad": "PPG",
    "synthetic": None,  # synthetic streams declare their own modality
}

_TREND_FIELDS = (
    "hr_bpm",
    "sdnn_ms",
    "rmssd_ms",
    "signal_quality_score",
    "mean_hr_5min",
    "tachycardia_ratio_5min",
)


class FixtureKnowledgeClient:
    """Offline knowledge stub backed by the bundled fixture corpus."""

    def __init__(self, fixture: dict | None = None):
        if fixture is None:
            text = resources.files("pulsewatch").joinpath(
                "data/knowledge_fixtures.json"
            ).read_text()
            fixture = json.loads(text)
        self._fixture = fixture

    def search(self, query: str) -> list[dict]:
        q = query.lower()
        hits = [
            {"title": e["title"], "summary": e["summary"], "source": e["source"]}
            for e in self._fixture["search"]
            if any(k in q for k in e["keywords"])
        ]
        if not hits:
            hits = [
                {
                    "title": "No curated match",
                    "summary": "Fixture entry: nothing in the offline corpus matches this query.",
                    "source": "fixture:medline-stub",
                }
            ]
        return hits

    def topic(self, topic: str) -> dict:
        topics = self._fixture["topics"]
        return topics.get(topic.lower(), topics["default"])


class HttpKnowledgeClient:
    """Online client for external medical-knowledge services.

    Kept behind a feature gate; tests and offline runs always use the fixture
    client instead.
    """

    def __init__(self, search_url: str | None = None, timeout_s: float = 10.0):
        self.search_url = search_url or os.environ.get("PULSEWATCH_KNOWLEDGE_URL", "")
        self.timeout_s = timeout_s

    def search(self, query: str) -> list[dict]:
        import requests

        resp = requests.get(
            self.search_url, params={"q": query}, timeout=self.timeout_s
        )
        resp.raise_for_status()
        return resp.json().get("results", [])

    def topic(self, topic: str) -> dict:
        results = self.search(topic)
        if results:
            return {"summary": results[0].get("summary", ""), "source": "http"}
        return {"summary": "", "source": "http"}


class ToolContext:
    """Shared handle every tool handler receives."""

    def __init__(
        self,
        data_dir: str | None = None,
        fair: bool = True,
        rule_config: RuleConfig = RuleConfig(),
        screen_config: ScreenConfig = ScreenConfig(),
        rr_band: tuple[float, float] = DEFAULT_RR_BAND,
        guidelines: GuidelineStore | None = None,
        knowledge=None,
        stress_hr_bpm: float = 95.0,
        stress_rmssd_ms: float = 30.0,
    ):
        self.data_dir = data_dir
        self.fair = fair
        self.rule_config = rule_config
        self.screen_config = screen_config
        self.rr_band = rr_band
        self.guidelines = guidelines or GuidelineStore.bundled()
        self.knowledge = knowledge or FixtureKnowledgeClient()
        self.stress_hr_bpm = stress_hr_bpm
        self.stress_rmssd_ms = stress_rmssd_ms
        self._windows: dict[str, list[SampleWindow]] = {}
        self._memories: dict[str, PatientMemory] = {}

    # -- data access ---------------------------------------------------------

    def _patient_dir(self, patient_id: str) -> str:
        if self.data_dir is None:
            raise ToolError("data_unavailable", "no data directory configured")
        return os.path.join(self.data_dir, patient_id)

    def patients(self) -> list[str]:
        if self.data_dir is None or not os.path.isdir(self.data_dir):
            return []
        out = []
        for name in sorted(os.listdir(self.data_dir)):
            pdir = os.path.join(self.data_dir, name)
            if os.path.isdir(pdir) and (
                os.path.exists(os.path.join(pdir, "windows.jsonl"))
                or os.path.exists(os.path.join(pdir, "states.jsonl"))
            ):
                out.append(name)
        return out

    def windows(self, patient_id: str) -> list[SampleWindow]:
        if patient_id not in self._windows:
            path = os.path.join(self._patient_dir(patient_id), "windows.jsonl")
            if not os.path.exists(path):
                raise ToolError("data_unavailable", f"no windows for patient {patient_id!r}")
            wins, _ = read_windows_jsonl(path, strict=True)
            self._windows[patient_id] = wins
        return self._windows[patient_id]

    def memory(self, patient_id: str) -> PatientMemory:
        if patient_id not in self._memories:
            pdir = self._patient_dir(patient_id)
            if not os.path.exists(os.path.join(pdir, "states.jsonl")):
                raise ToolError("data_unavailable", f"no states for patient {patient_id!r}")
            self._memories[patient_id] = PatientMemory.load(pdir)
        return self._memories[patient_id]

    def states(self, patient_id: str) -> list[MonitoringState]:
        states = self.memory(patient_id).states
        if self.fair:
            return [leakage_filter(s) for s in states]
        return states

    def alerts(self, patient_id: str) -> list[AlertRecord]:
        return self.memory(patient_id).alerts

    def set_memory(self, patient_id: str, memory: PatientMemory) -> None:
        self._memories[patient_id] = memory

    def windows_in_range(
        self,
        dataset: str,
        patient_id: str,
        start_s: float,
        end_s: float,
        modality: str | None = None,
    ) -> list[SampleWindow]:
        wins = self.windows(patient_id)
        eps = 1e-6
        hits = [
            w
            for w in wins
            if w.dataset == dataset and w.start_s >= start_s - eps and w.end_s <= end_s + eps
        ]
        if not hits:
            raise ToolError(
                "data_unavailable",
                f"no {dataset} windows for {patient_id} in [{start_s}, {end_s}]",
            )
        if modality is not None:
            bad = [w for w in hits if w.modality != modality]
            if bad:
                raise ToolError(
                    "modality_mismatch",
                    f"expected {modality} windows, found {bad[0].modality}",
                )
        return hits

    def states_in_range(
        self, patient_id: str, start_s: float, end_s: float
    ) -> list[MonitoringState]:
        eps = 1e-6
        hits = [
            s
            for s in self.states(patient_id)
            if s.window_start_s >= start_s - eps and s.window_end_s <= end_s + eps
        ]
        if not hits:
            raise ToolError(
                "data_unavailable",
                f"no states for {patient_id} in [{start_s}, {end_s}]",
            )
        return hits


# ---------------------------------------------------------------------------
# Shared handler helpers

_LOCATOR_ARGS = {
    "dataset": ArgSpec("string", True, "source dataset name"),
    "patient_id": ArgSpec("string", True, "patient identifier"),
    "window_start_s": ArgSpec("number", True, "range start, seconds"),
    "window_end_s": ArgSpec("number", True, "range end, seconds"),
}


def _range_features(
    ctx: ToolContext,
    dataset: str,
    patient_id: str,
    start_s: float,
    end_s: float,
    modality: str | None,
) -> tuple[WindowFeatures, list[SampleWindow]]:
    wins = ctx.windows_in_range(dataset, patient_id, start_s, end_s, modality)
    peaks, _result = detect_peaks_over(wins)
    rr, _excluded = derive_rr(peaks, ctx.rr_band)
    raw_rr = [b - a for a, b in zip(peaks, peaks[1:])]
    quality = min(
        (signal_quality(w, raw_rr, ctx.rr_band) for w in wins), default=0.0
    )
    return WindowFeatures.from_rr(rr, quality=quality), wins


def _meta_for(ctx: ToolContext, patient_id: str, modality: str) -> dict:
    wins = ctx.windows(patient_id)
    if not wins:
        raise ToolError("data_unavailable", f"no windows for {patient_id!r}")
    first = wins[0]
    if first.modality != modality:
        raise ToolError(
            "modality_mismatch", f"{patient_id} is {first.modality}, not {modality}"
        )
    return {
        "patient_id": patient_id,
        "dataset": first.dataset,
        "modality": first.modality,
        "fs": first.fs,
        "n_windows": len(wins),
        "window_duration_s": first.duration_s,
        "duration_s": wins[-1].end_s - first.start_s,
    }


def _record_list(ctx: ToolContext, modality: str) -> list[dict]:
    records = []
    for pid in ctx.patients():
        try:
            wins = ctx.windows(pid)
        except ToolError:
            continue
        if wins and wins[0].modality == modality:
            records.append(
                {
                    "patient_id": pid,
                    "dataset": wins[0].dataset,
                    "modality": modality,
                    "fs": wins[0].fs,
                    "n_windows": len(wins),
                }
            )
    return records


def _trailing_from_log(
    states: list[MonitoringState], upto_index: int, horizon_s: float, thr: float
) -> TrailingView:
    target = next((s for s in states if s.window_index == upto_index), None)
    if target is None:
        raise ToolError("data_unavailable", f"no state with window_index {upto_index}")
    now = target.window_end_s
    hrs = [
        s.hr_bpm
        for s in states
        if s.window_index <= upto_index
        and s.window_end_s > now - horizon_s
        and s.hr_bpm is not None
    ]
    if not hrs:
        return TrailingView(None, None, 0)
    return TrailingView(
        sum(hrs) / len(hrs), sum(1 for v in hrs if v > thr) / len(hrs), len(hrs)
    )


def _state_payload(ctx: ToolContext, state: MonitoringState) -> dict:
    return state.to_dict(include_hidden=not ctx.fair)


# ---------------------------------------------------------------------------
# Signal analysis handlers


def _h_analyze_heart_rate(ctx, dataset, patient_id, window_start_s, window_end_s):
    feats, wins = _range_features(ctx, dataset, patient_id, window_start_s, window_end_s, "ECG")
    return {"hr_bpm": feats.hr_bpm, "n_beats": feats.n_beats, "windows_used": len(wins)}


def _h_analyze_pulse_rate(ctx, dataset, patient_id, window_start_s, window_end_s):
    feats, wins = _range_features(ctx, dataset, patient_id, window_start_s, window_end_s, "PPG")
    return {"pulse_rate_bpm": feats.hr_bpm, "n_beats": feats.n_beats, "windows_used": len(wins)}


def _h_analyze_hrv(ctx, dataset, patient_id, window_start_s, window_end_s):
    feats, _ = _range_features(ctx, dataset, patient_id, window_start_s, window_end_s, "ECG")
    return {
        "sdnn_ms": feats.sdnn_ms,
        "rmssd_ms": feats.rmssd_ms,
        "cv": feats.cv,
        "n_beats": feats.n_beats,
    }


def _h_analyze_prv(ctx, dataset, patient_id, window_start_s, window_end_s):
    feats, _ = _range_features(ctx, dataset, patient_id, window_start_s, window_end_s, "PPG")
    return {
        "sdnn_ms": feats.sdnn_ms,
        "rmssd_ms": feats.rmssd_ms,
        "cv": feats.cv,
        "n_beats": feats.n_beats,
    }


def _h_assess_signal_quality(ctx, dataset, patient_id, window_start_s, window_end_s):
    feats, _ = _range_features(ctx, dataset, patient_id, window_start_s, window_end_s, "ECG")
    return {"signal_quality_score": feats.signal_quality_score, "n_beats": feats.n_beats}


def _h_assess_ppg_signal_quality(ctx, dataset, patient_id, window_start_s, window_end_s):
    feats, _ = _range_features(ctx, dataset, patient_id, window_start_s, window_end_s, "PPG")
    return {"signal_quality_score": feats.signal_quality_score, "n_beats": feats.n_beats}


def _h_assess_all_leads_quality(ctx, dataset, patient_id, window_start_s, window_end_s):
    # Single-lead path: one lead, same score.
    feats, _ = _range_features(ctx, dataset, patient_id, window_start_s, window_end_s, "ECG")
    return {
        "signal_quality_score": feats.signal_quality_score,
        "leads": [{"lead": "I", "signal_quality_score": feats.signal_quality_score}],
    }


def _h_analyze_morphology(ctx, dataset, patient_id, window_start_s, window_end_s):
    feats, _ = _range_features(ctx, dataset, patient_id, window_start_s, window_end_s, None)
    return {
        "signal_quality_score": feats.signal_quality_score,
        "morphology_available": False,
        "note": "morphology analysis is not supported; quality-based evidence only",
    }


def _h_analyze_lead_morphology(ctx, dataset, patient_id, window_start_s, window_end_s, lead=None):
    payload = _h_analyze_morphology(ctx, dataset, patient_id, window_start_s, window_end_s)
    payload["lead"] = lead or "I"
    return payload


def _h_ecg_diagnosis(ctx, dataset, patient_id, window_start_s, window_end_s):
    feats, _ = _range_features(ctx, dataset, patient_id, window_start_s, window_end_s, "ECG")
    assessment = classify_rhythm(feats, ctx.screen_config)
    return {
        "rhythm_class": assessment.rhythm_class,
        "cv": feats.cv,
        "delta_rr_entropy": feats.delta_rr_entropy,
        "turning_point_ratio": feats.turning_point_ratio,
        "n_beats": feats.n_beats,
        "thresholds_used": assessment.thresholds_used,
    }


def _h_analyze_ppg_rhythm_irregularity(ctx, dataset, patient_id, window_start_s, window_end_s):
    feats, _ = _range_features(ctx, dataset, patient_id, window_start_s, window_end_s, "PPG")
    assessment = classify_rhythm(feats, ctx.screen_config)
    return {
        "rhythm_class": assessment.rhythm_class,
        "cv": feats.cv,
        "delta_rr_entropy": feats.delta_rr_entropy,
        "turning_point_ratio": feats.turning_point_ratio,
        "n_beats": feats.n_beats,
        "thresholds_used": assessment.thresholds_used,
    }


def _h_analyze_af_rhythm_context(ctx, dataset, patient_id, window_start_s, window_end_s):
    wins = ctx.windows_in_range(dataset, patient_id, window_start_s, window_end_s, None)
    assessed = unknown = af = 0
    classes: list[str] = []
    for w in wins:
        peaks, _ = detect_peaks_over([w])
        rr, _ = derive_rr(peaks, ctx.rr_band)
        raw_rr = [b - a for a, b in zip(peaks, peaks[1:])]
        quality = signal_quality(w, raw_rr, ctx.rr_band)
        feats = WindowFeatures.from_rr(rr, quality=quality)
        cls = classify_rhythm(feats, ctx.screen_config).rhythm_class
        if cls == "unknown":
            unknown += 1
            continue
        assessed += 1
        classes.append(cls)
        if cls == "AF":
            af += 1
    frac = af / assessed if assessed else None
    majority = max(sorted(set(classes)), key=classes.count) if classes else None
    return {
        "af_window_fraction": frac,
        "windows_assessed": assessed,
        "windows_unknown": unknown,
        "rhythm_class": majority,
    }


def _h_classify_wesad_stress(ctx, dataset, patient_id, window_start_s, window_end_s):
    feats, _ = _range_features(ctx, dataset, patient_id, window_start_s, window_end_s, "PPG")
    if feats.hr_bpm is None or feats.rmssd_ms is None:
        state = "unknown"
    elif feats.hr_bpm >= ctx.stress_hr_bpm and feats.rmssd_ms <= ctx.stress_rmssd_ms:
        state = "stress"
    else:
        state = "baseline"
    return {"stress_state": state, "hr_bpm": feats.hr_bpm, "rmssd_ms": feats.rmssd_ms}


# ---------------------------------------------------------------------------
# Dataset processing handlers


def _dataset_loader(expected_dataset: str):
    def handler(ctx, patient_id, window_start_s, window_end_s):
        wins = ctx.windows_in_range(
            expected_dataset, patient_id, window_start_s, window_end_s, None
        )
        return {
            "window_count": len(wins),
            "fs": wins[0].fs,
            "modality": wins[0].modality,
            "total_duration_s": wins[-1].end_s - wins[0].start_s,
            "first_window_index": wins[0].window_index,
            "last_window_index": wins[-1].window_index,
        }

    return handler


# ---------------------------------------------------------------------------
# Record lookup handlers


def _h_list_ecg_records(ctx):
    return {"records": _record_list(ctx, "ECG")}


def _h_list_ppg_records(ctx):
    return {"records": _record_list(ctx, "PPG")}


def _h_get_ecg_metadata(ctx, patient_id):
    return _meta_for(ctx, patient_id, "ECG")


def _h_get_ppg_metadata(ctx, patient_id):
    return _meta_for(ctx, patient_id, "PPG")


def _describe(meta: dict) -> str:
    return (
        f"{meta['modality']} recording for patient {meta['patient_id']} "
        f"({meta['dataset']}): {meta['n_windows']} windows of "
        f"{meta['window_duration_s']:.0f} s at {meta['fs']:.0f} Hz, "
        f"{meta['duration_s'] / 60:.1f} minutes total."
    )


def _h_get_ecg_description(ctx, patient_id):
    return {"description": _describe(_meta_for(ctx, patient_id, "ECG"))}


def _h_get_ppg_description(ctx, patient_id):
    return {"description": _describe(_meta_for(ctx, patient_id, "PPG"))}


# ---------------------------------------------------------------------------
# Proactive context handlers


def _h_proactive_get_recent_alerts(ctx, patient_id, k=5):
    mem = ctx.memory(patient_id)
    alerts = mem.recent_alerts(int(k))
    return {"alerts": [a.to_dict() for a in alerts], "n_alerts": len(mem.alerts)}


def _h_proactive_explain_last_alert(ctx, patient_id):
    mem = ctx.memory(patient_id)
    joined = mem.explain_last_alert()
    if joined is None:
        return {"alert": None, "state": None}
    alert, state = joined
    return {
        "alert": alert.to_dict(),
        "state": _state_payload(ctx, state) if state is not None else None,
    }


def _h_proactive_list_patient_contexts(ctx):
    out = []
    for pid in ctx.patients():
        try:
            ctx.memory(pid)
        except ToolError:
            continue
        out.append(pid)
    return {"patients": out}


def _h_proactive_load_patient_context(ctx, patient_id):
    mem = ctx.memory(patient_id)
    return {
        "patient_id": patient_id,
        "n_states": len(mem.states),
        "n_alerts": len(mem.alerts),
        "last_window_index": mem.states[-1].window_index if mem.states else None,
    }


def _h_evaluate_proactive_rules(ctx, patient_id, window_index=None):
    states = ctx.states(patient_id)
    if not states:
        raise ToolError("data_unavailable", f"no states for {patient_id!r}")
    idx = states[-1].window_index if window_index is None else int(window_index)
    state = next((s for s in states if s.window_index == idx), None)
    if state is None:
        raise ToolError("data_unavailable", f"no state with window_index {idx}")
    trailing = _trailing_from_log(
        states, idx, 300.0, ctx.rule_config.sustained_hr_threshold_bpm
    )
    fired = evaluate_rules(state, trailing, ctx.rule_config)
    return {
        "fired_rules": fired,
        "window_index": idx,
        "hr_bpm": state.hr_bpm,
        "tachycardia_ratio_5min": trailing.tachycardia_ratio_5min,
    }


# ---------------------------------------------------------------------------
# Medical knowledge handlers


def _h_medical_info_search(ctx, query):
    results = ctx.knowledge.search(query)
    return {"results": results, "query": query}


def _h_medical_knowledge(ctx, topic):
    note = ctx.knowledge.topic(topic)
    return {"topic": topic, "summary": note["summary"], "source": note["source"]}


# ---------------------------------------------------------------------------
# State construction handlers (benchmark_only)


def _state_builder(expected_dataset: str | None):
    def handler(ctx, patient_id):
        wins = ctx.windows(patient_id)
        if expected_dataset is not None and wins and wins[0].dataset != expected_dataset:
            raise ToolError(
                "dataset_mismatch",
                f"{patient_id} holds {wins[0].dataset}, expected {expected_dataset}",
            )
        engine = MonitorEngine(ctx.rule_config, ctx.screen_config, rr_band=ctx.rr_band)
        memory, _alerts = engine.replay(wins)
        ctx.set_memory(patient_id, memory)
        return {"patient_id": patient_id, "n_states": len(memory.states)}

    return handler


# ---------------------------------------------------------------------------
# State access handlers


def _h_state_list_contexts(ctx):
    out = []
    for pid in ctx.patients():
        try:
            ctx.memory(pid)
        except ToolError:
            continue
        out.append(pid)
    return {"patients": out}


def _h_state_load_monitoring_states(ctx, patient_id):
    states = ctx.states(patient_id)
    return {"patient_id": patient_id, "n_states": len(states)}


def _h_state_get_current(ctx, patient_id, window_start_s=None, window_index=None):
    states = ctx.states(patient_id)
    if not states:
        raise ToolError("data_unavailable", f"no states for {patient_id!r}")
    if window_index is not None:
        state = next((s for s in states if s.window_index == int(window_index)), None)
    elif window_start_s is not None:
        state = next(
            (s for s in states if s.window_start_s <= window_start_s < s.window_end_s),
            None,
        )
    else:
        state = states[-1]
    if state is None:
        raise ToolError("data_unavailable", "no state matches the locator")
    return {"state": _state_payload(ctx, state)}


def _h_state_get_previous(ctx, patient_id, window_index):
    states = ctx.states(patient_id)
    state = next((s for s in states if s.window_index == int(window_index) - 1), None)
    if state is None:
        raise ToolError("data_unavailable", f"no state before window_index {window_index}")
    return {"state": _state_payload(ctx, state)}


def _h_state_get_monitoring_window(ctx, patient_id, window_start_s, window_end_s):
    states = ctx.states_in_range(patient_id, window_start_s, window_end_s)
    hrs = [s.hr_bpm for s in states if s.hr_bpm is not None]
    sdnns = [s.sdnn_ms for s in states if s.sdnn_ms is not None]
    quals = [s.signal_quality_score for s in states if s.signal_quality_score is not None]
    thr = ctx.rule_config.sustained_hr_threshold_bpm
    return {
        "n_states": len(states),
        "window_start_s": window_start_s,
        "window_end_s": window_end_s,
        "mean_hr_bpm": sum(hrs) / len(hrs) if hrs else None,
        "max_hr_bpm": max(hrs) if hrs else None,
        "min_hr_bpm": min(hrs) if hrs else None,
        "tachy_window_fraction": (
            sum(1 for v in hrs if v > thr) / len(hrs) if hrs else None
        ),
        "mean_sdnn_ms": sum(sdnns) / len(sdnns) if sdnns else None,
        "mean_quality": sum(quals) / len(quals) if quals else None,
    }


def _h_state_get_longitudinal_trend(ctx, patient_id, field, window_start_s, window_end_s):
    if field not in _TREND_FIELDS:
        raise ToolError("unsupported_field", f"no trend support for field {field!r}")
    states = ctx.states_in_range(patient_id, window_start_s, window_end_s)
    values = [(s.window_index, getattr(s, field)) for s in states if getattr(s, field) is not None]
    if len(values) < 2:
        raise ToolError("data_unavailable", f"fewer than 2 samples of {field!r} in range")
    first, last = values[0][1], values[-1][1]
    delta = last - first
    deadband = 0.02 if field == "tachycardia_ratio_5min" else 2.0
    direction = "up" if delta > deadband else ("down" if delta < -deadband else "flat")
    return {
        "field": field,
        "n": len(values),
        "first_value": first,
        "last_value": last,
        "delta": delta,
        "direction": direction,
    }


_EVIDENCE_TARGETS = ("hr_bpm", "max_hr_bpm", "mean_hr_bpm", "sdnn_ms", "signal_quality_score")


def _h_state_get_evidence(ctx, patient_id, target, window_start_s, window_end_s):
    if target not in _EVIDENCE_TARGETS:
        raise ToolError("unsupported_target", f"no leakage-safe evidence for {target!r}")
    states = ctx.states_in_range(patient_id, window_start_s, window_end_s)
    hrs = [s.hr_bpm for s in states if s.hr_bpm is not None]
    if target == "hr_bpm":
        value = states[-1].hr_bpm
    elif target == "max_hr_bpm":
        value = max(hrs) if hrs else None
    elif target == "mean_hr_bpm":
        value = sum(hrs) / len(hrs) if hrs else None
    elif target == "sdnn_ms":
        value = states[-1].sdnn_ms
    else:
        value = states[-1].signal_quality_score
    return {"target": target, "value": value, "n_states": len(states)}


_CAPABILITIES = {
    "icentia11k": ("hr", "hrv", "rhythm", "af_screen", "quality"),
    "af_ppg_ecg": ("pulse_rate", "prv", "rhythm", "af_screen", "quality"),
    "ppg_dalia": ("pulse_rate", "prv", "quality", "motion_context"),
    "wesad": ("pulse_rate", "prv", "quality", "stress_heuristic"),
    "synthetic": ("hr", "hrv", "rhythm", "af_screen", "quality"),
}


def _h_state_get_dataset_capabilities(ctx, dataset):
    if dataset not in _CAPABILITIES:
        raise ToolError("data_unavailable", f"unknown dataset {dataset!r}")
    return {
        "dataset": dataset,
        "modality": DATASET_MODALITY.get(dataset),
        "supported_targets": list(_CAPABILITIES[dataset]),
        "notes": "hidden annotation fields are never exposed to evaluated methods",
    }


# ---------------------------------------------------------------------------
# Registry assembly


def _tool(name, category, description, args, output_kind, required, benchmark_only=False):
    return ToolDescriptor(
        name=name,
        category=category,
        description=description,
        arg_schema=args,
        output_kind=output_kind,
        required_output_fields=tuple(required),
        benchmark_only=benchmark_only,
    )


_PID = {"patient_id": ArgSpec("string", True, "patient identifier")}
_RANGE = {
    "patient_id": ArgSpec("string", True, "patient identifier"),
    "window_start_s": ArgSpec("number", True, "range start, seconds"),
    "window_end_s": ArgSpec("number", True, "range end, seconds"),
}


def build_registry() -> ToolRegistry:
    """Register the full built-in tool set.

    The five user-facing categories total 29 tools; the 12 state tools bring
    the registry to 41, with the 4 state-construction tools flagged
    benchmark-only so planners never see them.
    """
    reg = ToolRegistry()

    sig = "signal_analysis"
    reg.register(_tool(
        "analyze_heart_rate", sig,
        "Mean heart rate over the located ECG windows, from detected beats.",
        dict(_LOCATOR_ARGS), "data", ["hr_bpm"]), _h_analyze_heart_rate)
    reg.register(_tool(
        "analyze_hrv", sig,
        "Time-domain variability (SDNN, RMSSD, CV) over the located ECG windows.",
        dict(_LOCATOR_ARGS), "data", ["sdnn_ms", "rmssd_ms"]), _h_analyze_hrv)
    reg.register(_tool(
        "analyze_lead_morphology", sig,
        "Morphology stub for one lead; returns quality-based evidence only.",
        {**_LOCATOR_ARGS, "lead": ArgSpec("string", False, "lead name")},
        "evidence", ["signal_quality_score", "morphology_available"]),
        _h_analyze_lead_morphology)
    reg.register(_tool(
        "analyze_morphology", sig,
        "Morphology stub; returns quality-based evidence only.",
        dict(_LOCATOR_ARGS), "evidence", ["signal_quality_score", "morphology_available"]),
        _h_analyze_morphology)
    reg.register(_tool(
        "analyze_ppg_rhythm_irregularity", sig,
        "Irregularity screen (CV, delta-RR entropy, turning points) on PPG pulses.",
        dict(_LOCATOR_ARGS), "evidence", ["rhythm_class"]),
        _h_analyze_ppg_rhythm_irregularity)
    reg.register(_tool(
        "analyze_prv", sig,
        "Pulse-rate variability (SDNN, RMSSD, CV) over the located PPG windows.",
        dict(_LOCATOR_ARGS), "data", ["sdnn_ms", "rmssd_ms"]), _h_analyze_prv)
    reg.register(_tool(
        "analyze_pulse_rate", sig,
        "Mean pulse rate over the located PPG windows, from detected pulses.",
        dict(_LOCATOR_ARGS), "data", ["pulse_rate_bpm"]), _h_analyze_pulse_rate)
    reg.register(_tool(
        "assess_all_leads_quality", sig,
        "Per-lead signal quality; single-lead recordings report one lead.",
        dict(_LOCATOR_ARGS), "data", ["signal_quality_score"]),
        _h_assess_all_leads_quality)
    reg.register(_tool(
        "assess_ppg_signal_quality", sig,
        "Signal-quality score for the located PPG windows.",
        dict(_LOCATOR_ARGS), "data", ["signal_quality_score"]),
        _h_assess_ppg_signal_quality)
    reg.register(_tool(
        "assess_signal_quality", sig,
        "Signal-quality score for the located ECG windows.",
        dict(_LOCATOR_ARGS), "data", ["signal_quality_score"]),
        _h_assess_signal_quality)
    reg.register(_tool(
        "ecg_diagnosis", sig,
        "Rhythm screen (N / AF / Other) over the located ECG windows.",
        dict(_LOCATOR_ARGS), "evidence", ["rhythm_class"]), _h_ecg_diagnosis)
    reg.register(_tool(
        "analyze_af_ppg_ecg_rhythm_context", sig,
        "Per-window rhythm screen across a range; reports the AF window fraction.",
        dict(_LOCATOR_ARGS), "evidence", ["af_window_fraction"]),
        _h_analyze_af_rhythm_context)
    reg.register(_tool(
        "classify_wesad_stress_state", sig,
        "Threshold heuristic stress state from pulse rate and RMSSD.",
        dict(_LOCATOR_ARGS), "evidence", ["stress_state"]), _h_classify_wesad_stress)

    dp = "dataset_processing"
    reg.register(_tool(
        "analyze_icentia11k_ecg_window_signal", dp,
        "Load canonical ECG windows for an icentia11k patient range.",
        dict(_RANGE), "data", ["window_count"]), _dataset_loader("icentia11k"))
    reg.register(_tool(
        "analyze_ppg_dalia_window_signal", dp,
        "Load canonical PPG windows for a ppg_dalia patient range.",
        dict(_RANGE), "data", ["window_count"]), _dataset_loader("ppg_dalia"))
    reg.register(_tool(
        "analyze_wesad_window_signal", dp,
        "Load canonical PPG windows for a wesad patient range.",
        dict(_RANGE), "data", ["window_count"]), _dataset_loader("wesad"))

    rl = "record_lookup"
    reg.register(_tool(
        "get_ecg_description", rl, "Human-readable summary of an ECG recording.",
        dict(_PID), "metadata", ["description"]), _h_get_ecg_description)
    reg.register(_tool(
        "get_ecg_metadata", rl, "Sampling rate, duration, and window counts for an ECG recording.",
        dict(_PID), "metadata", ["patient_id", "fs"]), _h_get_ecg_metadata)
    reg.register(_tool(
        "get_ppg_description", rl, "Human-readable summary of a PPG recording.",
        dict(_PID), "metadata", ["description"]), _h_get_ppg_description)
    reg.register(_tool(
        "get_ppg_metadata", rl, "Sampling rate, duration, and window counts for a PPG recording.",
        dict(_PID), "metadata", ["patient_id", "fs"]), _h_get_ppg_metadata)
    reg.register(_tool(
        "list_ecg_records", rl, "Enumerate available ECG recordings.",
        {}, "metadata", ["records"]), _h_list_ecg_records)
    reg.register(_tool(
        "list_ppg_records", rl, "Enumerate available PPG recordings.",
        {}, "metadata", ["records"]), _h_list_ppg_records)

    pc = "proactive_context"
    reg.register(_tool(
        "proactive_explain_last_alert", pc,
        "Most recent alert joined to the monitoring state of its window.",
        dict(_PID), "explanation", ["alert"]), _h_proactive_explain_last_alert)
    reg.register(_tool(
        "proactive_get_recent_alerts", pc,
        "Last k proactive alerts, most recent first.",
        {**_PID, "k": ArgSpec("integer", False, "how many alerts")},
        "state", ["alerts"]), _h_proactive_get_recent_alerts)
    reg.register(_tool(
        "proactive_list_patient_contexts", pc,
        "Patients with stored proactive monitoring context.",
        {}, "state", ["patients"]), _h_proactive_list_patient_contexts)
    reg.register(_tool(
        "proactive_load_patient_context", pc,
        "Load one patient's stored monitoring context summary.",
        dict(_PID), "state", ["n_states"]), _h_proactive_load_patient_context)
    reg.register(_tool(
        "evaluate_proactive_rules", pc,
        "Re-evaluate the alerting rules against a stored monitoring state.",
        {**_PID, "window_index": ArgSpec("integer", False, "window to evaluate")},
        "evidence", ["fired_rules"]), _h_evaluate_proactive_rules)

    mk = "medical_knowledge"
    reg.register(_tool(
        "medical_info_search", mk,
        "Search consumer health information (offline fixture corpus by default).",
        {"query": ArgSpec("string", True, "search terms")},
        "explanation", ["results"]), _h_medical_info_search)
    reg.register(_tool(
        "medical_knowledge", mk,
        "Topic note from the medical knowledge source (offline fixture by default).",
        {"topic": ArgSpec("string", True, "topic name")},
        "explanation", ["summary"]), _h_medical_knowledge)

    sa = "state_access"
    reg.register(_tool(
        "state_build_from_ecg_record", sa,
        "Rebuild monitoring states from a stored ECG record (offline benchmark prep).",
        dict(_PID), "state", ["n_states"], benchmark_only=True), _state_builder("icentia11k"))
    reg.register(_tool(
        "state_build_from_ppg_dalia_pickle", sa,
        "Rebuild monitoring states from converted ppg_dalia windows (offline benchmark prep).",
        dict(_PID), "state", ["n_states"], benchmark_only=True), _state_builder("ppg_dalia"))
    reg.register(_tool(
        "state_build_from_ppg_patient", sa,
        "Rebuild monitoring states from converted PPG windows (offline benchmark prep).",
        dict(_PID), "state", ["n_states"], benchmark_only=True), _state_builder(None))
    reg.register(_tool(
        "state_build_from_wesad_pickle", sa,
        "Rebuild monitoring states from converted wesad windows (offline benchmark prep).",
        dict(_PID), "state", ["n_states"], benchmark_only=True), _state_builder("wesad"))
    reg.register(_tool(
        "state_get_current_monitoring_state", sa,
        "Latest monitoring state, or the one containing a given time / index.",
        {**_PID,
         "window_start_s": ArgSpec("number", False, "time inside the wanted window"),
         "window_index": ArgSpec("integer", False, "explicit window index")},
        "state", ["state"]), _h_state_get_current)
    reg.register(_tool(
        "state_get_dataset_capabilities", sa,
        "Which analysis targets a dataset supports in leakage-free evaluation.",
        {"dataset": ArgSpec("string", True, "dataset name")},
        "metadata", ["dataset", "supported_targets"]), _h_state_get_dataset_capabilities)
    reg.register(_tool(
        "state_get_evidence", sa,
        "Leakage-safe evidence value for a named target over a state range.",
        {**_RANGE, "target": ArgSpec("string", True, "target field")},
        "evidence", ["target", "value"]), _h_state_get_evidence)
    reg.register(_tool(
        "state_get_longitudinal_trend", sa,
        "First/last/delta trend of a visible numeric field over a state range.",
        {**_RANGE, "field": ArgSpec("string", True, "visible numeric field")},
        "evidence", ["field", "direction"]), _h_state_get_longitudinal_trend)
    reg.register(_tool(
        "state_get_monitoring_window", sa,
        "Visible-field aggregates (mean/max/min HR, tachycardia fraction) over a range.",
        dict(_RANGE), "state", ["n_states", "mean_hr_bpm", "max_hr_bpm"]),
        _h_state_get_monitoring_window)
    reg.register(_tool(
        "state_get_previous_monitoring_state", sa,
        "The state immediately before a given window index.",
        {**_PID, "window_index": ArgSpec("integer", True, "current window index")},
        "state", ["state"]), _h_state_get_previous)
    reg.register(_tool(
        "state_list_contexts", sa,
        "Patients with stored monitoring states.",
        {}, "state", ["patients"]), _h_state_list_contexts)
    reg.register(_tool(
        "state_load_monitoring_states", sa,
        "Load one patient's monitoring states into the session cache.",
        dict(_PID), "state", ["n_states"]), _h_state_load_monitoring_states)

    return reg
