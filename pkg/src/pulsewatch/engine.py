"""Streaming proactive monitoring: rules, episode dedup, judge checkpoints.

Per window the pipeline is detect -> RR -> features -> state -> rules ->
episode dedup -> memory update, with a judge checkpoint every
`judge_period_windows` windows. Everything is deterministic given the input
stream and configs when the judge backend is the offline mock.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .beats import DEFAULT_RR_BAND, RRSeries, derive_rr, detect_peaks
from .errors import ConfigError
from .features import WindowFeatures, signal_quality
from .judge import (
    GuidelineStore,
    JudgeBackend,
    JudgeDiagnostics,
    JudgeSnapshot,
    judge_checkpoint,
)
from .memory import AlertRecord, MonitoringState, PatientMemory, TrailingView
from .rhythm import ScreenConfig, classify_rhythm
from .streams import SampleWindow

RULE_URGENCY = {
    "extreme_bradycardia": "high",
    "extreme_tachycardia": "high",
    "sustained_tachycardia": "medium",
}


@dataclass(frozen=True)
class RuleConfig:
    """Thresholds for the three alerting criteria plus engine cadence knobs."""

    brady_hr_bpm: float = 40.0
    tachy_hr_bpm: float = 150.0
    sustained_ratio: float = 0.8
    sustained_hr_threshold_bpm: float = 100.0
    sustained_min_samples: int = 20
    q_min: float = 0.5
    judge_period_windows: int = 20
    dedup_mode: str = "episode"

    def __post_init__(self):
        if not 0 < self.brady_hr_bpm < self.sustained_hr_threshold_bpm < self.tachy_hr_bpm:
            raise ConfigError("need 0 < brady < sustained threshold < tachy")
        if not 0 < self.sustained_ratio <= 1:
            raise ConfigError("sustained_ratio must be in (0, 1]")
        if self.judge_period_windows < 1:
            raise ConfigError("judge_period_windows must be >= 1")
        if self.dedup_mode != "episode":
            raise ConfigError(f"unsupported dedup_mode {self.dedup_mode!r}")

    def to_dict(self) -> dict:
        return {
            "brady_hr_bpm": self.brady_hr_bpm,
            "tachy_hr_bpm": self.tachy_hr_bpm,
            "sustained_ratio": self.sustained_ratio,
            "sustained_hr_threshold_bpm": self.sustained_hr_threshold_bpm,
            "sustained_min_samples": self.sustained_min_samples,
            "q_min": self.q_min,
            "judge_period_windows": self.judge_period_windows,
            "dedup_mode": self.dedup_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RuleConfig":
        return cls(**d)


def evaluate_rules(
    state: MonitoringState, trailing: TrailingView, config: RuleConfig = RuleConfig()
) -> list[str]:
    """Which of the three criteria hold for this window (absent hr fires none)."""
    fired: list[str] = []
    hr = state.hr_bpm
    quality = state.signal_quality_score or 0.0
    if hr is not None and quality >= config.q_min:
        if hr < config.brady_hr_bpm:
            fired.append("extreme_bradycardia")
        if hr > config.tachy_hr_bpm:
            fired.append("extreme_tachycardia")
    if (
        trailing.tachycardia_ratio_5min is not None
        and trailing.tachycardia_ratio_5min >= config.sustained_ratio
        and trailing.tachycardia_sample_count >= config.sustained_min_samples
    ):
        fired.append("sustained_tachycardia")
    return fired


class EpisodeDeduper:
    """Per-rule contiguity tracker: one emission per firing run.

    A rule that also fired in the immediately preceding window is suppressed;
    a single non-firing window closes its episode.
    """

    def __init__(self):
        self._last_fired: dict[str, int] = {}

    def filter(self, fired: Iterable[str], window_index: int) -> list[str]:
        emitted = []
        for rule in fired:
            if self._last_fired.get(rule) != window_index - 1:
                emitted.append(rule)
            self._last_fired[rule] = window_index
        return emitted


@dataclass
class EngineReport:
    windows_processed: int = 0
    alerts: list[AlertRecord] = field(default_factory=list)
    judge_diagnostics: list[JudgeDiagnostics] = field(default_factory=list)
    rr_excluded: int = 0


class MonitorEngine:
    """Per-patient streaming monitor; windows must arrive in order.

    One engine per patient stream: internal trailing buffers are stateful, so
    parallelism happens across patients (one engine each), never across the
    windows of a single stream.
    """

    def __init__(
        self,
        rule_config: RuleConfig = RuleConfig(),
        screen_config: ScreenConfig = ScreenConfig(),
        judge_backend: JudgeBackend | None = None,
        guidelines: GuidelineStore | None = None,
        rr_band: tuple[float, float] = DEFAULT_RR_BAND,
        rhythm_horizon_s: float = 300.0,
    ):
        self.rule_config = rule_config
        self.screen_config = screen_config
        self.judge_backend = judge_backend
        self.guidelines = guidelines or (GuidelineStore.bundled() if judge_backend else None)
        self.rr_band = rr_band
        self.rhythm_horizon_s = rhythm_horizon_s
        self._deduper = EpisodeDeduper()
        self._trailing_hr: deque[tuple[float, float]] = deque()
        # (interval end time, rr) pairs feeding the trailing rhythm screen
        self._trailing_rr: deque[tuple[float, float]] = deque()
        self._af_run_s: float = 0.0
        self.report = EngineReport()

    # -- helpers ------------------------------------------------------------

    def _trailing_view(self, now_s: float, hr: float | None) -> TrailingView:
        if hr is not None:
            self._trailing_hr.append((now_s, hr))
        cutoff = now_s - 300.0
        while self._trailing_hr and self._trailing_hr[0][0] <= cutoff:
            self._trailing_hr.popleft()
        hrs = [v for _, v in self._trailing_hr]
        if not hrs:
            return TrailingView(None, None, 0)
        thr = self.rule_config.sustained_hr_threshold_bpm
        return TrailingView(
            sum(hrs) / len(hrs),
            sum(1 for v in hrs if v > thr) / len(hrs),
            len(hrs),
        )

    def _trailing_rhythm(self, window: SampleWindow, rr_pairs: list[tuple[float, float]]) -> str:
        """Screen the trailing RR buffer; short buffers come back unknown."""
        self._trailing_rr.extend(rr_pairs)
        cutoff = window.end_s - self.rhythm_horizon_s
        while self._trailing_rr and self._trailing_rr[0][0] <= cutoff:
            self._trailing_rr.popleft()
        rr = [v for _, v in self._trailing_rr]
        if len(rr) < 30:
            return "unknown"
        feats = WindowFeatures.from_rr(RRSeries(peak_times_s=[], rr_s=rr), quality=1.0)
        return classify_rhythm(feats, self.screen_config).rhythm_class

    # -- main step -----------------------------------------------------------

    def process_window(
        self, memory: PatientMemory, window: SampleWindow
    ) -> list[AlertRecord]:
        """Run one window through the full pipeline; returns emitted alerts."""
        peaks = detect_peaks(window)
        rr, excluded = derive_rr(
            peaks.peak_times_s, self.rr_band, (window.window_index, window.window_index)
        )
        self.report.rr_excluded += excluded
        raw_rr = [b - a for a, b in zip(peaks.peak_times_s, peaks.peak_times_s[1:])]
        quality = signal_quality(window, raw_rr, self.rr_band)
        feats = WindowFeatures.from_rr(rr, quality=quality)

        rr_pairs = list(zip(rr.peak_times_s[1:], rr.rr_s)) if len(rr.rr_s) == rr.n_beats - 1 else [
            (window.end_s, v) for v in rr.rr_s
        ]
        trailing_class = self._trailing_rhythm(window, rr_pairs)
        if trailing_class == "AF":
            self._af_run_s += window.duration_s
        else:
            self._af_run_s = 0.0

        state = MonitoringState(
            state_id=f"ms-{window.patient_id}-{window.window_index:06d}",
            patient_id=window.patient_id,
            dataset=window.dataset,
            modality=window.modality,
            window_index=window.window_index,
            window_start_s=window.start_s,
            window_duration_s=window.duration_s,
            hr_bpm=feats.hr_bpm,
            mean_hr_bpm=feats.hr_bpm,
            sdnn_ms=feats.sdnn_ms,
            rmssd_ms=feats.rmssd_ms,
            signal_quality_score=feats.signal_quality_score,
        )
        trailing = self._trailing_view(state.window_end_s, state.hr_bpm)
        state.mean_hr_5min = trailing.mean_hr_5min
        state.tachycardia_ratio_5min = trailing.tachycardia_ratio_5min

        fired = evaluate_rules(state, trailing, self.rule_config)
        emitted_rules = self._deduper.filter(fired, window.window_index)
        alerts = [
            AlertRecord(
                patient_id=window.patient_id,
                window_index=window.window_index,
                time_s=window.start_s,
                fired_rule=rule,
                urgency=RULE_URGENCY[rule],
                reason=_rule_reason(rule, state, trailing, self.rule_config),
                advice="Please consult a healthcare professional if this persists.",
            )
            for rule in emitted_rules
        ]

        if (
            self.judge_backend is not None
            and (window.window_index + 1) % self.rule_config.judge_period_windows == 0
        ):
            snapshot = JudgeSnapshot(
                hr_bpm=state.hr_bpm,
                rhythm_class=trailing_class if trailing_class != "unknown" else None,
                af_episode_duration_s=self._af_run_s if self._af_run_s > 0 else None,
                tachycardia_ratio_5min=trailing.tachycardia_ratio_5min,
                tachycardia_sample_count=trailing.tachycardia_sample_count,
            )
            decision, diag = judge_checkpoint(
                snapshot, fired, self.guidelines, self.judge_backend
            )
            if diag is not None:
                self.report.judge_diagnostics.append(diag)
            if decision.intervene:
                if self._deduper.filter(["judge_intervention"], window.window_index):
                    alerts.append(
                        AlertRecord(
                            patient_id=window.patient_id,
                            window_index=window.window_index,
                            time_s=window.start_s,
                            fired_rule="judge_intervention",
                            urgency=decision.urgency,
                            reason=decision.reason,
                            advice=decision.advice,
                            cited_sections=decision.cited_sections,
                        )
                    )

        if alerts:
            state.alert_triggered = True
            state.alert_rule = alerts[0].fired_rule
            state.alert_reason = alerts[0].reason
            state.urgency = alerts[0].urgency

        memory.update(state, alerts, raw_window=window)
        self.report.windows_processed += 1
        self.report.alerts.extend(alerts)
        return alerts

    def replay(
        self, windows: Iterable[SampleWindow], memory: PatientMemory | None = None
    ) -> tuple[PatientMemory, list[AlertRecord]]:
        """Process an ordered window stream start to finish."""
        mem = memory if memory is not None else PatientMemory()
        all_alerts: list[AlertRecord] = []
        for window in windows:
            all_alerts.extend(self.process_window(mem, window))
        return mem, all_alerts


def _rule_reason(
    rule: str, state: MonitoringState, trailing: TrailingView, cfg: RuleConfig
) -> str:
    if rule == "extreme_bradycardia":
        return f"Heart rate {state.hr_bpm:.1f} bpm below {cfg.brady_hr_bpm:.0f} bpm."
    if rule == "extreme_tachycardia":
        return f"Heart rate {state.hr_bpm:.1f} bpm above {cfg.tachy_hr_bpm:.0f} bpm."
    ratio = trailing.tachycardia_ratio_5min or 0.0
    return (
        f"Rate above {cfg.sustained_hr_threshold_bpm:.0f} bpm for "
        f"{100 * ratio:.0f}% of the trailing 5 minutes "
        f"({trailing.tachycardia_sample_count} samples)."
    )
