"""Streaming ECG/PPG monitoring engine with a tool-driven QA agent."""

__version__ = "0.1.0"

from .beats import RRSeries, derive_rr, detect_peaks
from .engine import MonitorEngine, RuleConfig, evaluate_rules
from .features import WindowFeatures
from .memory import AlertRecord, MonitoringState, PatientMemory, leakage_filter
from .rhythm import RhythmAssessment, ScreenConfig, classify_rhythm
from .streams import SampleWindow, StreamScript, segment_stream, synthesize_stream

__all__ = [
    "__version__",
    "AlertRecord",
    "MonitorEngine",
    "MonitoringState",
    "PatientMemory",
    "RRSeries",
    "RhythmAssessment",
    "RuleConfig",
    "SampleWindow",
    "ScreenConfig",
    "StreamScript",
    "WindowFeatures",
    "classify_rhythm",
    "derive_rr",
    "detect_peaks",
    "evaluate_rules",
    "leakage_filter",
    "segment_stream",
    "synthesize_stream",
]
