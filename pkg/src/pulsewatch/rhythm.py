"""Window-level rhythm screening from RR irregularity features.

Classes: N (regular, rate in range), AF (all three irregularity features in
their AF zones), Other (anything else), unknown (insufficient features or
quality below the gate). Atrial flutter has no dedicated detector and falls
under Other.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from .features import WindowFeatures

RHYTHM_CLASSES = ("N", "AF", "Other", "unknown")


@dataclass(frozen=True)
class ScreenConfig:
    """Thresholds for the three-feature AF screen plus the quality gate."""

    tau_cv: float = 0.10
    tau_entropy: float = 0.70
    tpr_lo: float = 0.54
    tpr_hi: float = 0.77
    q_min: float = 0.5
    hr_n_lo: float = 40.0
    hr_n_hi: float = 150.0

    def to_dict(self) -> dict:
        return {
            "tau_cv": self.tau_cv,
            "tau_entropy": self.tau_entropy,
            "tpr_lo": self.tpr_lo,
            "tpr_hi": self.tpr_hi,
            "q_min": self.q_min,
            "hr_n_lo": self.hr_n_lo,
            "hr_n_hi": self.hr_n_hi,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScreenConfig":
        return cls(**{k: float(v) for k, v in d.items()})

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ScreenConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class RhythmAssessment:
    rhythm_class: str
    evidence: dict
    thresholds_used: dict


def classify_rhythm(features: WindowFeatures, config: ScreenConfig = ScreenConfig()) -> RhythmAssessment:
    """Classify one window's rhythm from its irregularity features.

    AF requires cv >= tau_cv AND entropy >= tau_entropy AND tpr inside
    [tpr_lo, tpr_hi]; N requires all three strictly on the regular side with
    heart rate inside [hr_n_lo, hr_n_hi]. Missing features or quality below
    q_min yield unknown.
    """
    evidence = {
        "cv": features.cv,
        "delta_rr_entropy": features.delta_rr_entropy,
        "turning_point_ratio": features.turning_point_ratio,
        "n_beats": features.n_beats,
    }
    thresholds = config.to_dict()
    cv = features.cv
    ent = features.delta_rr_entropy
    tpr = features.turning_point_ratio
    if (
        cv is None
        or ent is None
        or tpr is None
        or features.signal_quality_score < config.q_min
    ):
        return RhythmAssessment("unknown", evidence, thresholds)

    af = cv >= config.tau_cv and ent >= config.tau_entropy and config.tpr_lo <= tpr <= config.tpr_hi
    if af:
        return RhythmAssessment("AF", evidence, thresholds)

    hr = features.hr_bpm
    regular = cv < config.tau_cv and ent < config.tau_entropy and not (
        config.tpr_lo <= tpr <= config.tpr_hi
    )
    if regular and hr is not None and config.hr_n_lo <= hr <= config.hr_n_hi:
        return RhythmAssessment("N", evidence, thresholds)
    return RhythmAssessment("Other", evidence, thresholds)


@dataclass
class TuneResult:
    config: ScreenConfig
    balanced_accuracy: float | None
    warning: bool = False
    grid_evaluated: int = 0


def _screen_score(
    labeled: list[tuple[WindowFeatures, str]], config: ScreenConfig
) -> tuple[float, float, float]:
    """(balanced accuracy, sensitivity, specificity) of the AF-vs-rest screen."""
    tp = fp = tn = fn = 0
    for feats, label in labeled:
        pred_af = classify_rhythm(feats, config).rhythm_class == "AF"
        truth_af = label == "AF"
        if truth_af and pred_af:
            tp += 1
        elif truth_af:
            fn += 1
        elif pred_af:
            fp += 1
        else:
            tn += 1
    sens = tp / (tp + fn) if (tp + fn) else None
    spec = tn / (tn + fp) if (tn + fp) else None
    defined = [v for v in (sens, spec) if v is not None]
    bal = sum(defined) / len(defined) if defined else 0.0
    return bal, (sens if sens is not None else 0.0), (spec if spec is not None else 0.0)


def tune_thresholds(
    labeled_dev: list[tuple[WindowFeatures, str]],
    cv_grid: Iterable[float] | None = None,
    entropy_grid: Iterable[float] | None = None,
    base: ScreenConfig = ScreenConfig(),
) -> TuneResult:
    """Grid-search tau_cv x tau_entropy maximizing balanced accuracy.

    Deterministic: a fixed grid, ties broken toward higher specificity, then
    toward higher thresholds. An empty development set returns the defaults
    with a warning flag.
    """
    if not labeled_dev:
        return TuneResult(base, None, warning=True)
    if cv_grid is None:
        cv_grid = [round(0.02 + 0.01 * i, 2) for i in range(29)]  # 0.02 .. 0.30
    if entropy_grid is None:
        entropy_grid = [round(0.30 + 0.05 * i, 2) for i in range(14)]  # 0.30 .. 0.95

    best: tuple | None = None
    best_cfg = base
    n_eval = 0
    for tau_cv in cv_grid:
        for tau_h in entropy_grid:
            cfg = ScreenConfig(
                tau_cv=tau_cv,
                tau_entropy=tau_h,
                tpr_lo=base.tpr_lo,
                tpr_hi=base.tpr_hi,
                q_min=base.q_min,
                hr_n_lo=base.hr_n_lo,
                hr_n_hi=base.hr_n_hi,
            )
            bal, _sens, spec = _screen_score(labeled_dev, cfg)
            key = (bal, spec, tau_cv, tau_h)
            n_eval += 1
            if best is None or key > best:
                best = key
                best_cfg = cfg
    return TuneResult(best_cfg, best[0] if best else None, warning=False, grid_evaluated=n_eval)
