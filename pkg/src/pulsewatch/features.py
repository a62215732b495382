"""Deterministic rhythm features over RR interval sequences.

Insufficient data always yields None, never a numeric zero. Standard
deviations are population (not sample) statistics: a window's beats are the
whole observed population.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .beats import DEFAULT_RR_BAND, RRSeries, saturated_fraction
from .streams import SampleWindow

ENTROPY_BINS = 16
# Fixed binning range for successive RR differences, seconds. A fixed range
# keeps entropy comparable across windows; overflow clamps to the edge bins.
ENTROPY_RANGE_S = (-0.6, 0.6)
TACHY_HR_THRESHOLD_BPM = 100.0


def heart_rate(rr_s: Sequence[float]) -> float | None:
    """Mean rate in bpm; needs at least one interval."""
    if len(rr_s) < 1:
        return None
    return 60.0 / (sum(rr_s) / len(rr_s))


def sdnn(rr_s: Sequence[float]) -> float | None:
    """Population standard deviation of RR, in ms; needs >= 2 intervals."""
    if len(rr_s) < 2:
        return None
    return float(np.std(np.asarray(rr_s, dtype=float))) * 1000.0


def rmssd(rr_s: Sequence[float]) -> float | None:
    """Root mean square of successive differences, in ms; needs >= 3 intervals."""
    if len(rr_s) < 3:
        return None
    d = np.diff(np.asarray(rr_s, dtype=float))
    return float(np.sqrt(np.mean(d * d))) * 1000.0


def coeff_variation(rr_s: Sequence[float]) -> float | None:
    """Population std over mean (unitless); needs >= 2 intervals."""
    if len(rr_s) < 2:
        return None
    arr = np.asarray(rr_s, dtype=float)
    return float(np.std(arr) / np.mean(arr))


def delta_rr_entropy(rr_s: Sequence[float], bins: int = ENTROPY_BINS) -> float | None:
    """Normalized Shannon entropy of successive RR differences in [0, 1].

    Differences are histogrammed into `bins` equal-width bins over the fixed
    ENTROPY_RANGE_S span and H = -sum(p log p) / log(bins).
    """
    if len(rr_s) < 3:
        return None
    if bins < 2:
        raise ValueError("bins must be >= 2")
    d = np.diff(np.asarray(rr_s, dtype=float))
    lo, hi = ENTROPY_RANGE_S
    d = np.clip(d, lo, hi)
    counts, _ = np.histogram(d, bins=bins, range=(lo, hi))
    p = counts[counts > 0] / d.size
    h = -float(np.sum(p * np.log(p)))
    return h / math.log(bins)


def turning_point_ratio(rr_s: Sequence[float]) -> float | None:
    """Fraction of interior points that are strict local extrema.

    Ties (zero product of neighbour slopes) are not turning points. For an
    iid random sequence the expectation is 2/3.
    """
    n = len(rr_s)
    if n < 3:
        return None
    arr = np.asarray(rr_s, dtype=float)
    prod = (arr[1:-1] - arr[:-2]) * (arr[2:] - arr[1:-1])
    return float(np.count_nonzero(prod < 0)) / (n - 2)


def signal_quality(
    window: SampleWindow,
    raw_rr_s: Sequence[float],
    band: tuple[float, float] = DEFAULT_RR_BAND,
) -> float:
    """Product of the in-band RR fraction and (1 - saturated fraction), in [0, 1].

    `raw_rr_s` must be the unfiltered successive differences: the in-band
    fraction is what the plausibility filter would keep. No usable beats
    scores 0.
    """
    lo, hi = band
    if len(raw_rr_s) == 0:
        in_band = 0.0
    else:
        in_band = sum(1 for v in raw_rr_s if lo <= v <= hi) / len(raw_rr_s)
    sat = saturated_fraction(np.asarray(window.samples, dtype=float), window.fs)
    score = in_band * (1.0 - sat)
    return min(1.0, max(0.0, score))


def tachycardia_trailing(
    hr_samples: Sequence[tuple[float, float]],
    now_s: float,
    horizon_s: float = 300.0,
    threshold_bpm: float = TACHY_HR_THRESHOLD_BPM,
) -> tuple[float | None, int]:
    """Fraction of trailing (time, hr) samples above threshold, plus the count.

    Only samples with time in (now_s - horizon_s, now_s] enter; with no
    samples the ratio is None and the count 0.
    """
    kept = [hr for t, hr in hr_samples if now_s - horizon_s < t <= now_s]
    if not kept:
        return None, 0
    above = sum(1 for hr in kept if hr > threshold_bpm)
    return above / len(kept), len(kept)


@dataclass
class WindowFeatures:
    """Per-window feature bundle; absent features are None, never zero."""

    hr_bpm: float | None = None
    sdnn_ms: float | None = None
    rmssd_ms: float | None = None
    cv: float | None = None
    delta_rr_entropy: float | None = None
    turning_point_ratio: float | None = None
    signal_quality_score: float = 0.0
    n_beats: int = 0

    @classmethod
    def from_rr(
        cls,
        rr: RRSeries,
        *,
        quality: float = 1.0,
        entropy_bins: int = ENTROPY_BINS,
    ) -> "WindowFeatures":
        rr_s = rr.rr_s
        n_beats = rr.n_beats if rr.n_beats else (len(rr_s) + 1 if rr_s else 0)
        return cls(
            hr_bpm=heart_rate(rr_s),
            sdnn_ms=sdnn(rr_s),
            rmssd_ms=rmssd(rr_s),
            cv=coeff_variation(rr_s),
            delta_rr_entropy=delta_rr_entropy(rr_s, bins=entropy_bins),
            turning_point_ratio=turning_point_ratio(rr_s),
            signal_quality_score=quality,
            n_beats=n_beats,
        )

    def to_dict(self) -> dict:
        return {
            "hr_bpm": self.hr_bpm,
            "sdnn_ms": self.sdnn_ms,
            "rmssd_ms": self.rmssd_ms,
            "cv": self.cv,
            "delta_rr_entropy": self.delta_rr_entropy,
            "turning_point_ratio": self.turning_point_ratio,
            "signal_quality_score": self.signal_quality_score,
            "n_beats": self.n_beats,
        }
