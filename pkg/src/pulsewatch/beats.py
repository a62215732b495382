"""Beat detection and RR-interval derivation.

The detector is a derivative -> square -> moving-window-integration pipeline
with an adaptive threshold, run on the detrended signal. The same pipeline
serves PPG with a longer integration window. It is deliberately simple,
dependency-free, and exactly reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .streams import SampleWindow

# Physiologically plausible beat-to-beat interval band, seconds (30-200 bpm).
DEFAULT_RR_BAND = (0.3, 2.0)

MIN_FS = {"ECG": 50.0, "PPG": 25.0}
_REFRACTORY_S = 0.25
_INTEGRATION_S = {"ECG": 0.15, "PPG": 0.30}
_REFINE_S = {"ECG": 0.08, "PPG": 0.15}


@dataclass
class PeakResult:
    """Detected peak instants for one window plus a gross-quality flag."""

    peak_times_s: list[float]
    flat_or_saturated: bool = False
    saturated_fraction: float = 0.0


@dataclass
class RRSeries:
    """Beat-to-beat intervals derived from detected peaks.

    When built straight from peaks (`from_peaks`) rr_s are the successive
    differences and len(rr_s) == len(peak_times_s) - 1. After plausibility
    filtering (`derive_rr`) rr_s keeps only in-band intervals, so the length
    relation holds exactly when nothing was excluded.
    """

    peak_times_s: list[float] = field(default_factory=list)
    rr_s: list[float] = field(default_factory=list)
    source_window_range: tuple[int, int] | None = None

    @classmethod
    def from_peaks(
        cls, peaks: list[float], window_range: tuple[int, int] | None = None
    ) -> "RRSeries":
        _check_increasing(peaks)
        rr = [b - a for a, b in zip(peaks, peaks[1:])]
        return cls(peak_times_s=list(peaks), rr_s=rr, source_window_range=window_range)

    @property
    def n_beats(self) -> int:
        return len(self.peak_times_s)

    def __len__(self) -> int:
        return len(self.rr_s)


def _check_increasing(peaks) -> None:
    for a, b in zip(peaks, peaks[1:]):
        if b <= a:
            raise ConfigError("peak times must be strictly increasing")


def derive_rr(
    peaks: list[float],
    band: tuple[float, float] = DEFAULT_RR_BAND,
    window_range: tuple[int, int] | None = None,
) -> tuple[RRSeries, int]:
    """Successive differences of peak times, filtered to the plausibility band.

    Out-of-band intervals (missed or double detections) are dropped and
    tallied; the anchor moves to the later peak so a long gap costs exactly
    one interval. Fewer than 2 peaks yields an empty series.
    """
    _check_increasing(peaks)
    lo, hi = band
    if not 0 < lo < hi:
        raise ConfigError("invalid RR plausibility band")
    rr: list[float] = []
    excluded = 0
    for a, b in zip(peaks, peaks[1:]):
        dt = b - a
        if lo <= dt <= hi:
            rr.append(dt)
        else:
            excluded += 1
    return (
        RRSeries(peak_times_s=list(peaks), rr_s=rr, source_window_range=window_range),
        excluded,
    )


# ---------------------------------------------------------------------------
# Peak detection


def _moving_mean(x: np.ndarray, width: int) -> np.ndarray:
    width = max(1, width)
    kernel = np.ones(width) / width
    return np.convolve(x, kernel, mode="same")


def saturated_fraction(samples: np.ndarray, fs: float) -> float:
    """Fraction of samples pinned at the amplitude rail in long runs.

    Clipping plateaus sit at the extreme of largest absolute amplitude; a
    quiet baseline at zero does not count, nor do isolated extrema (every
    window has a max). A run of at least 50 ms at a rail indicates clipping.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        return 0.0
    vmax, vmin = x.max(), x.min()
    if vmax == vmin:
        return 1.0
    min_run = max(2, int(round(0.05 * fs)))
    peak_abs = max(abs(vmax), abs(vmin))
    rails = [v for v in (vmax, vmin) if abs(v) >= peak_abs - 1e-12]
    pinned = np.isin(x, rails)
    count = 0
    run = 0
    for flag in pinned:
        if flag:
            run += 1
        else:
            if run >= min_run:
                count += run
            run = 0
    if run >= min_run:
        count += run
    return count / x.size


def detect_peaks(window: SampleWindow) -> PeakResult:
    """Locate beat instants inside one window.

    Returns times within [start_s, start_s + duration_s), strictly increasing,
    and a flag for flat-line / heavily clipped windows (those yield no peaks
    but are not errors). Pure function of the window contents.
    """
    window.validate()
    min_fs = MIN_FS[window.modality]
    if window.fs < min_fs:
        raise ConfigError(
            f"fs {window.fs} Hz below minimum {min_fs} Hz for {window.modality}"
        )
    x = np.asarray(window.samples, dtype=float)
    fs = window.fs

    if np.ptp(x) < 1e-9:
        return PeakResult([], flat_or_saturated=True, saturated_fraction=1.0)
    sat = saturated_fraction(x, fs)
    if sat > 0.5:
        return PeakResult([], flat_or_saturated=True, saturated_fraction=sat)

    detrended = x - _moving_mean(x, int(round(0.6 * fs)))
    deriv = np.diff(detrended, prepend=detrended[0])
    energy = deriv * deriv
    integ = _moving_mean(energy, int(round(_INTEGRATION_S[window.modality] * fs)))

    # Adaptive threshold between the noise floor and the beat energy.
    thr = max(0.25 * float(integ.max()), 2.0 * float(integ.mean()))
    above = integ > thr

    refractory = int(round(_REFRACTORY_S * fs))
    refine = int(round(_REFINE_S[window.modality] * fs))
    candidates: list[int] = []
    i = 0
    n = x.size
    while i < n:
        if not above[i]:
            i += 1
            continue
        j = i
        while j < n and above[j]:
            j += 1
        candidates.append(i + int(np.argmax(integ[i:j])))
        i = j

    peaks: list[int] = []
    for c in candidates:
        lo, hi = max(0, c - refine), min(n, c + refine + 1)
        p = lo + int(np.argmax(detrended[lo:hi]))
        if peaks and p - peaks[-1] < refractory:
            # Keep the taller of the colliding pair.
            if detrended[p] > detrended[peaks[-1]]:
                peaks[-1] = p
            continue
        peaks.append(p)

    times = [window.start_s + p / fs for p in peaks]
    times = [t for t in times if t < window.start_s + window.duration_s]
    return PeakResult(times, flat_or_saturated=False, saturated_fraction=sat)


def detect_peaks_over(windows: list[SampleWindow]) -> tuple[list[float], PeakResult]:
    """Concatenate per-window detections across an ordered window range.

    Windows tile the timeline, so cross-boundary differences of the merged
    peak list are valid RR intervals.
    """
    merged: list[float] = []
    any_flag = False
    worst_sat = 0.0
    for w in windows:
        res = detect_peaks(w)
        any_flag = any_flag or res.flat_or_saturated
        worst_sat = max(worst_sat, res.saturated_fraction)
        merged.extend(res.peak_times_s)
    return merged, PeakResult(merged, any_flag, worst_sat)
