"""QA target vocabulary shared by the question generator and the responder.

Both sides must derive answers with byte-identical rules, so the bucket maps
and threshold parsing live here and nowhere else.
"""
from __future__ import annotations

import re

_THRESHOLD_RE = re.compile(r"^(.*_above)_(\d+(?:\.\d+)?)$")

HR_CATEGORY_OPTIONS = ["low", "normal", "elevated"]
BURDEN_OPTIONS = ["not at all", "occasionally", "often", "most of the time"]
TREND_OPTIONS = ["up", "down", "flat"]


def parse_threshold_target(target: str) -> tuple[str, float | None]:
    """Split targets like 'hr_above_100' into ('hr_above', 100.0)."""
    m = _THRESHOLD_RE.match(target)
    if m:
        return m.group(1), float(m.group(2))
    return target, None


def hr_category(hr_bpm: float) -> str:
    if hr_bpm < 60.0:
        return "low"
    if hr_bpm <= 100.0:
        return "normal"
    return "elevated"


def burden_bucket(fraction: float) -> str:
    """Categorical burden label for a fraction in [0, 1].

    0 -> not at all; (0, 0.25] -> occasionally; (0.25, 0.6] -> often;
    above 0.6 -> most of the time.
    """
    if fraction <= 0.0:
        return BURDEN_OPTIONS[0]
    if fraction <= 0.25:
        return BURDEN_OPTIONS[1]
    if fraction <= 0.6:
        return BURDEN_OPTIONS[2]
    return BURDEN_OPTIONS[3]


def format_number(value: float) -> str:
    """One decimal place, integer-valued numbers without the trailing .0."""
    text = f"{value:.1f}"
    return text[:-2] if text.endswith(".0") else text


def yes_no(flag: bool) -> str:
    return "yes" if flag else "no"
