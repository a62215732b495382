"""Periodic alert-judgement checkpoint over a structured health snapshot.

The judge sees a five-field snapshot plus guideline summaries, may fetch at
most three full guideline sections, and must answer with a single JSON
decision object. Every failure mode (timeout, malformed output, banned
phrasing) degrades to non-intervention with a diagnostics record: monitoring
never blocks and never alerts on a broken decision.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Protocol, Sequence

from .errors import BackendError, BackendTimeout, SchemaError

JUDGE_TOOL_BUDGET = 3
JUDGE_URGENCIES = ("none", "low", "medium", "high", "critical")

# Phrases a consumer monitoring product must never emit in user advice.
ADVICE_BANNED_PHRASES = (
    "medication",
    "prescription",
    "prescribe",
    "dosage",
    "diagnos",
    "stop taking",
    "start taking",
    "take your",
)


@dataclass
class JudgeSnapshot:
    """Exactly the five structured inputs the judge receives."""

    hr_bpm: float | None
    rhythm_class: str | None
    af_episode_duration_s: float | None
    tachycardia_ratio_5min: float | None
    tachycardia_sample_count: int

    def to_dict(self) -> dict:
        return {
            "hr_bpm": self.hr_bpm,
            "rhythm_class": self.rhythm_class,
            "af_episode_duration_s": self.af_episode_duration_s,
            "tachycardia_ratio_5min": self.tachycardia_ratio_5min,
            "tachycardia_sample_count": self.tachycardia_sample_count,
        }


@dataclass
class JudgeDecision:
    intervene: bool
    urgency: str = "none"
    reason: str = ""
    advice: str = ""
    cited_sections: list[dict] = field(default_factory=list)

    def validate(self) -> None:
        if self.urgency not in JUDGE_URGENCIES:
            raise SchemaError(f"unknown urgency {self.urgency!r}")
        if not self.intervene:
            if self.reason or self.advice or self.cited_sections:
                raise SchemaError("non-intervention must carry empty fields")
            if self.urgency != "none":
                raise SchemaError("non-intervention urgency must be 'none'")
        else:
            if self.urgency == "none":
                raise SchemaError("intervention needs a real urgency tier")
            low = self.advice.lower()
            for banned in ADVICE_BANNED_PHRASES:
                if banned in low:
                    raise SchemaError(f"advice contains banned phrasing: {banned!r}")
        for ref in self.cited_sections:
            if set(ref) != {"guideline_id", "section_id"}:
                raise SchemaError("cited_sections entries need guideline_id and section_id")

    @classmethod
    def non_intervention(cls) -> "JudgeDecision":
        return cls(intervene=False)

    @classmethod
    def from_json_text(cls, text: str) -> "JudgeDecision":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"decision is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise SchemaError("decision must be a JSON object")
        try:
            dec = cls(
                intervene=bool(d["intervene"]),
                urgency=str(d.get("urgency", "none")),
                reason=str(d.get("reason", "")),
                advice=str(d.get("advice", "")),
                cited_sections=list(d.get("cited_sections", [])),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"bad decision object: {exc}") from exc
        dec.validate()
        return dec


@dataclass
class JudgeDiagnostics:
    """Record of a degraded judge invocation."""

    kind: str  # timeout | malformed | backend_error
    detail: str
    rejected_tool_calls: int = 0


# ---------------------------------------------------------------------------
# Guideline store


class GuidelineStore:
    """Local corpus of guideline sections with summaries and full text."""

    def __init__(self, sections: Sequence[dict]):
        self._by_key: dict[tuple[str, str], dict] = {}
        for sec in sections:
            key = (sec["guideline_id"], sec["section_id"])
            if key in self._by_key:
                raise SchemaError(f"duplicate guideline section {key}")
            self._by_key[key] = sec

    @classmethod
    def load(cls, path) -> "GuidelineStore":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    @classmethod
    def bundled(cls) -> "GuidelineStore":
        text = resources.files("pulsewatch").joinpath("data/guidelines.json").read_text()
        return cls(json.loads(text))

    def summaries(self) -> list[dict]:
        return [
            {
                "guideline_id": gid,
                "section_id": sid,
                "summary": sec["summary"],
            }
            for (gid, sid), sec in sorted(self._by_key.items())
        ]

    def read_section(self, guideline_id: str, section_id: str) -> dict:
        sec = self._by_key.get((guideline_id, section_id))
        if sec is None:
            return {"error": f"no such section {guideline_id}/{section_id}"}
        return {
            "guideline_id": guideline_id,
            "section_id": section_id,
            "full_text": sec["full_text"],
        }

    def first_section_key(self) -> tuple[str, str] | None:
        keys = sorted(self._by_key)
        return keys[0] if keys else None


# ---------------------------------------------------------------------------
# Backends


class JudgeBackend(Protocol):
    def decide(
        self,
        snapshot: JudgeSnapshot,
        fired_rules: Sequence[str],
        guideline_summaries: Sequence[dict],
        read_section: Callable[[str, str], dict],
    ) -> str:
        """Return the decision as JSON text; may call read_section."""
        ...


class MockJudgeBackend:
    """Deterministic offline judge.

    Policy: intervene iff any rule fired this window, or the running AF
    episode has lasted more than `af_alert_after_s` seconds. Cites one
    guideline section per intervention.
    """

    def __init__(self, af_alert_after_s: float = 300.0):
        self.af_alert_after_s = af_alert_after_s

    def decide(self, snapshot, fired_rules, guideline_summaries, read_section) -> str:
        cited: list[dict] = []
        if guideline_summaries:
            first = guideline_summaries[0]
            read_section(first["guideline_id"], first["section_id"])
            cited = [
                {"guideline_id": first["guideline_id"], "section_id": first["section_id"]}
            ]
        if fired_rules:
            extreme = any(r.startswith("extreme_") for r in fired_rules)
            decision = {
                "intervene": True,
                "urgency": "high" if extreme else "medium",
                "reason": f"Rule layer fired: {', '.join(sorted(fired_rules))}.",
                "advice": "Please consult a healthcare professional soon.",
                "cited_sections": cited,
            }
        elif (
            snapshot.af_episode_duration_s is not None
            and snapshot.af_episode_duration_s > self.af_alert_after_s
        ):
            minutes = snapshot.af_episode_duration_s / 60.0
            decision = {
                "intervene": True,
                "urgency": "medium",
                "reason": f"Irregular rhythm has persisted for {minutes:.0f} minutes.",
                "advice": "Consider contacting a clinician to review this episode.",
                "cited_sections": cited,
            }
        else:
            decision = {
                "intervene": False,
                "urgency": "none",
                "reason": "",
                "advice": "",
                "cited_sections": [],
            }
        return json.dumps(decision)


JUDGE_PROMPT_TEMPLATE = """You review one snapshot of a wearer's cardiac state and decide whether the
monitoring agent should alert them. A deterministic rule layer already
handles clear-cut extremes; you cover the context-dependent remainder.

## Snapshot
{snapshot_json}

Rules fired this window: {fired_rules}

## Tool
You may call read_guideline_section(guideline_id, section_id) to fetch the
full text of a section; executive summaries are below. Use at most
{tool_budget} calls per decision. To call it, reply with exactly:
{{"tool_call": {{"name": "read_guideline_section", "args": {{"guideline_id": "...", "section_id": "..."}}}}}}

## Required answer
A single JSON object, nothing else:
{{"intervene": true|false, "urgency": "none"|"low"|"medium"|"high"|"critical",
 "reason": "...", "advice": "...",
 "cited_sections": [{{"guideline_id": "...", "section_id": "..."}}]}}

Urgency tiers: "low" is purely informational; "medium" means consider seeing
a clinician soon; "high" means see a clinician promptly; "critical" means
seek immediate medical attention. Prefer the lowest tier the evidence
supports. When intervene is false, leave reason and advice empty and
cited_sections as [].

This is a consumer monitoring product, not a diagnostic device: never name a
diagnosis, never advise changing any treatment, and cap any recommendation at
"consult a healthcare professional". If the state is unremarkable or the
evidence is thin, do not alert; needless alerts are a harm in themselves.

## Guideline summaries
{guideline_summaries}
"""


class HttpJudgeBackend:
    """Judge over an HTTP text-completion endpoint, temperature pinned to 0.

    The conversation loop serves tool-call replies through read_section until
    the model produces its final JSON decision.
    """

    def __init__(
        self,
        endpoint_url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        timeout_s: float = 30.0,
        max_rounds: int = 6,
    ):
        self.endpoint_url = endpoint_url or os.environ.get("PULSEWATCH_LLM_URL", "")
        self.api_key = api_key or os.environ.get("PULSEWATCH_LLM_KEY", "")
        self.model = model or os.environ.get("PULSEWATCH_LLM_MODEL", "")
        self.timeout_s = timeout_s
        self.max_rounds = max_rounds

    def _complete(self, prompt: str) -> str:
        import requests

        if not self.endpoint_url:
            raise BackendError("no endpoint configured (PULSEWATCH_LLM_URL)")
        try:
            resp = requests.post(
                self.endpoint_url,
                json={"model": self.model, "prompt": prompt, "temperature": 0},
                headers={"Authorization": f"Bearer {self.api_key}"} if self.api_key else {},
                timeout=self.timeout_s,
            )
        except requests.Timeout as exc:
            raise BackendTimeout(str(exc)) from exc
        except requests.RequestException as exc:
            raise BackendError(str(exc)) from exc
        if resp.status_code != 200:
            raise BackendError(f"endpoint returned {resp.status_code}")
        body = resp.json()
        try:
            return body["choices"][0]["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"unexpected completion shape: {exc}") from exc

    def decide(self, snapshot, fired_rules, guideline_summaries, read_section) -> str:
        prompt = JUDGE_PROMPT_TEMPLATE.format(
            snapshot_json=json.dumps(snapshot.to_dict()),
            fired_rules=json.dumps(sorted(fired_rules)),
            tool_budget=JUDGE_TOOL_BUDGET,
            guideline_summaries=json.dumps(guideline_summaries, indent=1),
        )
        transcript = prompt
        for _ in range(self.max_rounds):
            reply = self._complete(transcript)
            call = _parse_tool_call(reply)
            if call is None:
                return reply
            result = read_section(call.get("guideline_id", ""), call.get("section_id", ""))
            transcript += f"\n{reply}\nTool result: {json.dumps(result)}\n"
        raise BackendError("judge conversation exceeded max rounds")


def _parse_tool_call(reply: str) -> dict | None:
    try:
        d = json.loads(reply)
    except json.JSONDecodeError:
        return None
    if isinstance(d, dict) and "tool_call" in d:
        call = d["tool_call"]
        if isinstance(call, dict) and call.get("name") == "read_guideline_section":
            args = call.get("args", {})
            return args if isinstance(args, dict) else {}
        return {}
    return None


# ---------------------------------------------------------------------------
# Checkpoint


def judge_checkpoint(
    snapshot: JudgeSnapshot,
    fired_rules: Sequence[str],
    store: GuidelineStore,
    backend: JudgeBackend,
    tool_budget: int = JUDGE_TOOL_BUDGET,
) -> tuple[JudgeDecision, JudgeDiagnostics | None]:
    """Run one judge decision with a hard tool budget and fail-quiet semantics.

    Calls beyond the budget are rejected (the backend sees a structured
    refusal) and counted in the diagnostics. Timeouts, transport errors, and
    malformed or policy-violating outputs all yield non-intervention plus a
    diagnostics record.
    """
    served = 0
    rejected = 0

    def read_section(guideline_id: str, section_id: str) -> dict:
        nonlocal served, rejected
        if served >= tool_budget:
            rejected += 1
            return {"error": f"tool budget of {tool_budget} calls exhausted"}
        served += 1
        return store.read_section(guideline_id, section_id)

    try:
        raw = backend.decide(snapshot, fired_rules, store.summaries(), read_section)
    except BackendTimeout as exc:
        return JudgeDecision.non_intervention(), JudgeDiagnostics(
            "timeout", str(exc), rejected
        )
    except BackendError as exc:
        return JudgeDecision.non_intervention(), JudgeDiagnostics(
            "backend_error", str(exc), rejected
        )

    try:
        decision = JudgeDecision.from_json_text(raw)
    except SchemaError as exc:
        return JudgeDecision.non_intervention(), JudgeDiagnostics(
            "malformed", str(exc), rejected
        )
    if rejected:
        return decision, JudgeDiagnostics(
            "budget_exceeded", f"{rejected} tool call(s) beyond budget", rejected
        )
    return decision, None
