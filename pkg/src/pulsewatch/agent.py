"""Reactive QA pipeline: plan -> execute -> validate -> (replan once) -> answer.

Planner and responder backends are pluggable. The deterministic pair makes
the whole loop runnable and byte-reproducible with no language model at all;
the LLM pair talks to an HTTP text-completion endpoint and falls back to the
deterministic path when its output cannot be parsed.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .errors import BackendError, BackendTimeout, PlanError, SchemaError
from .registry import ToolRegistry, ToolResult
from .targets import (
    burden_bucket,
    format_number,
    hr_category,
    parse_threshold_target,
    yes_no,
)
from .tools import DATASET_MODALITY, ToolContext

QA_TYPES = ("single_verify", "single_choose", "single_query")
TIERS = ("A", "B")

# Two HR estimates are consistent when they differ by no more than this.
HR_ABS_TOL_BPM = 10.0
HR_REL_TOL = 0.10


@dataclass
class WindowLocator:
    dataset: str
    patient_id: str
    window_start_s: float
    window_end_s: float

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "patient_id": self.patient_id,
            "window_start_s": self.window_start_s,
            "window_end_s": self.window_end_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WindowLocator":
        return cls(
            dataset=str(d["dataset"]),
            patient_id=str(d["patient_id"]),
            window_start_s=float(d["window_start_s"]),
            window_end_s=float(d["window_end_s"]),
        )


@dataclass
class Query:
    text: str
    locator: WindowLocator | None = None
    tier: str | None = None
    qtype: str | None = None
    options: list[str] | None = None
    target: str | None = None

    def __post_init__(self):
        if self.qtype == "single_choose" and not self.options:
            raise SchemaError("single_choose queries need non-empty options")


@dataclass
class PlanStep:
    tool_name: str
    args: dict
    purpose: str = ""

    def to_dict(self) -> dict:
        return {"tool_name": self.tool_name, "args": self.args, "purpose": self.purpose}


@dataclass
class Plan:
    steps: list[PlanStep]
    origin: str = "deterministic"  # llm | deterministic | replanned

    def to_dict(self) -> dict:
        return {"steps": [s.to_dict() for s in self.steps], "origin": self.origin}

    def tool_names(self) -> list[str]:
        return [s.tool_name for s in self.steps]


def check_allowed(plan: Plan, allowed: set[str]) -> None:
    bad = [n for n in plan.tool_names() if n not in allowed]
    if bad:
        raise PlanError(f"plan uses tools outside the allowed list: {bad}")


@dataclass
class ValidationIssue:
    dimension: str  # completeness | tool_success | required_fields | consistency
    message: str
    step_index: int | None = None
    pair: tuple[int, int] | None = None


@dataclass
class ValidationReport:
    issues: list[ValidationIssue] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.issues

    def by_dimension(self, dimension: str) -> list[ValidationIssue]:
        return [i for i in self.issues if i.dimension == dimension]


# ---------------------------------------------------------------------------
# Deterministic planner


_DATASET_LOADER = {
    "icentia11k": "analyze_icentia11k_ecg_window_signal",
    "ppg_dalia": "analyze_ppg_dalia_window_signal",
    "wesad": "analyze_wesad_window_signal",
}

_KEYWORD_TARGETS = [
    (("atrial fibrillation", "afib", "fibrillation"), "af_presence", "af_burden_category"),
    (("stress",), "stress_presence", "stress_presence"),
    (("rmssd",), "rmssd_ms", "rmssd_ms"),
    (("sdnn", "variability"), "sdnn_ms", "sdnn_ms"),
    (("quality",), "signal_quality_score", "signal_quality_score"),
    (("maximum", "highest", "peak"), "max_hr_bpm", "max_hr_bpm"),
    (("average", "mean"), "hr_bpm", "mean_hr_bpm"),
    (("heart rate", "pulse"), "hr_bpm", "mean_hr_bpm"),
]
_SCOPE_WORDS = ("past", "recent", "hour", "lately", "over time", "trend", "how often")


def _infer_target_and_scope(query: Query) -> tuple[str, str]:
    target = query.target
    scope = None
    if query.tier == "A":
        scope = "current_window"
    elif query.tier == "B":
        scope = "monitoring_window"
    text = query.text.lower()
    if scope is None:
        scope = "monitoring_window" if any(w in text for w in _SCOPE_WORDS) else "current_window"
    if target is None:
        for keywords, a_target, b_target in _KEYWORD_TARGETS:
            if any(k in text for k in keywords):
                target = a_target if scope == "current_window" else b_target
                break
    return target or "unknown", scope


def _modality_for(context: ToolContext, locator: WindowLocator) -> str:
    fixed = DATASET_MODALITY.get(locator.dataset)
    if fixed:
        return fixed
    try:
        wins = context.windows(locator.patient_id)
        if wins:
            return wins[0].modality
    except Exception:  # noqa: BLE001 - metadata probe only
        pass
    return "ECG"


class DeterministicPlanner:
    """Routing table keyed on (target, time scope) over benchmark metadata."""

    def plan(self, query: Query, context: ToolContext, registry: ToolRegistry) -> Plan:
        if query.locator is None:
            return Plan([PlanStep(
                "state_list_contexts", {}, "no locator; enumerate what exists"
            )])
        loc = query.locator
        target, scope = _infer_target_and_scope(query)
        base, _thr = parse_threshold_target(target)
        modality = _modality_for(context, loc)
        steps: list[PlanStep] = []

        loc_args = loc.to_dict()
        range_args = {
            "patient_id": loc.patient_id,
            "window_start_s": loc.window_start_s,
            "window_end_s": loc.window_end_s,
        }

        def scoping_step() -> PlanStep:
            loader = _DATASET_LOADER.get(loc.dataset)
            if loader:
                return PlanStep(loader, dict(range_args), "load the located windows")
            meta = "get_ecg_metadata" if modality == "ECG" else "get_ppg_metadata"
            return PlanStep(meta, {"patient_id": loc.patient_id}, "confirm the recording exists")

        if scope == "current_window":
            analysis = {
                "hr_bpm": "analyze_heart_rate" if modality == "ECG" else "analyze_pulse_rate",
                "hr_above": "analyze_heart_rate" if modality == "ECG" else "analyze_pulse_rate",
                "hr_category": "analyze_heart_rate" if modality == "ECG" else "analyze_pulse_rate",
                "sdnn_ms": "analyze_hrv" if modality == "ECG" else "analyze_prv",
                "rmssd_ms": "analyze_hrv" if modality == "ECG" else "analyze_prv",
                "signal_quality_score": (
                    "assess_signal_quality" if modality == "ECG" else "assess_ppg_signal_quality"
                ),
                "af_presence": (
                    "ecg_diagnosis" if modality == "ECG" else "analyze_ppg_rhythm_irregularity"
                ),
                "stress_presence": "classify_wesad_stress_state",
            }.get(base)
            if analysis is None:
                steps.append(PlanStep(
                    "state_get_dataset_capabilities", {"dataset": loc.dataset},
                    "unknown target; check what this dataset supports"))
            else:
                steps.append(scoping_step())
                steps.append(PlanStep(analysis, dict(loc_args), f"compute {base} for the window"))
        else:
            if base in ("max_hr_bpm", "mean_hr_bpm", "max_hr_above", "hr_above",
                        "tachy_burden_category", "hr_bpm"):
                steps.append(PlanStep(
                    "state_get_monitoring_window", dict(range_args),
                    "aggregate visible state fields over the monitoring window"))
            elif base == "af_burden_category":
                steps.append(PlanStep(
                    "state_get_monitoring_window", dict(range_args),
                    "scope the monitoring window"))
                steps.append(PlanStep(
                    "analyze_af_ppg_ecg_rhythm_context", dict(loc_args),
                    "screen every window in range for irregular rhythm"))
            elif base == "hr_trend":
                steps.append(PlanStep(
                    "state_get_longitudinal_trend",
                    {**range_args, "field": "hr_bpm"},
                    "compare heart rate across the monitoring window"))
            elif base in ("sdnn_ms", "rmssd_ms", "signal_quality_score"):
                steps.append(PlanStep(
                    "state_get_monitoring_window", dict(range_args),
                    "aggregate visible state fields over the monitoring window"))
            else:
                steps.append(PlanStep(
                    "state_get_dataset_capabilities", {"dataset": loc.dataset},
                    "unknown target; check what this dataset supports"))
        plan = Plan(steps, origin="deterministic")
        check_allowed(plan, {d.name for d in registry.planner_tools()})
        return plan


# ---------------------------------------------------------------------------
# LLM planner backends


class CompletionBackend(Protocol):
    def complete(self, prompt: str) -> str: ...


class HttpCompletionBackend:
    """Text completion over an HTTP endpoint; temperature pinned to 0."""

    def __init__(
        self,
        endpoint_url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        timeout_s: float = 30.0,
    ):
        self.endpoint_url = endpoint_url or os.environ.get("PULSEWATCH_LLM_URL", "")
        self.api_key = api_key or os.environ.get("PULSEWATCH_LLM_KEY", "")
        self.model = model or os.environ.get("PULSEWATCH_LLM_MODEL", "")
        self.timeout_s = timeout_s

    def complete(self, prompt: str) -> str:
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
        try:
            return resp.json()["choices"][0]["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"unexpected completion shape: {exc}") from exc


PLAN_PROMPT_TEMPLATE = """You select analysis tools for a wearable-health question.

## Question
{query}

## Locator
{locator}

## Allowed tool names (STRICT)
You MUST use tool names from this exact list only:
{tool_names}

If no tool fits, pick the closest from the list; never invent a name.

{tools_description}

Return ONLY valid JSON (no markdown fences) of the shape:
{{"steps": [{{"tool_name": "...", "args": {{...}}, "purpose": "..."}}]}}
"""

REPLAN_PROMPT_TEMPLATE = """A tool plan for a wearable-health question failed validation. Repair it.

## Previous plan
{previous_plan}

## Validation issues
{issues}

## Instructions
- Fix exactly the problems listed; you may add, remove, or swap steps.
- Keep to the signal modality the previous plan implied; do not add
  ECG-only tools to a PPG plan.
- If the data is genuinely unavailable, include one step that checks
  dataset capabilities instead of guessing.

## Allowed tool names (STRICT)
You MUST use tool names from this exact list only:
{tool_names}

If a needed tool is unavailable, use the closest available tool from the
allowed list; never invent a new name.

{tools_description}

Return ONLY valid JSON with the same schema as before (no markdown fences).
"""


def parse_plan_json(text: str, allowed: set[str], origin: str) -> Plan:
    """Strict JSON -> Plan with allow-list enforcement."""
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"plan is not valid JSON: {exc}") from exc
    if not isinstance(d, dict) or not isinstance(d.get("steps"), list):
        raise SchemaError("plan must be an object with a steps array")
    steps = []
    for i, s in enumerate(d["steps"]):
        if not isinstance(s, dict) or "tool_name" not in s:
            raise SchemaError(f"step {i} lacks tool_name")
        args = s.get("args", {})
        if not isinstance(args, dict):
            raise SchemaError(f"step {i} args must be an object")
        steps.append(PlanStep(str(s["tool_name"]), args, str(s.get("purpose", ""))))
    plan = Plan(steps, origin=origin)
    check_allowed(plan, allowed)
    return plan


def _tools_description(registry: ToolRegistry) -> str:
    lines = []
    for d in registry.planner_tools():
        args = ", ".join(
            f"{name}{'' if spec.required else '?'}: {spec.type}"
            for name, spec in d.arg_schema.items()
        )
        lines.append(f"- {d.name}({args}): {d.description}")
    return "\n".join(lines)


def plan(
    query: Query,
    context: ToolContext,
    registry: ToolRegistry,
    backend: CompletionBackend | None = None,
) -> tuple[Plan, list[str]]:
    """Produce a validated plan; LLM output falls back deterministically.

    Unparseable or disallowed LLM plans get one reprompt, then the
    deterministic planner takes over (recorded in the diagnostics list).
    """
    deterministic = DeterministicPlanner()
    if backend is None:
        return deterministic.plan(query, context, registry), []
    allowed = {d.name for d in registry.planner_tools()}
    prompt = PLAN_PROMPT_TEMPLATE.format(
        query=query.text,
        locator=json.dumps(query.locator.to_dict() if query.locator else None),
        tool_names=json.dumps(sorted(allowed)),
        tools_description=_tools_description(registry),
    )
    diagnostics: list[str] = []
    for attempt in (1, 2):
        try:
            raw = backend.complete(prompt)
        except (BackendError, BackendTimeout) as exc:
            diagnostics.append(f"planner backend error: {exc}")
            break
        try:
            return parse_plan_json(raw, allowed, origin="llm"), diagnostics
        except (SchemaError, PlanError) as exc:
            diagnostics.append(f"planner output rejected (attempt {attempt}): {exc}")
            prompt += (
                "\n\nYour previous reply was rejected: "
                f"{exc}. Return ONLY the JSON object."
            )
    diagnostics.append("falling back to the deterministic planner")
    return deterministic.plan(query, context, registry), diagnostics


# ---------------------------------------------------------------------------
# Execution + validation


def execute_plan(
    plan_: Plan, registry: ToolRegistry, context: ToolContext
) -> list[ToolResult]:
    """Invoke each step in order. Only allow-listed, planned tools ever run."""
    check_allowed(plan_, {d.name for d in registry.list_tools()})
    return [registry.invoke(step.tool_name, step.args, context) for step in plan_.steps]


_HR_FIELDS = ("hr_bpm", "pulse_rate_bpm")


def _iter_field(results: Sequence[ToolResult | None], fields: Sequence[str]):
    for idx, res in enumerate(results):
        if res is None or not res.ok or res.payload is None:
            continue
        for f in fields:
            v = res.payload.get(f)
            if v is not None:
                yield idx, f, v
        state = res.payload.get("state")
        if isinstance(state, dict):
            for f in fields:
                v = state.get(f)
                if v is not None:
                    yield idx, f, v


def validate(plan_: Plan, results: Sequence[ToolResult | None]) -> ValidationReport:
    """Check the four dimensions: completeness, tool success, required
    output fields, and cross-tool consistency."""
    issues: list[ValidationIssue] = []
    for idx in range(len(plan_.steps)):
        res = results[idx] if idx < len(results) else None
        if res is None:
            issues.append(ValidationIssue(
                "completeness", f"step {idx} ({plan_.steps[idx].tool_name}) has no result",
                step_index=idx))
            continue
        if res.status == "error":
            if res.error_code == "missing_output_fields":
                issues.append(ValidationIssue(
                    "required_fields",
                    f"step {idx} ({res.tool_name}): {res.message}",
                    step_index=idx))
            else:
                issues.append(ValidationIssue(
                    "tool_success",
                    f"step {idx} ({res.tool_name}) failed: {res.error_code}: {res.message}",
                    step_index=idx))

    hr_values = [(idx, v) for idx, _f, v in _iter_field(results, _HR_FIELDS)
                 if isinstance(v, (int, float))]
    for a in range(len(hr_values)):
        for b in range(a + 1, len(hr_values)):
            (i, va), (j, vb) = hr_values[a], hr_values[b]
            if i == j:
                continue
            tol = max(HR_ABS_TOL_BPM, HR_REL_TOL * max(abs(va), abs(vb)))
            if abs(va - vb) > tol:
                issues.append(ValidationIssue(
                    "consistency",
                    f"heart-rate estimates disagree: {va:.1f} (step {i}) vs "
                    f"{vb:.1f} (step {j})",
                    pair=(i, j)))

    rhythm_values = [
        (idx, v) for idx, _f, v in _iter_field(results, ("rhythm_class",))
        if isinstance(v, str) and v != "unknown"
    ]
    for a in range(len(rhythm_values)):
        for b in range(a + 1, len(rhythm_values)):
            (i, va), (j, vb) = rhythm_values[a], rhythm_values[b]
            if i != j and va != vb:
                issues.append(ValidationIssue(
                    "consistency",
                    f"rhythm assessments disagree: {va} (step {i}) vs {vb} (step {j})",
                    pair=(i, j)))
    return ValidationReport(issues)


# ---------------------------------------------------------------------------
# Replanning

_FALLBACK_TOOL = {
    "analyze_heart_rate": "state_get_current_monitoring_state",
    "analyze_pulse_rate": "state_get_current_monitoring_state",
    "analyze_hrv": "state_get_current_monitoring_state",
    "analyze_prv": "state_get_current_monitoring_state",
    "assess_signal_quality": "state_get_current_monitoring_state",
    "assess_ppg_signal_quality": "state_get_current_monitoring_state",
    "state_get_monitoring_window": "state_get_current_monitoring_state",
}
_DEFAULT_FALLBACK = "state_get_dataset_capabilities"


def _fallback_step(step: PlanStep, query: Query) -> PlanStep:
    tool = _FALLBACK_TOOL.get(step.tool_name, _DEFAULT_FALLBACK)
    loc = query.locator
    if tool == "state_get_current_monitoring_state" and loc is not None:
        args = {"patient_id": loc.patient_id, "window_start_s": loc.window_start_s}
    elif tool == "state_get_dataset_capabilities":
        args = {"dataset": loc.dataset if loc else "synthetic"}
    else:
        args = dict(step.args)
    return PlanStep(tool, args, f"fallback for failed {step.tool_name}")


def replan(
    query: Query,
    previous: Plan,
    report: ValidationReport,
    registry: ToolRegistry,
    backend: CompletionBackend | None = None,
    context: ToolContext | None = None,
) -> tuple[Plan, list[str]]:
    """Produce a revised plan from the validation feedback."""
    allowed = {d.name for d in registry.planner_tools()}
    if backend is not None:
        prompt = REPLAN_PROMPT_TEMPLATE.format(
            previous_plan=json.dumps(previous.to_dict(), indent=1),
            issues=json.dumps([i.__dict__ for i in report.issues], indent=1, default=str),
            tool_names=json.dumps(sorted(allowed)),
            tools_description=_tools_description(registry),
        )
        try:
            raw = backend.complete(prompt)
            plan_ = parse_plan_json(raw, allowed, origin="replanned")
            return plan_, []
        except (BackendError, BackendTimeout, SchemaError, PlanError) as exc:
            diag = [f"replanner backend rejected: {exc}; using deterministic repair"]
    else:
        diag = []

    failed_steps = {i.step_index for i in report.issues if i.step_index is not None}
    pair_laters = {p.pair[1] for p in report.issues if p.pair is not None}
    steps: list[PlanStep] = []
    for idx, step in enumerate(previous.steps):
        if idx in failed_steps:
            issue_dims = {i.dimension for i in report.issues if i.step_index == idx}
            if issue_dims == {"completeness"}:
                steps.append(step)  # simply retry a step that never ran
            else:
                steps.append(_fallback_step(step, query))
        elif idx in pair_laters:
            replacement = _fallback_step(step, query)
            if replacement.tool_name not in {s.tool_name for s in steps}:
                steps.append(replacement)
        else:
            steps.append(step)
    plan_ = Plan(steps, origin="replanned")
    check_allowed(plan_, allowed)
    return plan_, diag


# ---------------------------------------------------------------------------
# Answer composition


_UNITS = {
    "hr_bpm": "bpm",
    "mean_hr_bpm": "bpm",
    "max_hr_bpm": "bpm",
    "pulse_rate_bpm": "bpm",
    "sdnn_ms": "ms",
    "rmssd_ms": "ms",
}


def _first_value(results: Sequence[ToolResult | None], fields: Sequence[str]):
    for _idx, _f, v in _iter_field(results, fields):
        return v
    return None


def _aggregate_fields_for(base: str) -> list[str]:
    return {
        "hr_bpm": ["hr_bpm", "pulse_rate_bpm"],
        "hr_above": ["hr_bpm", "pulse_rate_bpm"],
        "hr_category": ["hr_bpm", "pulse_rate_bpm"],
        "mean_hr_bpm": ["mean_hr_bpm", "hr_bpm", "pulse_rate_bpm"],
        "max_hr_bpm": ["max_hr_bpm"],
        "max_hr_above": ["max_hr_bpm"],
        "sdnn_ms": ["sdnn_ms", "mean_sdnn_ms"],
        "rmssd_ms": ["rmssd_ms"],
        "signal_quality_score": ["signal_quality_score", "mean_quality"],
        "tachy_burden_category": ["tachy_window_fraction"],
        "af_burden_category": ["af_window_fraction"],
        "af_presence": ["rhythm_class"],
        "stress_presence": ["stress_state"],
        "hr_trend": ["direction"],
    }.get(base, [base])


RESPONSE_PROMPT_TEMPLATE = """Answer a wearable-health question from validated tool evidence.

## Question
{query}

## Final tool plan
{plan}

## Tool outputs
{results}

Reply with only the answer value (a number with unit, yes/no, or one of the
offered options). If the evidence does not contain the answer, reply
"unknown"; never invent a value.
"""


def compose_answer(
    query: Query,
    plan_: Plan,
    results: Sequence[ToolResult | None],
    backend: CompletionBackend | None = None,
) -> dict:
    """Format the final answer from the evidence; never fabricate.

    Returns {"answer": str, "evidence": digest list}.
    """
    digest = results_digest(results)
    if backend is not None:
        prompt = RESPONSE_PROMPT_TEMPLATE.format(
            query=query.text,
            plan=json.dumps(plan_.to_dict(), indent=1),
            results=json.dumps(digest, indent=1),
        )
        try:
            answer = backend.complete(prompt).strip()
            return {"answer": answer or "unknown", "evidence": digest}
        except (BackendError, BackendTimeout):
            pass  # fall through to the deterministic composer

    target, _scope = _infer_target_and_scope(query)
    base, threshold = parse_threshold_target(target)
    qtype = query.qtype or "single_query"
    value = _first_value(results, _aggregate_fields_for(base))

    answer = "unknown"
    if qtype == "single_verify":
        if base in ("hr_above", "max_hr_above") and threshold is not None:
            if isinstance(value, (int, float)):
                answer = yes_no(value > threshold)
        elif base == "af_presence":
            if isinstance(value, str):
                answer = yes_no(value == "AF")
        elif base == "stress_presence":
            if isinstance(value, str) and value != "unknown":
                answer = yes_no(value == "stress")
        elif base == "hr_trend":
            if isinstance(value, str):
                answer = yes_no(value == "up")
        elif isinstance(value, bool):
            answer = yes_no(value)
    elif qtype == "single_choose":
        label = None
        if base == "hr_category" and isinstance(value, (int, float)):
            label = hr_category(value)
        elif base in ("tachy_burden_category", "af_burden_category") and isinstance(
            value, (int, float)
        ):
            label = burden_bucket(value)
        elif isinstance(value, str):
            label = value
        if label is not None and query.options:
            match = next(
                (opt for opt in query.options if opt.casefold() == label.casefold()), None
            )
            answer = match if match is not None else "unknown"
        elif label is not None:
            answer = label
    else:  # single_query
        if isinstance(value, bool):
            answer = yes_no(value)
        elif isinstance(value, (int, float)):
            unit = _UNITS.get(base, "")
            answer = f"{format_number(value)} {unit}".strip()
        elif isinstance(value, str) and value:
            answer = value
    return {"answer": answer, "evidence": digest}


def results_digest(results: Sequence[ToolResult | None]) -> list[dict]:
    """Compact, JSON-safe view of the tool outputs (no timings, no bulk)."""
    digest = []
    for res in results:
        if res is None:
            digest.append({"status": "missing"})
            continue
        entry: dict = {"tool_name": res.tool_name, "status": res.status}
        if res.ok and res.payload is not None:
            entry["payload"] = _trim(res.payload)
        else:
            entry["error_code"] = res.error_code
            entry["message"] = res.message
        digest.append(entry)
    return digest


def _trim(value, depth: int = 0):
    if isinstance(value, dict):
        return {k: _trim(v, depth + 1) for k, v in value.items()}
    if isinstance(value, list):
        return [_trim(v, depth + 1) for v in value[:20]]
    return value


# ---------------------------------------------------------------------------
# End-to-end loop


@dataclass
class QAResult:
    answer: str
    evidence: list[dict]
    plans: list[Plan]
    reports: list[ValidationReport]
    cycles: int
    flagged: bool
    diagnostics: list[str] = field(default_factory=list)


def run_query(
    query: Query,
    registry: ToolRegistry,
    context: ToolContext,
    planner_backend: CompletionBackend | None = None,
    responder_backend: CompletionBackend | None = None,
    replan_budget: int = 1,
) -> QAResult:
    """Full reactive pipeline for one query.

    Terminates in at most (1 + replan_budget) plan-execute cycles; when the
    budget runs out with a failing report, composition proceeds on the
    partial evidence and the result is flagged.
    """
    plans: list[Plan] = []
    reports: list[ValidationReport] = []
    current, diagnostics = plan(query, context, registry, planner_backend)
    plans.append(current)
    results = execute_plan(current, registry, context)
    report = validate(current, results)
    reports.append(report)
    cycles = 1
    replans_used = 0
    while not report.passed and replans_used < replan_budget:
        current, diag = replan(query, current, report, registry, planner_backend, context)
        diagnostics.extend(diag)
        plans.append(current)
        results = execute_plan(current, registry, context)
        report = validate(current, results)
        reports.append(report)
        cycles += 1
        replans_used += 1
    composed = compose_answer(query, current, results, responder_backend)
    return QAResult(
        answer=composed["answer"],
        evidence=composed["evidence"],
        plans=plans,
        reports=reports,
        cycles=cycles,
        flagged=not report.passed,
        diagnostics=diagnostics,
    )
