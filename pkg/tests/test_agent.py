import json

import pytest

from pulsewatch.agent import (
    DeterministicPlanner,
    Plan,
    PlanStep,
    Query,
    WindowLocator,
    compose_answer,
    parse_plan_json,
    plan as make_plan,
    replan,
    run_query,
    validate,
)
from pulsewatch.errors import PlanError, SchemaError
from pulsewatch.registry import ToolResult
from pulsewatch.tools import ToolContext, build_registry


@pytest.fixture(scope="module")
def registry():
    return build_registry()


@pytest.fixture()
def ctx(qa_data_dir):
    return ToolContext(data_dir=str(qa_data_dir), fair=True)


def locator(start=0.0, end=10.0):
    return WindowLocator("synthetic", "synth-001", start, end)


def ok(tool, **payload):
    return ToolResult(tool, "ok", payload=payload)


def err(tool, code="tool_failure", message="boom"):
    return ToolResult(tool, "error", error_code=code, message=message)


class TestDeterministicPlanner:
    def test_current_hr_route(self, ctx, registry):
        q = Query("What is my current heart rate?", locator(), tier="A",
                  qtype="single_query", target="hr_bpm")
        p = DeterministicPlanner().plan(q, ctx, registry)
        assert p.tool_names() == ["get_ecg_metadata", "analyze_heart_rate"]

    def test_af_burden_uses_monitoring_window_state_tool(self, ctx, registry):
        q = Query("How often did my recent data show an irregular rhythm?",
                  locator(0.0, 3600.0), tier="B", qtype="single_choose",
                  options=["not at all", "occasionally", "often", "most of the time"],
                  target="af_burden_category")
        p = DeterministicPlanner().plan(q, ctx, registry)
        names = p.tool_names()
        assert "state_get_monitoring_window" in names
        assert "analyze_af_ppg_ecg_rhythm_context" in names
        # monitoring-window scope, not a single-window analysis route
        assert "ecg_diagnosis" not in names

    def test_tier_b_max_hr_route(self, ctx, registry):
        q = Query("What was my maximum heart rate?", locator(0.0, 7200.0),
                  tier="B", qtype="single_query", target="max_hr_bpm")
        p = DeterministicPlanner().plan(q, ctx, registry)
        assert p.tool_names() == ["state_get_monitoring_window"]

    def test_keyword_fallback_without_target(self, ctx, registry):
        q = Query("Is there anything odd about my heart rate lately?",
                  locator(0.0, 7200.0))
        p = DeterministicPlanner().plan(q, ctx, registry)
        assert p.tool_names()[0].startswith("state_")

    def test_unknown_target_checks_capabilities(self, ctx, registry):
        q = Query("How did I sleep?", locator(), tier="A", target="sleep_stage")
        p = DeterministicPlanner().plan(q, ctx, registry)
        assert p.tool_names() == ["state_get_dataset_capabilities"]


class TestPlanParsing:
    def test_unknown_tool_rejected(self, registry):
        allowed = {d.name for d in registry.planner_tools()}
        text = json.dumps({"steps": [{"tool_name": "summon_cardiologist", "args": {}}]})
        with pytest.raises(PlanError):
            parse_plan_json(text, allowed, origin="llm")

    def test_benchmark_only_tool_rejected_for_planner(self, registry):
        allowed = {d.name for d in registry.planner_tools()}
        text = json.dumps({"steps": [{"tool_name": "state_build_from_ecg_record",
                                      "args": {"patient_id": "x"}}]})
        with pytest.raises(PlanError):
            parse_plan_json(text, allowed, origin="llm")

    def test_garbage_rejected(self, registry):
        with pytest.raises(SchemaError):
            parse_plan_json("No JSON here.", set(), origin="llm")

    def test_valid_plan_parsed(self, registry):
        allowed = {d.name for d in registry.planner_tools()}
        text = json.dumps({"steps": [{
            "tool_name": "analyze_heart_rate",
            "args": {"dataset": "synthetic", "patient_id": "p",
                     "window_start_s": 0, "window_end_s": 10},
            "purpose": "hr",
        }]})
        p = parse_plan_json(text, allowed, origin="llm")
        assert p.origin == "llm" and len(p.steps) == 1


class _ScriptedBackend:
    def __init__(self, replies):
        self.replies = list(replies)
        self.prompts = []

    def complete(self, prompt):
        self.prompts.append(prompt)
        return self.replies.pop(0)


class TestLlmPlannerFallback:
    def test_bad_output_reprompted_then_deterministic(self, ctx, registry):
        backend = _ScriptedBackend(["not json", "still not json"])
        q = Query("What is my current heart rate?", locator(), tier="A",
                  qtype="single_query", target="hr_bpm")
        p, diagnostics = make_plan(q, ctx, registry, backend)
        assert p.origin == "deterministic"
        assert len(backend.prompts) == 2
        assert any("rejected" in d for d in diagnostics)

    def test_good_output_used(self, ctx, registry):
        reply = json.dumps({"steps": [{
            "tool_name": "analyze_heart_rate",
            "args": {"dataset": "synthetic", "patient_id": "synth-001",
                     "window_start_s": 0.0, "window_end_s": 10.0},
        }]})
        p, diagnostics = make_plan(
            Query("hr?", locator(), target="hr_bpm"), ctx, registry,
            _ScriptedBackend([reply]),
        )
        assert p.origin == "llm" and diagnostics == []


def two_step_plan():
    return Plan([
        PlanStep("get_ecg_metadata", {"patient_id": "p"}),
        PlanStep("analyze_heart_rate", {"dataset": "synthetic", "patient_id": "p",
                                        "window_start_s": 0.0, "window_end_s": 10.0}),
    ])


class TestValidate:
    def test_all_ok_passes(self):
        results = [ok("get_ecg_metadata", patient_id="p", fs=100.0),
                   ok("analyze_heart_rate", hr_bpm=70.0)]
        assert validate(two_step_plan(), results).passed

    def test_errored_second_step(self):
        results = [ok("get_ecg_metadata", patient_id="p", fs=100.0),
                   err("analyze_heart_rate")]
        report = validate(two_step_plan(), results)
        issues = report.by_dimension("tool_success")
        assert len(issues) == 1 and issues[0].step_index == 1

    def test_missing_result_is_completeness(self):
        report = validate(two_step_plan(), [ok("get_ecg_metadata", patient_id="p", fs=100.0)])
        issues = report.by_dimension("completeness")
        assert len(issues) == 1 and issues[0].step_index == 1

    def test_dropped_field_is_required_fields(self):
        results = [ok("get_ecg_metadata", patient_id="p", fs=100.0),
                   err("analyze_heart_rate", code="missing_output_fields",
                       message="payload missing required fields: hr_bpm")]
        report = validate(two_step_plan(), results)
        assert len(report.by_dimension("required_fields")) == 1
        assert not report.by_dimension("tool_success")

    def test_hr_disagreement_70_vs_95(self):
        results = [ok("analyze_heart_rate", hr_bpm=70.0),
                   ok("analyze_pulse_rate", pulse_rate_bpm=95.0)]
        report = validate(two_step_plan(), results)
        issues = report.by_dimension("consistency")
        assert len(issues) == 1 and issues[0].pair == (0, 1)

    def test_hr_within_tolerance_consistent(self):
        results = [ok("analyze_heart_rate", hr_bpm=70.0),
                   ok("analyze_pulse_rate", pulse_rate_bpm=75.0)]
        assert validate(two_step_plan(), results).passed

    def test_rhythm_contradiction(self):
        results = [ok("ecg_diagnosis", rhythm_class="AF"),
                   ok("analyze_ppg_rhythm_irregularity", rhythm_class="N")]
        report = validate(two_step_plan(), results)
        assert report.by_dimension("consistency")

    def test_state_payload_hr_participates(self):
        results = [ok("state_get_current_monitoring_state",
                      state={"hr_bpm": 70.0, "window_index": 0}),
                   ok("analyze_heart_rate", hr_bpm=95.0)]
        report = validate(two_step_plan(), results)
        assert report.by_dimension("consistency")


class TestReplan:
    def test_failed_step_swapped(self, registry):
        q = Query("hr?", locator(), target="hr_bpm")
        previous = two_step_plan()
        report = validate(previous, [
            ok("get_ecg_metadata", patient_id="p", fs=100.0),
            err("analyze_heart_rate"),
        ])
        revised, _ = replan(q, previous, report, registry)
        assert revised.origin == "replanned"
        assert revised.steps[0] == previous.steps[0]
        assert revised.steps[1].tool_name != previous.steps[1].tool_name

    def test_missing_result_retried_in_place(self, registry):
        q = Query("hr?", locator(), target="hr_bpm")
        previous = two_step_plan()
        report = validate(previous, [ok("get_ecg_metadata", patient_id="p", fs=100.0)])
        revised, _ = replan(q, previous, report, registry)
        assert revised.tool_names() == previous.tool_names()

    def test_llm_replan_prompt_slots(self, registry):
        q = Query("hr?", locator(), target="hr_bpm")
        previous = two_step_plan()
        report = validate(previous, [
            ok("get_ecg_metadata", patient_id="p", fs=100.0),
            err("analyze_heart_rate"),
        ])
        reply = json.dumps({"steps": [{"tool_name": "state_get_current_monitoring_state",
                                       "args": {"patient_id": "synth-001"}}]})
        backend = _ScriptedBackend([reply])
        revised, diag = replan(q, previous, report, registry, backend)
        assert revised.origin == "replanned" and diag == []
        prompt = backend.prompts[0]
        for chunk in ("## Previous plan", "## Validation issues", "analyze_heart_rate"):
            assert chunk in prompt


class TestComposeAnswer:
    def test_numeric_with_unit(self):
        q = Query("What is my current heart rate?", locator(), tier="A",
                  qtype="single_query", target="hr_bpm")
        out = compose_answer(q, two_step_plan(), [ok("analyze_heart_rate", hr_bpm=72.0)])
        assert out["answer"] == "72 bpm"

    def test_af_verify_no(self):
        q = Query("Irregular rhythm now?", locator(), tier="A",
                  qtype="single_verify", target="af_presence")
        out = compose_answer(q, two_step_plan(), [ok("ecg_diagnosis", rhythm_class="N")])
        assert out["answer"] == "no"

    def test_zero_evidence_unknown(self):
        q = Query("What is my current heart rate?", locator(), tier="A",
                  qtype="single_query", target="hr_bpm")
        out = compose_answer(q, two_step_plan(), [err("analyze_heart_rate")])
        assert out["answer"] == "unknown"

    def test_choose_matches_option_case(self):
        q = Query("How would you describe my current heart rate?", locator(),
                  tier="A", qtype="single_choose", target="hr_category",
                  options=["Low", "Normal", "Elevated"])
        out = compose_answer(q, two_step_plan(), [ok("analyze_heart_rate", hr_bpm=110.0)])
        assert out["answer"] == "Elevated"

    def test_burden_bucket_from_fraction(self):
        q = Query("How often was it irregular?", locator(0, 7200), tier="B",
                  qtype="single_choose", target="af_burden_category",
                  options=["not at all", "occasionally", "often", "most of the time"])
        out = compose_answer(
            q, two_step_plan(),
            [ok("analyze_af_ppg_ecg_rhythm_context", af_window_fraction=2 / 12)],
        )
        assert out["answer"] == "occasionally"

    def test_threshold_verify(self):
        q = Query("Is my heart rate above 100 bpm right now?", locator(), tier="A",
                  qtype="single_verify", target="hr_above_100")
        out = compose_answer(q, two_step_plan(), [ok("analyze_heart_rate", hr_bpm=104.0)])
        assert out["answer"] == "yes"

    def test_evidence_digest_has_no_timings(self):
        out = compose_answer(
            Query("hr?", locator(), target="hr_bpm", qtype="single_query"),
            two_step_plan(), [ok("analyze_heart_rate", hr_bpm=70.0)],
        )
        assert all("elapsed_ms" not in e for e in out["evidence"])


class TestRunQuery:
    def test_end_to_end_hr(self, ctx, registry):
        q = Query("What is my current heart rate?", locator(), tier="A",
                  qtype="single_query", target="hr_bpm")
        result = run_query(q, registry, ctx)
        assert result.cycles == 1 and not result.flagged
        assert result.answer.endswith("bpm")

    def test_reproducible_answers(self, ctx, registry):
        q = Query("What is my current heart rate?", locator(), tier="A",
                  qtype="single_query", target="hr_bpm")
        a = run_query(q, registry, ctx)
        b = run_query(q, registry, ctx)
        assert a.answer == b.answer

    def test_injected_failure_triggers_one_replan(self, ctx, registry, monkeypatch):
        original = registry._tools["analyze_heart_rate"]

        def sabotaged(ctx_, **kw):
            raise RuntimeError("sensor offline")

        monkeypatch.setitem(
            registry._tools, "analyze_heart_rate", (original[0], sabotaged)
        )
        q = Query("What is my current heart rate?", locator(), tier="A",
                  qtype="single_query", target="hr_bpm")
        result = run_query(q, registry, ctx)
        assert result.cycles == 2
        assert len(result.plans) == 2
        assert result.plans[1].origin == "replanned"
        assert result.reports[0].by_dimension("tool_success")
        # the state fallback still answers correctly
        assert result.answer.endswith("bpm")
        assert not result.flagged

    def test_budget_exhaustion_flags(self, ctx, registry, monkeypatch):
        for name in ("analyze_heart_rate", "state_get_current_monitoring_state"):
            original = registry._tools[name]

            def sabotaged(ctx_, **kw):
                raise RuntimeError("still broken")

            monkeypatch.setitem(registry._tools, name, (original[0], sabotaged))
        q = Query("What is my current heart rate?", locator(), tier="A",
                  qtype="single_query", target="hr_bpm")
        result = run_query(q, registry, ctx)
        assert result.cycles == 2 and result.flagged
        assert result.answer == "unknown"
