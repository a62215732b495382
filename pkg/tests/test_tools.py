import pytest

from pulsewatch.memory import HIDDEN_FIELDS
from pulsewatch.tools import FixtureKnowledgeClient, ToolContext, build_registry


@pytest.fixture()
def ctx(qa_data_dir):
    return ToolContext(data_dir=str(qa_data_dir), fair=True)


@pytest.fixture(scope="module")
def registry():
    return build_registry()


LOC = {"dataset": "synthetic", "patient_id": "synth-001",
       "window_start_s": 0.0, "window_end_s": 10.0}
RANGE = {"patient_id": "synth-001", "window_start_s": 0.0, "window_end_s": 600.0}


class TestSignalTools:
    def test_analyze_heart_rate_on_quiet_window(self, ctx, registry):
        res = registry.invoke("analyze_heart_rate", LOC, ctx)
        assert res.ok, res.message
        assert res.payload["hr_bpm"] == pytest.approx(70.0, abs=2.0)

    def test_missing_arg_is_invalid(self, ctx, registry):
        res = registry.invoke("analyze_heart_rate", {"dataset": "synthetic"}, ctx)
        assert res.error_code == "invalid_args"

    def test_out_of_range_is_data_unavailable(self, ctx, registry):
        args = dict(LOC, window_start_s=1e7, window_end_s=1e7 + 10)
        res = registry.invoke("analyze_heart_rate", args, ctx)
        assert res.error_code == "data_unavailable"

    def test_pulse_rate_rejects_ecg(self, ctx, registry):
        res = registry.invoke("analyze_pulse_rate", LOC, ctx)
        assert res.error_code == "modality_mismatch"

    def test_hrv_fields(self, ctx, registry):
        res = registry.invoke("analyze_hrv", LOC, ctx)
        assert res.ok
        assert set(res.payload) >= {"sdnn_ms", "rmssd_ms", "cv", "n_beats"}

    def test_quality_on_clean_fixture(self, ctx, registry):
        res = registry.invoke("assess_signal_quality", LOC, ctx)
        assert res.ok and res.payload["signal_quality_score"] == pytest.approx(1.0)

    def test_morphology_stub_is_evidence_only(self, ctx, registry):
        res = registry.invoke("analyze_morphology", LOC, ctx)
        assert res.ok
        assert res.payload["morphology_available"] is False

    def test_diagnosis_on_regular_rhythm(self, ctx, registry):
        args = dict(LOC, window_end_s=300.0)
        res = registry.invoke("ecg_diagnosis", args, ctx)
        # a quiet stream is never flagged AF; its tiny CV shows in the evidence
        assert res.ok and res.payload["rhythm_class"] != "AF"
        assert res.payload["cv"] < 0.05

    def test_rhythm_context_counts(self, ctx, registry):
        res = registry.invoke("analyze_af_ppg_ecg_rhythm_context", dict(LOC, window_end_s=300.0), ctx)
        assert res.ok
        p = res.payload
        assert p["windows_assessed"] + p["windows_unknown"] == 30

    def test_all_leads_quality_single_lead(self, ctx, registry):
        res = registry.invoke("assess_all_leads_quality", LOC, ctx)
        assert res.ok and len(res.payload["leads"]) == 1


class TestRecordLookup:
    def test_list_and_metadata(self, ctx, registry):
        res = registry.invoke("list_ecg_records", {}, ctx)
        assert res.ok
        assert [r["patient_id"] for r in res.payload["records"]] == ["synth-001"]
        meta = registry.invoke("get_ecg_metadata", {"patient_id": "synth-001"}, ctx)
        assert meta.ok and meta.payload["fs"] == 100.0
        desc = registry.invoke("get_ecg_description", {"patient_id": "synth-001"}, ctx)
        assert "synth-001" in desc.payload["description"]

    def test_ppg_list_empty_for_ecg_fixture(self, ctx, registry):
        res = registry.invoke("list_ppg_records", {}, ctx)
        assert res.ok and res.payload["records"] == []


class TestProactiveContext:
    def test_recent_alerts_and_explain(self, ctx, registry):
        res = registry.invoke(
            "proactive_get_recent_alerts", {"patient_id": "synth-001", "k": 2}, ctx
        )
        assert res.ok
        alerts = res.payload["alerts"]
        assert len(alerts) == 2
        assert alerts[0]["window_index"] > alerts[1]["window_index"]
        exp = registry.invoke("proactive_explain_last_alert", {"patient_id": "synth-001"}, ctx)
        assert exp.ok
        assert exp.payload["alert"]["window_index"] == exp.payload["state"]["window_index"]

    def test_rule_replay_on_stored_state(self, ctx, registry):
        # the extreme tachycardia fired at window 100 (t=1000s)
        res = registry.invoke(
            "evaluate_proactive_rules",
            {"patient_id": "synth-001", "window_index": 100},
            ctx,
        )
        assert res.ok
        assert "extreme_tachycardia" in res.payload["fired_rules"]

    def test_contexts_listing(self, ctx, registry):
        res = registry.invoke("proactive_list_patient_contexts", {}, ctx)
        assert res.payload["patients"] == ["synth-001"]
        load = registry.invoke("proactive_load_patient_context", {"patient_id": "synth-001"}, ctx)
        assert load.ok and load.payload["n_states"] == 720


class TestKnowledge:
    def test_fixture_search_deterministic(self, ctx, registry):
        a = registry.invoke("medical_info_search", {"query": "what is atrial fibrillation"}, ctx)
        b = registry.invoke("medical_info_search", {"query": "what is atrial fibrillation"}, ctx)
        assert a.ok and a.payload == b.payload
        assert a.payload["results"][0]["source"].startswith("fixture:")

    def test_unmatched_query_gets_stub(self, ctx, registry):
        res = registry.invoke("medical_info_search", {"query": "zzz unheard of"}, ctx)
        assert res.ok and len(res.payload["results"]) == 1

    def test_topic_lookup(self, ctx, registry):
        res = registry.invoke("medical_knowledge", {"topic": "stress"}, ctx)
        assert res.ok and "stress" in res.payload["summary"]

    def test_client_directly(self):
        client = FixtureKnowledgeClient()
        assert client.topic("no such topic")["summary"].startswith("Fixture entry")


class TestStateTools:
    def test_current_state_by_time(self, ctx, registry):
        res = registry.invoke(
            "state_get_current_monitoring_state",
            {"patient_id": "synth-001", "window_start_s": 1005.0},
            ctx,
        )
        assert res.ok
        state = res.payload["state"]
        assert state["window_index"] == 100
        assert state["hr_bpm"] == pytest.approx(160.0, abs=3.0)

    def test_fair_states_carry_no_hidden_keys(self, ctx, registry):
        res = registry.invoke(
            "state_get_current_monitoring_state", {"patient_id": "synth-001"}, ctx
        )
        assert res.ok
        assert not set(res.payload["state"]) & set(HIDDEN_FIELDS)

    def test_previous_state(self, ctx, registry):
        res = registry.invoke(
            "state_get_previous_monitoring_state",
            {"patient_id": "synth-001", "window_index": 100},
            ctx,
        )
        assert res.ok and res.payload["state"]["window_index"] == 99

    def test_monitoring_window_aggregates(self, ctx, registry):
        res = registry.invoke("state_get_monitoring_window", dict(RANGE), ctx)
        assert res.ok
        p = res.payload
        assert p["n_states"] == 60
        assert p["mean_hr_bpm"] == pytest.approx(70.0, abs=2.0)
        assert p["max_hr_bpm"] >= p["min_hr_bpm"]

    def test_trend_direction(self, ctx, registry):
        res = registry.invoke(
            "state_get_longitudinal_trend",
            {**RANGE, "field": "hr_bpm"},
            ctx,
        )
        assert res.ok and res.payload["direction"] == "flat"

    def test_trend_rejects_hidden_field(self, ctx, registry):
        res = registry.invoke(
            "state_get_longitudinal_trend",
            {**RANGE, "field": "rhythm_class"},
            ctx,
        )
        assert res.error_code == "unsupported_field"

    def test_evidence_value(self, ctx, registry):
        res = registry.invoke(
            "state_get_evidence", {**RANGE, "target": "max_hr_bpm"}, ctx
        )
        assert res.ok and res.payload["value"] is not None

    def test_evidence_rejects_hidden_target(self, ctx, registry):
        res = registry.invoke(
            "state_get_evidence", {**RANGE, "target": "af_burden_ratio"}, ctx
        )
        assert res.error_code == "unsupported_target"

    def test_capabilities(self, ctx, registry):
        res = registry.invoke("state_get_dataset_capabilities", {"dataset": "wesad"}, ctx)
        assert res.ok and "stress_heuristic" in res.payload["supported_targets"]

    def test_state_builder_rebuilds(self, ctx, registry):
        res = registry.invoke("state_build_from_ppg_patient", {"patient_id": "synth-001"}, ctx)
        assert res.ok and res.payload["n_states"] == 720
