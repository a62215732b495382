"""HTTP completion backends against a faked transport."""
import json

import pytest
import requests

from pulsewatch.agent import HttpCompletionBackend
from pulsewatch.errors import BackendError, BackendTimeout
from pulsewatch.judge import (
    JUDGE_PROMPT_TEMPLATE,
    GuidelineStore,
    HttpJudgeBackend,
    JudgeSnapshot,
    judge_checkpoint,
)


class _FakeResponse:
    def __init__(self, payload, status_code=200):
        self._payload = payload
        self.status_code = status_code

    def json(self):
        return self._payload


def completion(text):
    return _FakeResponse({"choices": [{"text": text}]})


@pytest.fixture()
def backend():
    return HttpCompletionBackend(endpoint_url="http://fake/complete", model="m")


class TestHttpCompletionBackend:
    def test_happy_path_and_request_shape(self, backend, monkeypatch):
        seen = {}

        def fake_post(url, json=None, headers=None, timeout=None):
            seen.update(url=url, body=json)
            return completion("42 bpm")

        monkeypatch.setattr(requests, "post", fake_post)
        assert backend.complete("prompt text") == "42 bpm"
        assert seen["url"] == "http://fake/complete"
        assert seen["body"]["temperature"] == 0
        assert seen["body"]["model"] == "m"

    def test_non_200_raises(self, backend, monkeypatch):
        monkeypatch.setattr(requests, "post", lambda *a, **k: _FakeResponse({}, 500))
        with pytest.raises(BackendError):
            backend.complete("p")

    def test_timeout_maps(self, backend, monkeypatch):
        def boom(*a, **k):
            raise requests.Timeout("deadline")

        monkeypatch.setattr(requests, "post", boom)
        with pytest.raises(BackendTimeout):
            backend.complete("p")

    def test_missing_endpoint_is_backend_error(self, monkeypatch):
        monkeypatch.delenv("PULSEWATCH_LLM_URL", raising=False)
        with pytest.raises(BackendError):
            HttpCompletionBackend(endpoint_url="").complete("p")

    def test_unexpected_shape(self, backend, monkeypatch):
        monkeypatch.setattr(
            requests, "post", lambda *a, **k: _FakeResponse({"nope": 1})
        )
        with pytest.raises(BackendError):
            backend.complete("p")


def snapshot():
    return JudgeSnapshot(
        hr_bpm=72.0, rhythm_class="AF", af_episode_duration_s=900.0,
        tachycardia_ratio_5min=0.1, tachycardia_sample_count=30,
    )


class TestHttpJudgeBackend:
    def test_tool_call_conversation(self, monkeypatch):
        store = GuidelineStore.bundled()
        first = store.summaries()[0]
        replies = [
            json.dumps({"tool_call": {
                "name": "read_guideline_section",
                "args": {"guideline_id": first["guideline_id"],
                         "section_id": first["section_id"]},
            }}),
            json.dumps({
                "intervene": True, "urgency": "medium",
                "reason": "persistent irregular rhythm",
                "advice": "Please consult a healthcare professional.",
                "cited_sections": [{"guideline_id": first["guideline_id"],
                                    "section_id": first["section_id"]}],
            }),
        ]
        prompts = []

        def fake_post(url, json=None, headers=None, timeout=None):
            prompts.append(json["prompt"])
            return completion(replies[len(prompts) - 1])

        monkeypatch.setattr(requests, "post", fake_post)
        backend = HttpJudgeBackend(endpoint_url="http://fake/complete", model="m")
        decision, diag = judge_checkpoint(snapshot(), [], store, backend)
        assert decision.intervene and decision.urgency == "medium"
        assert diag is None
        # the served tool result was appended into the follow-up prompt
        assert "full_text" in prompts[1]
        # snapshot fields rode along in the rendered prompt
        assert '"af_episode_duration_s": 900.0' in prompts[0]

    def test_runaway_conversation_fails_quiet(self, monkeypatch):
        store = GuidelineStore.bundled()
        first = store.summaries()[0]
        tool_call = json.dumps({"tool_call": {
            "name": "read_guideline_section",
            "args": {"guideline_id": first["guideline_id"],
                     "section_id": first["section_id"]},
        }})
        monkeypatch.setattr(requests, "post", lambda *a, **k: completion(tool_call))
        backend = HttpJudgeBackend(endpoint_url="http://fake/complete", max_rounds=4)
        decision, diag = judge_checkpoint(snapshot(), [], store, backend)
        assert not decision.intervene
        assert diag.kind == "backend_error"
        # budget capped the served reads at 3 even though 4 rounds asked
        assert diag.rejected_tool_calls >= 1


class TestPromptTemplates:
    def test_judge_template_renders(self):
        text = JUDGE_PROMPT_TEMPLATE.format(
            snapshot_json=json.dumps(snapshot().to_dict()),
            fired_rules="[]",
            tool_budget=3,
            guideline_summaries="[]",
        )
        assert "read_guideline_section" in text
        assert '"intervene"' in text
