"""Prompt assembly (golden layouts), endpoint client behaviour."""

import json
import os
from pathlib import Path

import httpx
import pytest

from eventgraph.errors import AuthMissing, EndpointUnavailable, MalformedResponse
from eventgraph.refine import (
    EndpointConfig,
    PromptBundle,
    assemble_prompt,
    call_endpoint,
    default_instructions,
    refine_description,
    sample_examples,
    scene_question,
)

GOLDEN_DIR = Path(__file__).parent / "golden"

EXAMPLE_POOL = [
    ("person 0 walks. then, person 1 sits.", "Someone strolls in while another person sits down."),
    ("person 0 reads, possibly involving book.", "A person reads a book."),
    ("person 0 opens door. meanwhile, person 1 writes.", "One person opens the door as another writes."),
    ("person 0 sits.", "A person takes a seat."),
    ("person 1 goes, possibly involving bag.", "Someone leaves carrying a bag."),
]


def bundle_with_shots(shots: int) -> PromptBundle:
    return PromptBundle(
        instructions="Rewrite the event notes as a natural description.",
        proto="person 0 walks. then, person 0 sits, possibly involving chair.",
        scene_context="classroom",
        examples=tuple(EXAMPLE_POOL[:shots]),
    )


def check_golden(name: str, text: str):
    path = GOLDEN_DIR / name
    if os.environ.get("REGEN_GOLDEN"):
        path.parent.mkdir(exist_ok=True)
        path.write_text(text, encoding="utf-8")
    assert path.exists(), f"golden file {name} missing; run with REGEN_GOLDEN=1"
    assert text == path.read_text(encoding="utf-8")


class TestAssemblePrompt:
    @pytest.mark.parametrize("shots", [0, 1, 3, 5])
    def test_golden_layout(self, shots):
        check_golden(f"prompt_{shots}shot.txt",
                     assemble_prompt(bundle_with_shots(shots)))

    def test_zero_shot_has_no_example_section(self):
        assert "Example" not in assemble_prompt(bundle_with_shots(0))

    def test_three_examples_in_order(self):
        text = assemble_prompt(bundle_with_shots(3))
        positions = [text.index(f"Example {i}:") for i in (1, 2, 3)]
        assert positions == sorted(positions)
        for proto, target in EXAMPLE_POOL[:3]:
            assert proto in text and target in text

    def test_deterministic(self):
        assert assemble_prompt(bundle_with_shots(5)) == assemble_prompt(bundle_with_shots(5))

    def test_instructions_required(self):
        with pytest.raises(ValueError):
            PromptBundle(instructions="  ", proto="x")

    def test_default_instructions_mention_latitude(self):
        text = default_instructions()
        assert "object" in text.lower()
        assert "action" in text.lower()
        assert scene_question()  # asset present

    def test_scene_context_included_when_present(self):
        with_scene = assemble_prompt(bundle_with_shots(0))
        assert "Scene context: classroom" in with_scene
        without = assemble_prompt(PromptBundle(
            instructions="Rewrite.", proto="person 0 walks."))
        assert "Scene context" not in without


class TestSampleExamples:
    def test_seeded_and_stable(self):
        a = sample_examples(EXAMPLE_POOL, 3, seed=5)
        b = sample_examples(EXAMPLE_POOL, 3, seed=5)
        assert a == b and len(a) == 3

    def test_different_seeds_can_differ(self):
        draws = {tuple(sample_examples(EXAMPLE_POOL, 3, seed=s)) for s in range(10)}
        assert len(draws) > 1

    def test_pool_too_small(self):
        with pytest.raises(ValueError):
            sample_examples(EXAMPLE_POOL[:2], 3, seed=0)


def echo_transport():
    def handler(request: httpx.Request) -> httpx.Response:
        payload = json.loads(request.content)
        text = payload["messages"][0]["content"]
        return httpx.Response(200, json={
            "choices": [{"message": {"content": text}}]})
    return httpx.MockTransport(handler)


def cfg(**kwargs):
    defaults = dict(base_url="http://mock/v1/chat", model_name="mock-model",
                    max_retries=2)
    defaults.update(kwargs)
    return EndpointConfig(**defaults)


class TestRefineDescription:
    def test_echo_endpoint_returns_prompt(self):
        bundle = bundle_with_shots(0)
        out = refine_description(bundle, cfg(), transport=echo_transport(),
                                 sleep=lambda _: None)
        assert out == assemble_prompt(bundle)

    def test_empty_reply_is_malformed(self):
        transport = httpx.MockTransport(lambda req: httpx.Response(
            200, json={"choices": [{"message": {"content": ""}}]}))
        with pytest.raises(MalformedResponse):
            refine_description(bundle_with_shots(0), cfg(), transport=transport,
                               sleep=lambda _: None)

    def test_missing_text_path_is_malformed(self):
        transport = httpx.MockTransport(lambda req: httpx.Response(200, json={}))
        with pytest.raises(MalformedResponse):
            refine_description(bundle_with_shots(0), cfg(), transport=transport,
                               sleep=lambda _: None)

    def test_retry_counts_and_backoff(self):
        calls = []
        sleeps = []

        def handler(request):
            calls.append(1)
            return httpx.Response(503, text="down")

        with pytest.raises(EndpointUnavailable):
            refine_description(bundle_with_shots(0), cfg(max_retries=2),
                               transport=httpx.MockTransport(handler),
                               sleep=sleeps.append)
        assert len(calls) == 3          # initial + 2 retries
        assert sleeps == [0.5, 1.0]     # exponential backoff

    def test_recovers_after_transient_failure(self):
        state = {"n": 0}

        def handler(request):
            state["n"] += 1
            if state["n"] == 1:
                return httpx.Response(500, text="flaky")
            payload = json.loads(request.content)
            return httpx.Response(200, json={
                "choices": [{"message": {"content": payload["model"]}}]})

        out = refine_description(bundle_with_shots(0), cfg(),
                                 transport=httpx.MockTransport(handler),
                                 sleep=lambda _: None)
        assert out == "mock-model"

    def test_auth_env_missing(self, monkeypatch):
        monkeypatch.delenv("MOCK_TOKEN", raising=False)
        with pytest.raises(AuthMissing):
            refine_description(bundle_with_shots(0),
                               cfg(auth_token_env="MOCK_TOKEN"),
                               transport=echo_transport(),
                               sleep=lambda _: None)

    def test_auth_header_sent(self, monkeypatch):
        monkeypatch.setenv("MOCK_TOKEN", "sekrit")
        seen = {}

        def handler(request):
            seen["auth"] = request.headers.get("authorization")
            return httpx.Response(200, json={
                "choices": [{"message": {"content": "ok"}}]})

        refine_description(bundle_with_shots(0), cfg(auth_token_env="MOCK_TOKEN"),
                           transport=httpx.MockTransport(handler),
                           sleep=lambda _: None)
        assert seen["auth"] == "Bearer sekrit"

    def test_audit_log_appends_every_attempt(self, tmp_path):
        audit = tmp_path / "audit.jsonl"
        state = {"n": 0}

        def handler(request):
            state["n"] += 1
            if state["n"] < 2:
                return httpx.Response(500)
            return httpx.Response(200, json={
                "choices": [{"message": {"content": "done"}}]})

        refine_description(bundle_with_shots(1), cfg(),
                           transport=httpx.MockTransport(handler),
                           audit_log=audit, sleep=lambda _: None)
        lines = [json.loads(l) for l in audit.read_text().splitlines()]
        assert len(lines) == 2
        assert "error" in lines[0] and "response" in lines[1]
        assert all(l["model"] == "mock-model" for l in lines)

    def test_custom_response_path(self):
        transport = httpx.MockTransport(lambda req: httpx.Response(
            200, json={"output": {"text": "hello"}}))
        out = refine_description(
            bundle_with_shots(0),
            cfg(response_text_path="output.text"),
            transport=transport, sleep=lambda _: None)
        assert out == "hello"


class TestRefineMany:
    def test_ordered_results_with_in_flight_cap(self):
        from eventgraph.refine import refine_many
        bundles = [PromptBundle(instructions="Rewrite.", proto=f"note {i}")
                   for i in range(6)]
        results = refine_many(bundles, cfg(), max_in_flight=3,
                              transport=echo_transport(),
                              sleep=lambda _: None)
        assert len(results) == 6
        for i, text in enumerate(results):
            assert f"note {i}" in text

    def test_correlation_ids_in_audit(self, tmp_path):
        from eventgraph.refine import refine_many
        audit = tmp_path / "audit.jsonl"
        bundles = [PromptBundle(instructions="Rewrite.", proto=f"note {i}")
                   for i in range(3)]
        refine_many(bundles, cfg(), max_in_flight=2,
                    transport=echo_transport(), audit_log=audit,
                    sleep=lambda _: None)
        entries = [json.loads(l) for l in audit.read_text().splitlines()]
        ids = {e["request"]["metadata"]["correlation_id"] for e in entries}
        assert ids == {"bundle-0", "bundle-1", "bundle-2"}


class TestQueryScene:
    def test_scene_query_returns_trimmed_answer(self):
        from eventgraph.refine import query_scene
        transport = httpx.MockTransport(lambda req: httpx.Response(
            200, json={"choices": [{"message": {"content": " classroom \n"}}]}))
        scene = query_scene([f"f{i}.jpg" for i in range(12)], cfg(),
                            transport=transport, sleep=lambda _: None)
        assert scene == "classroom"

    def test_scene_query_forwards_frames(self):
        from eventgraph.refine import query_scene
        seen = {}

        def handler(request):
            payload = json.loads(request.content)
            seen["frames"] = payload["metadata"]["frames"]
            return httpx.Response(200, json={
                "choices": [{"message": {"content": "park"}}]})

        frames = [f"f{i}.jpg" for i in range(3)]
        query_scene(frames, cfg(), transport=httpx.MockTransport(handler),
                    sleep=lambda _: None)
        assert seen["frames"] == frames
