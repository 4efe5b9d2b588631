import json
from pathlib import Path

import httpx
import numpy as np
import pytest

from leverbench.icl import (
    PIPELINE_HINTS,
    AuthError,
    ChatClient,
    EndpointConfig,
    ICLResult,
    LLMError,
    ParseFailure,
    PromptSpec,
    QuotaError,
    TransportFailure,
    _test_inputs,
    build_icl_prompt,
    build_pipeline_prompt,
    extract_test_lines,
    malformed_responder,
    mock_transport,
    parse_probability_list,
    run_icl,
    run_icl_experiment,
    run_pipeline_prompts,
    score_icl,
    truth_responder,
)
from leverbench.sampling import render_input, render_sample, sample_dataset
from leverbench.world import world_1, world_3

GOLDEN = Path(__file__).parent / "golden"


def _lines(world, n_train, n_test, seed=0):
    train = sample_dataset(world, n_train, seed)
    tests = _test_inputs(world, n_test, seed)
    return (
        tuple(render_sample(world, s) for s in train),
        tuple(render_input(world, x) for x in tests),
    )


class TestPrompts:
    def test_icl_golden(self, w1):
        train, tests = _lines(w1, 10, 5)
        prompt = build_icl_prompt(PromptSpec("icl", train, tests))
        assert prompt == (GOLDEN / "icl_world1_n10_t5_seed0.txt").read_text(encoding="utf-8")

    def test_icl_line_counts_and_order(self, w1):
        train, tests = _lines(w1, 10, 5)
        prompt = build_icl_prompt(PromptSpec("icl", train, tests))
        body = prompt.splitlines()
        assert sum("balance:" in line for line in body) == 10
        assert extract_test_lines(prompt) == list(tests)
        positions = [prompt.index(line) for line in train]
        assert positions == sorted(positions)

    def test_empty_tests_rejected(self, w1):
        train, _ = _lines(w1, 3, 1)
        with pytest.raises(ValueError):
            build_icl_prompt(PromptSpec("icl", train, ()))

    def test_outcome_in_test_line_rejected(self, w1):
        train, _ = _lines(w1, 3, 1)
        with pytest.raises(ValueError):
            PromptSpec("icl", train, (train[0],))

    @pytest.mark.parametrize("level", [0, 1, 2, 3])
    def test_pipeline_golden(self, w1, level):
        # first three lines of the 10-sample set used for the in-context golden file
        train, _ = _lines(w1, 10, 5)
        prompt = build_pipeline_prompt(PromptSpec("pipeline", train[:3], hint_level=level))
        assert prompt == (GOLDEN / f"pipeline_world1_n3_seed0_hint{level}.txt").read_text(encoding="utf-8")
        for i, hint in enumerate(PIPELINE_HINTS):
            assert (hint in prompt) == (i < level)

    def test_bad_hint_level(self):
        with pytest.raises(ValueError):
            PromptSpec("pipeline", ("a",), hint_level=4)


class TestParse:
    @pytest.mark.parametrize("text,n,expected", [
        ("[0.5, 0.9]", 2, [0.5, 0.9]),
        ("Sure! Here: [0.1, 0.2, 0.3]", 3, [0.1, 0.2, 0.3]),
        ("[1, 0]", 2, [1.0, 0.0]),
        ("```python\n[0.25,\n 0.75,]\n```", 2, [0.25, 0.75]),
    ])
    def test_valid(self, text, n, expected):
        assert parse_probability_list(text, n) == expected

    @pytest.mark.parametrize("text,n", [
        ("[0.5, 1.4]", 2),
        ("[0.5]", 2),
        ("[0.5, high]", 2),
        ("no list at all", 1),
        ("", 1),
        ("[-0.1]", 1),
    ])
    def test_invalid(self, text, n):
        with pytest.raises(ParseFailure):
            parse_probability_list(text, n)


def _client(responder, **config):
    return ChatClient(EndpointConfig(**config), transport=mock_transport(responder), sleep=lambda s: None)


class _Flaky:
    """Transport that fails ``failures`` times before answering."""

    def __init__(self, failures, kind="connect", status=200):
        self.failures = failures
        self.kind = kind
        self.status = status
        self.calls = 0

    def __call__(self, request):
        self.calls += 1
        if self.calls <= self.failures:
            if self.kind == "connect":
                raise httpx.ConnectError("connection refused", request=request)
            return httpx.Response(self.status, text="busy")
        return httpx.Response(200, json={"choices": [{"message": {"content": "[0.5]"}}]})


class TestClient:
    def test_mock_round_trip(self):
        client = _client(lambda prompt: f"echo {len(prompt)}")
        assert client.complete("abc") == "echo 3"
        req = client.audit[0]["request"]
        assert req["temperature"] == 0.0 and req["messages"][0]["content"] == "abc"

    @pytest.mark.parametrize("kind,status", [("connect", 200), ("status", 503)])
    def test_retries_with_backoff(self, kind, status):
        sleeps = []
        flaky = _Flaky(3, kind, status)
        client = ChatClient(EndpointConfig(backoff=0.5), transport=httpx.MockTransport(flaky), sleep=sleeps.append)
        assert client.complete("x") == "[0.5]"
        assert flaky.calls == 4
        assert sleeps == [0.5, 1.0, 2.0]

    def test_gives_up_after_max_retries(self):
        flaky = _Flaky(10)
        client = ChatClient(EndpointConfig(), transport=httpx.MockTransport(flaky), sleep=lambda s: None)
        with pytest.raises(TransportFailure):
            client.complete("x")
        assert flaky.calls == 4

    @pytest.mark.parametrize("status,error", [(401, AuthError), (403, AuthError), (429, QuotaError), (400, LLMError)])
    def test_distinct_errors_not_retried(self, status, error):
        flaky = _Flaky(10, "status", status)
        client = ChatClient(EndpointConfig(), transport=httpx.MockTransport(flaky), sleep=lambda s: None)
        with pytest.raises(error):
            client.complete("x")
        assert flaky.calls == 1

    def test_missing_credential(self, monkeypatch):
        monkeypatch.delenv("OPENAI_API_KEY", raising=False)
        with pytest.raises(AuthError, match="OPENAI_API_KEY"):
            ChatClient(EndpointConfig()).complete("x")

    def test_credential_from_environment(self, monkeypatch):
        monkeypatch.setenv("LEVERBENCH_TEST_KEY", "sk-test")
        seen = {}

        def handler(request):
            seen["auth"] = request.headers["authorization"]
            seen["url"] = str(request.url)
            return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

        cfg = EndpointConfig(api_key_env="LEVERBENCH_TEST_KEY", base_url="http://llm.invalid/v1/")
        ChatClient(cfg, transport=httpx.MockTransport(handler)).complete("x")
        assert seen == {"auth": "Bearer sk-test", "url": "http://llm.invalid/v1/chat/completions"}

    def test_audit_file(self, tmp_path):
        path = tmp_path / "audit.jsonl"
        client = ChatClient(EndpointConfig(), transport=mock_transport(lambda p: "hi"), audit_path=path)
        client.complete("one")
        client.complete("two")
        records = [json.loads(line) for line in path.read_text().splitlines()]
        assert [r["request"]["messages"][0]["content"] for r in records] == ["one", "two"]
        assert all("time" in r and r["status"] == 200 for r in records)


class TestExperiments:
    def test_truth_endpoint_scores_perfectly(self):
        worlds = [world_1(), world_3()]
        results = []
        for w in worlds:
            results += run_icl([w], _client(truth_responder(w)), context_sizes=(10, 100), n_sets=2)
        summary = score_icl(results)
        assert summary["mean_tv"] == 0.0
        assert summary["frac_below"] == 1.0
        assert summary["n_failed"] == 0 and summary["n_experiments"] == 8

    def test_malformed_endpoint_scores_one(self, w1):
        results = run_icl([w1], _client(malformed_responder), context_sizes=(10,), n_sets=2, n_test=7)
        assert all(r.failed and r.tv == [1.0] * 7 for r in results)
        summary = score_icl(results)
        assert summary["mean_tv"] == 1.0 and summary["frac_below"] == 0.0

    def test_transport_failure_scores_one(self, w1):
        client = ChatClient(EndpointConfig(), transport=httpx.MockTransport(_Flaky(100)), sleep=lambda s: None)
        r = run_icl_experiment(w1, 10, 0, client, n_test=4)
        assert r.failed and r.tv == [1.0] * 4 and "TransportFailure" in r.error

    def test_wrong_length_scores_one(self, w1):
        r = run_icl_experiment(w1, 10, 0, _client(lambda p: "[0.5]"), n_test=3)
        assert r.failed and r.mean_tv == 1.0

    def test_partial_answer_scored(self, w1):
        r = run_icl_experiment(w1, 10, 0, _client(lambda p: "[0.5, 0.5]"), n_test=2)
        assert not r.failed
        np.testing.assert_allclose(r.tv, np.abs(0.5 - np.array(r.true_probabilities)))

    def test_concurrent_matches_sequential(self, w1):
        a = run_icl([w1], _client(truth_responder(w1)), context_sizes=(10, 20), n_sets=2)
        b = run_icl([w1], _client(truth_responder(w1)), context_sizes=(10, 20), n_sets=2, max_concurrent=3)
        assert [r.to_dict() for r in a] == [r.to_dict() for r in b]

    def test_score_threshold(self):
        rs = [ICLResult("w", 10, 0, [0.5], [0.55], [0.05]), ICLResult("w", 10, 1, [0.5], [0.8], [0.3])]
        s = score_icl(rs)
        assert s["frac_below"] == 0.5 and s["mean_tv"] == pytest.approx(0.175)
        with pytest.raises(ValueError):
            score_icl([])


class TestPipeline:
    def test_response_kept_as_text(self, w1):
        code = "def parse_samples(lines):\n    raise SystemExit('must not run')\n"
        rec = run_pipeline_prompts(w1, _client(lambda p: code), 5, 0, hint_level=3)
        assert rec.response == code and rec.executed is False
        assert all(h in rec.prompt for h in PIPELINE_HINTS)

    def test_failure_recorded(self, w1):
        client = ChatClient(EndpointConfig(), transport=httpx.MockTransport(_Flaky(10, "status", 401)))
        rec = run_pipeline_prompts(w1, client, 5, 0)
        assert rec.response is None and "AuthError" in rec.error
