from __future__ import annotations

import json
import random
from dataclasses import replace

import httpx
import pytest

import helpers
from newsbreadth.dataset import (
    CassetteMiss,
    ExampleMeta,
    ExampleSkipped,
    HttpChatClient,
    InstructionExample,
    LlmRequest,
    LlmResponse,
    RateLimitedClient,
    RateLimiter,
    RecordingClient,
    ReplayClient,
    TeacherAuthError,
    TeacherError,
    TeacherSettings,
    export_jsonl,
    generate_example,
    generate_examples,
    label_tokens,
    leakage_audit,
    load_jsonl,
    skip_log_text,
)
from newsbreadth.evaluation import parse_analysis
from newsbreadth.labeling import MovementLabel
from newsbreadth.prompting import PromptMode
from newsbreadth.synthetic import ScriptedTeacher

REQ = LlmRequest("m", (("system", "s"), ("user", "u")))


def truth_bundle(seed=0, mode=PromptMode.HGNC):
    return helpers.random_bundle(random.Random(seed), mode, with_truth=True)


class Canned:
    """Returns queued texts in order and records every request."""

    def __init__(self, *texts):
        self.texts = list(texts)
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        return LlmResponse(self.texts.pop(0))


def test_request_key_is_stable_and_attempt_sensitive():
    assert REQ.key() == LlmRequest("m", (("system", "s"), ("user", "u"))).key()
    assert REQ.key() != replace(REQ, attempt=1).key()
    assert REQ.key() != replace(REQ, temperature=0.5).key()
    assert len(REQ.key()) == 64
    assert REQ.user_text == "u"


def test_record_then_replay(tmp_path):
    rec = RecordingClient(Canned("hello"), tmp_path / "cas")
    assert rec.complete(REQ).text == "hello"
    stored = json.loads((tmp_path / "cas" / f"{REQ.key()}.json").read_text())
    assert stored["request"]["attempt"] == 0
    replay = ReplayClient(tmp_path / "cas")
    assert replay.complete(REQ) == LlmResponse("hello")
    with pytest.raises(CassetteMiss):
        replay.complete(replace(REQ, attempt=1))
    with pytest.raises(TeacherError):
        ReplayClient(tmp_path / "missing")


def _http(handler, **kw):
    return HttpChatClient("http://llm.test/v1", "k", backoff=0, transport=httpx.MockTransport(handler), **kw)


def _ok(text):
    return httpx.Response(200, json={"choices": [{"message": {"content": text}, "finish_reason": "stop"}]})


def test_http_client_retries_transient_failures():
    calls = []

    def handler(request):
        calls.append(json.loads(request.content))
        assert request.headers["authorization"] == "Bearer k"
        return httpx.Response(503) if len(calls) < 3 else _ok("fine")

    assert _http(handler).complete(REQ).text == "fine"
    assert len(calls) == 3 and calls[0]["messages"][1] == {"role": "user", "content": "u"}


def test_http_client_errors():
    with pytest.raises(TeacherAuthError):
        _http(lambda r: httpx.Response(401)).complete(REQ)
    with pytest.raises(TeacherError, match="malformed"):
        _http(lambda r: httpx.Response(200, json={"choices": []})).complete(REQ)
    with pytest.raises(TeacherError, match="after 2 attempts"):
        _http(lambda r: httpx.Response(429), max_retries=1).complete(REQ)
    with pytest.raises(TeacherError, match="empty"):
        _http(lambda r: _ok("  "), max_retries=0).complete(REQ)
    with pytest.raises(TeacherError, match="HTTP 400"):
        _http(lambda r: httpx.Response(400, text="bad")).complete(REQ)


class FakeClock:
    def __init__(self):
        self.now = 0.0
        self.slept = []

    def __call__(self):
        return self.now

    def sleep(self, dt):
        self.slept.append(dt)
        self.now += dt


def test_rate_limiter_spaces_requests():
    clock = FakeClock()
    limiter = RateLimiter(2.0, burst=2, clock=clock, sleep=clock.sleep)
    client = RateLimitedClient(Canned(*"abcde"), limiter)
    for _ in range(5):
        client.complete(REQ)
    # two free tokens, then one every half second
    assert clock.now == pytest.approx(1.5)
    assert all(dt == pytest.approx(0.5) for dt in clock.slept)
    with pytest.raises(ValueError):
        RateLimiter(0)


def test_generate_example_strips_outcome():
    bundle = truth_bundle(1)
    ex = generate_example(bundle, ScriptedTeacher())
    assert "[Known Outcome]" not in ex.prompt
    assert parse_analysis(ex.completion).predicted_label == bundle.ground_truth_label
    assert ex.meta.actual_label == str(bundle.ground_truth_label)
    assert ex.meta.mode == "HGNC" and ex.meta.ticker == bundle.ticker


def test_retry_then_success_and_skip():
    bundle = truth_bundle(2)
    good = ScriptedTeacher().complete(LlmRequest("m", (("user", "x"),))).text  # valid shape, label U1
    good = good.replace("U1", str(bundle.ground_truth_label))
    broken = good.replace("[Potential Concerns]", "Concerns:")
    teacher = Canned(broken, good)
    ex = generate_example(bundle, teacher)
    assert [r.attempt for r in teacher.requests] == [0, 1]
    assert ex.completion == good.strip() + "\n"
    with pytest.raises(ExampleSkipped, match=r"\[Potential Concerns\]"):
        generate_example(bundle, Canned(broken, broken, broken))


def test_label_mismatch_is_retried_unless_disabled():
    bundle = truth_bundle(3)
    other = helpers.flip(bundle.ground_truth_label)
    text = ScriptedTeacher().complete(LlmRequest("m", (("user", "x"),))).text.replace("U1", str(other))
    with pytest.raises(ExampleSkipped, match="known outcome"):
        generate_example(bundle, Canned(text, text, text))
    ex = generate_example(bundle, Canned(text), TeacherSettings(require_label_match=False))
    assert parse_analysis(ex.completion).predicted_label == other
    with pytest.raises(ValueError):
        generate_example(replace(bundle, ground_truth_label=None, ground_truth_return=None), Canned(text))


def test_generate_examples_orders_and_logs_skips():
    bundles = [truth_bundle(s, m) for s in range(6) for m in PromptMode]
    result = generate_examples(bundles, ScriptedTeacher(broken=0.3), max_in_flight=4)
    assert len(result.examples) + len(result.skipped) == len(bundles)
    assert result.skipped
    keys = [e.sort_key() for e in result.examples]
    assert keys == sorted(keys)
    log = skip_log_text(result.skipped)
    assert len(log.splitlines()) == len(result.skipped) and all(line.count("\t") == 2 for line in log.splitlines())


def _example(ticker, start, mode="HG", prompt="p", label="U2"):
    return InstructionExample(prompt, "c\n", ExampleMeta(ticker, "2024-06-09", start, "2024-06-22", mode, label, 0.012))


def test_export_jsonl_round_trip_and_order(tmp_path):
    exs = [_example("XOM", "2024-06-16"), _example("BA", "2024-06-23"), _example("BA", "2024-06-16", "HGNC"), _example("BA", "2024-06-16")]
    path = export_jsonl(exs, tmp_path / "d.jsonl")
    back = load_jsonl(path)
    assert [e.sort_key() for e in back] == sorted(e.sort_key() for e in exs)
    assert set(json.loads(path.read_text().splitlines()[0])) == {"instruction", "output", "meta"}
    assert export_jsonl([], tmp_path / "e.jsonl").read_text() == ""
    assert load_jsonl(tmp_path / "e.jsonl") == []


def test_leakage_audit():
    assert label_tokens("moved u2 then D5+ and U9") == {"U2", "D5+"}
    clean = _example("BA", "2024-06-16", prompt="Weekly return +1.20%, no labels here")
    leaky = _example("BA", "2024-06-23", prompt="last week was u2")
    other = _example("BA", "2024-06-30", prompt="last week was U3")
    assert leakage_audit([clean, leaky, other]) == [leaky]


def test_scripted_teacher_dataset_has_no_leaks():
    bundles = [truth_bundle(s, m) for s in range(10, 16) for m in PromptMode]
    result = generate_examples(bundles, ScriptedTeacher(flaky=0.5))
    assert len(result.examples) == len(bundles) and not result.skipped
    assert leakage_audit(result.examples) == []
    assert all(MovementLabel.parse(e.meta.actual_label) for e in result.examples)
