from __future__ import annotations

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyntree.backend.base import (BackendRequest, BackendResponseError, BackendTransportError,
                                  CachedBackend, RequestKind, cache_key)
from dyntree.backend.client import DecompositionFailed, KnowledgeClient, parse_decomposition
from dyntree.backend.http import HttpChatBackend, parse_chat_response
from dyntree.backend.judge import f1_judge, normalize_answer, token_f1
from dyntree.backend.simulated import SimulatedBackend

from conftest import ScriptedBackend, find_record


def _leaf(world, records, want_mem: bool):
    return find_record(world, records, 1, ["mem" if want_mem else "ret"])


def test_closed_book_memorized_and_not(sim):
    world, records, backend, _ = sim
    client = KnowledgeClient(backend)
    rec = _leaf(world, records, True)
    res = client.answer_closed_book(rec.question)
    assert res.answer_text == rec.gold_answer
    assert np.mean(res.token_logprobs) == pytest.approx(-0.1)
    rec = _leaf(world, records, False)
    res = client.answer_closed_book(rec.question)
    assert res.answer_text != rec.gold_answer
    assert np.mean(res.token_logprobs) == pytest.approx(-3.0)


def test_counter_increments(sim):
    world, records, backend, _ = sim
    client = KnowledgeClient(backend)
    for _ in range(7):
        client.answer_closed_book(records[0].question)
    assert client.calls == 7
    client.answer_closed_book(records[0].question)
    assert client.calls == 8


def test_open_book_with_and_without_gold_passage(sim):
    world, records, backend, retriever = sim
    client = KnowledgeClient(backend)
    rec = _leaf(world, records, False)
    parsed = world.parse(rec.question)
    gold_doc = world.passage_for((parsed.entity, parsed.relations[0]))
    res = client.answer_open_book(rec.question, [gold_doc.text])
    assert res.answer_text == rec.gold_answer
    assert np.mean(res.token_logprobs) == pytest.approx(-0.2)
    res = client.answer_open_book(rec.question, ["nothing relevant here."])
    assert res.answer_text != rec.gold_answer
    assert np.mean(res.token_logprobs) == pytest.approx(-2.5)
    with pytest.raises(ValueError):
        client.answer_open_book(rec.question, [])


def test_decompose_composite_and_atomic(sim):
    world, records, backend, _ = sim
    client = KnowledgeClient(backend)
    rec = find_record(world, records, 2)
    outer, inner = world.parse(rec.question).relations
    entity = world.parse(rec.question).entity
    subs, calls = client.decompose(rec.question)
    assert calls == 1
    assert subs == [f"What is the {inner} of {entity}?", f"What is the {outer} of #1?"]
    leaf = find_record(world, records, 1)
    assert client.decompose(leaf.question)[0] == [leaf.question]


def test_parse_decomposition_strategies():
    assert parse_decomposition("1. a?\n2) b?") == ["a?", "b?"]
    assert parse_decomposition('Here: ["x?", "y?"]') == ["x?", "y?"]
    with pytest.raises(DecompositionFailed):
        parse_decomposition("no idea")
    assert len(parse_decomposition("\n".join(f"{i}. q{i}" for i in range(1, 9)), 5)) == 5


def test_decompose_failure_reports_calls():
    client = KnowledgeClient(ScriptedBackend({RequestKind.DECOMPOSE: [("no idea", ())]}))
    with pytest.raises(DecompositionFailed) as info:
        client.decompose("What is it?")
    assert info.value.calls == 1


def test_reformulate(sim):
    world, records, backend, _ = sim
    client = KnowledgeClient(backend)
    q = records[0].question
    assert client.reformulate(q) == client.reformulate(q)
    empty = KnowledgeClient(ScriptedBackend({RequestKind.REFORMULATE: [("", ())]}))
    assert empty.reformulate("Who?") == ("Who?", 1)


def test_reformulate_bypasses_cache(sim):
    _, records, backend, _ = sim
    cached = CachedBackend(backend)
    client = KnowledgeClient(cached)
    client.reformulate(records[0].question)
    client.reformulate(records[0].question)
    assert client.calls == 2 and cached.hits == 0


def test_aggregate(sim):
    _, _, backend, _ = sim
    client = KnowledgeClient(backend)
    res = client.aggregate_children("river of capital of France?",
                                    [("capital of France?", "Paris"), ("river of Paris?", "Seine")])
    assert res.answer_text == "Seine"
    assert client.aggregate_children("q?", [("a?", "Only")]).answer_text == "Only"
    with pytest.raises(ValueError):
        client.aggregate_children("q?", [("a?", "")])
    with pytest.raises(ValueError):
        client.aggregate_children("q?", [])


def test_judge_examples():
    client = KnowledgeClient(ScriptedBackend())
    assert client.judge("q", "Paris", "Paris") == 1
    assert client.judge("q", "the Paris", "paris") == 1
    assert client.judge("q", "London", "Paris") == 0
    assert client.judge("q", "", "Paris") == 0
    assert normalize_answer("The  Eiffel, Tower!") == "eiffel tower"


def test_llm_judge_counts_as_judge_call():
    backend = ScriptedBackend({RequestKind.JUDGE: [("1", ())]})
    client = KnowledgeClient(backend, judge_mode="llm")
    assert client.judge("q", "a", "a") == 1
    assert client.calls == 0 and client.accounting.judge_calls == 1


@settings(max_examples=100, deadline=None)
@given(st.text(min_size=1).filter(lambda s: normalize_answer(s)))
def test_judge_reflexive(text):
    assert f1_judge(text, text) == 1
    assert token_f1(text, text) == 1.0


def test_cache_hits_and_keys(sim):
    _, records, backend, _ = sim
    cached = CachedBackend(backend)
    client = KnowledgeClient(cached)
    client.answer_closed_book(records[0].question)
    client.answer_closed_book(records[0].question)
    assert client.calls == 1 and cached.hits == 1
    a = BackendRequest(RequestKind.CLOSED_BOOK, "p", temperature=0.0)
    b = BackendRequest(RequestKind.CLOSED_BOOK, "p", temperature=0.7)
    assert cache_key(a, "m") != cache_key(b, "m")
    assert cache_key(a, "m") != cache_key(a, "other-model")


def test_cache_temperature_charges_both():
    inner = ScriptedBackend()
    cached = CachedBackend(inner)
    cached.complete(BackendRequest(RequestKind.CLOSED_BOOK, "p", temperature=0.0))
    cached.complete(BackendRequest(RequestKind.CLOSED_BOOK, "p", temperature=0.5))
    assert cached.accounting.inference_calls == 2


def test_cache_on_disk_survives_new_instance(tmp_path):
    req = BackendRequest(RequestKind.CLOSED_BOOK, "prompt")
    first = CachedBackend(ScriptedBackend(default=("Paris", (-0.3,))), tmp_path)
    first.complete(req)
    inner = ScriptedBackend(default=("WRONG", ()))
    second = CachedBackend(inner, tmp_path)
    resp = second.complete(req)
    assert resp.text == "Paris" and resp.calls_charged == 0 and inner.requests == []
    # a corrupt entry degrades to a miss
    for f in tmp_path.glob("*.json"):
        f.write_text("{broken")
    third = CachedBackend(ScriptedBackend(default=("Rome", ())), tmp_path)
    assert third.complete(req).text == "Rome"


def test_simulated_is_pure(small_world):
    world, records, _ = small_world
    a, b = SimulatedBackend(world), SimulatedBackend(world)
    for rec in records[:20]:
        for kind in (RequestKind.CLOSED_BOOK, RequestKind.DECOMPOSE):
            req = BackendRequest(kind, "x", payload={"question": rec.question})
            assert a.complete(req) == b.complete(req)


# -- http ----------------------------------------------------------------
_OK = {"choices": [{"message": {"content": "Paris"},
                    "logprobs": {"content": [{"token": "Par", "logprob": -0.1},
                                             {"token": "is", "logprob": -0.3}]}}]}


def _http(handler, **kw):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return HttpChatBackend("m", base_url="http://test/v1", api_key="k", client=client,
                           sleep=lambda s: None, **kw)


def test_http_success_and_request_shape():
    seen = []

    def handler(request):
        seen.append(request)
        return httpx.Response(200, json=_OK)

    backend = _http(handler)
    resp = backend.complete(BackendRequest(RequestKind.CLOSED_BOOK, "hello", temperature=0.7))
    assert resp.text == "Paris" and resp.token_logprobs == (-0.1, -0.3)
    assert seen[0].url == "http://test/v1/chat/completions"
    assert seen[0].headers["authorization"] == "Bearer k"
    body = __import__("json").loads(seen[0].content)
    assert body["temperature"] == 0.7 and body["logprobs"] is True
    assert body["messages"][0]["content"] == "hello"


def test_http_retries_then_charges_once():
    codes = iter([503, 429, 200])

    def handler(request):
        code = next(codes)
        return httpx.Response(code, json=_OK if code == 200 else {})

    backend = _http(handler)
    assert backend.complete(BackendRequest(RequestKind.CLOSED_BOOK, "q")).text == "Paris"
    assert backend.accounting.inference_calls == 1


def test_http_gives_up_and_client_errors():
    backend = _http(lambda r: httpx.Response(500))
    with pytest.raises(BackendTransportError):
        backend.complete(BackendRequest(RequestKind.CLOSED_BOOK, "q"))

    def boom(request):
        raise httpx.ConnectError("down", request=request)

    with pytest.raises(BackendTransportError):
        _http(boom).complete(BackendRequest(RequestKind.CLOSED_BOOK, "q"))
    with pytest.raises(BackendResponseError):
        _http(lambda r: httpx.Response(400, text="bad")).complete(
            BackendRequest(RequestKind.CLOSED_BOOK, "q"))


def test_parse_chat_response_variants():
    assert parse_chat_response({"choices": [{"message": {"content": "x"}}]}) == ("x", ())
    legacy = {"choices": [{"message": {"content": "x"}, "logprobs": {"token_logprobs": [-1.0, None]}}]}
    assert parse_chat_response(legacy) == ("x", (-1.0,))
    with pytest.raises(BackendResponseError):
        parse_chat_response({"nope": 1})


def test_http_needs_base_url(monkeypatch):
    monkeypatch.delenv("DYNTREE_API_BASE", raising=False)
    with pytest.raises(BackendTransportError):
        HttpChatBackend()
