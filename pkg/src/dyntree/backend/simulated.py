"""Deterministic stand-in for a hosted LLM, answering from a ``SyntheticWorld``.

Every response is a pure function of (request, world, seed). Temperature only
matters for decomposition in rigged worlds: a temperature-0 decomposition can
be wrong, while a diverse (resampled) one never is.
"""

from __future__ import annotations

from ..world import SyntheticWorld, stable_hash
from .base import BackendRequest, BackendResponse, BackendResponseError, CallAccounting, RequestKind
from .judge import f1_judge


class SimulatedBackend:
    def __init__(self, world: SyntheticWorld, model_id: str = "simulated-oracle"):
        self.world = world
        self.model_id = model_id
        self.accounting = CallAccounting()

    def complete(self, request: BackendRequest) -> BackendResponse:
        handler = {
            RequestKind.CLOSED_BOOK: self._closed_book,
            RequestKind.OPEN_BOOK: self._open_book,
            RequestKind.DECOMPOSE: self._decompose,
            RequestKind.REFORMULATE: self._reformulate,
            RequestKind.AGGREGATE: self._aggregate,
            RequestKind.JUDGE: self._judge,
        }[request.kind]
        try:
            text, logprobs = handler(request.payload, request)
        except KeyError as exc:
            raise BackendResponseError(f"simulated backend needs payload field {exc}") from exc
        self.accounting.charge(1, judge=request.kind is RequestKind.JUDGE)
        return BackendResponse(text, tuple(logprobs), 1)

    def _answer(self, question: str, kind: str, correct: bool, good: float, bad: float):
        w = self.world
        gold = w.gold_for(question)
        if correct and gold is not None:
            return gold, w.logprobs(gold, good, kind, question)
        wrong = w.distractor(kind, question, avoid=gold)
        return wrong, w.logprobs(wrong, bad, kind, question)

    def _closed_book(self, payload, request):
        w = self.world
        q = payload["question"]
        parsed = w.parse(q)
        ok = parsed is not None and parsed.depth == 1 and w.fact_profile(parsed)[0]
        return self._answer(q, "cb", ok, w.config.cb_logprob, w.config.cb_wrong_logprob)

    def _open_book(self, payload, request):
        w = self.world
        q = payload["question"]
        parsed = w.parse(q)
        ok = False
        if parsed is not None and parsed.depth == 1:
            doc = w.passage_for((parsed.entity, parsed.relations[0]))
            ok = doc is not None and doc.text in payload["passages"]
        return self._answer(q, "ob", ok, w.config.ob_logprob, w.config.ob_wrong_logprob)

    def _decompose(self, payload, request):
        w = self.world
        q = payload["question"]
        parsed = w.parse(q)
        if parsed is None:
            subs = [q]
        else:
            rigged = (request.temperature == 0.0 and parsed.depth > 1
                      and (stable_hash(w.seed, "rig", q) % 10_000) / 10_000.0 < w.config.rigged_rate)
            subs = w.decomposition(parsed, wrong=rigged)
        return "\n".join(f"{i + 1}. {s}" for i, s in enumerate(subs)), []

    def _reformulate(self, payload, request):
        return self.world.paraphrase(payload["question"]), []

    def _aggregate(self, payload, request):
        pairs = payload["pairs"]
        answer = pairs[-1][1]
        return answer, self.world.logprobs(answer, self.world.config.aggregate_logprob,
                                           "agg", payload["question"])

    def _judge(self, payload, request):
        return str(f1_judge(payload["predicted"], payload["gold"])), []
