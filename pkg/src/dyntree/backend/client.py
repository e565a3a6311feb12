from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass

from ..tree import StrategyResult
from .base import Backend, BackendRequest, CallAccounting, RequestKind
from .judge import F1_THRESHOLD, f1_judge
from .prompts import PromptSet, format_pairs, format_passages

logger = logging.getLogger(__name__)

_NUMBERED = re.compile(r"^\s*(\d+)\s*[.)]\s*(.+?)\s*$")


class DecompositionFailed(ValueError):
    pass


@dataclass(frozen=True)
class SamplingConfig:
    temperature: float = 0.0
    diverse_temperature: float = 0.7


def parse_decomposition(text: str, max_children: int = 5) -> list[str]:
    """Numbered list first, then a JSON array of strings."""
    items = []
    for line in text.splitlines():
        m = _NUMBERED.match(line)
        if m and m.group(2):
            items.append(m.group(2))
    if not items:
        start, end = text.find("["), text.rfind("]")
        if start != -1 and end > start:
            try:
                parsed = json.loads(text[start:end + 1])
            except json.JSONDecodeError:
                parsed = None
            if isinstance(parsed, list) and parsed and all(isinstance(x, str) and x.strip() for x in parsed):
                items = [x.strip() for x in parsed]
    if not items:
        raise DecompositionFailed(f"unparseable decomposition: {text[:80]!r}")
    if len(items) > max_children:
        logger.warning("decomposition returned %d items, keeping %d", len(items), max_children)
        items = items[:max_children]
    return items


class KnowledgeClient:
    """One episode's view of a backend: strategy calls plus isolated accounting.

    The shared backend keeps its own global counters; ``self.accounting`` only
    sees requests issued through this client.
    """

    def __init__(self, backend: Backend, prompts: PromptSet | None = None,
                 sampling: SamplingConfig | None = None, max_children: int = 5,
                 judge_mode: str = "f1", judge_threshold: float = F1_THRESHOLD):
        if judge_mode not in ("f1", "llm"):
            raise ValueError(f"unknown judge mode {judge_mode!r}")
        self.backend = backend
        self.prompts = prompts or PromptSet()
        self.sampling = sampling or SamplingConfig()
        self.max_children = max_children
        self.judge_mode = judge_mode
        self.judge_threshold = judge_threshold
        self.accounting = CallAccounting()

    @property
    def calls(self) -> int:
        return self.accounting.inference_calls

    def _request(self, kind, prompt, payload, passages=(), diverse=False):
        temperature = self.sampling.diverse_temperature if diverse else self.sampling.temperature
        req = BackendRequest(kind, prompt, tuple(passages), temperature,
                             cache_allowed=not diverse, payload=payload)
        resp = self.backend.complete(req)
        self.accounting.charge(resp.calls_charged, judge=kind is RequestKind.JUDGE)
        return resp

    def answer_closed_book(self, question: str) -> StrategyResult:
        if not question.strip():
            raise ValueError("question must be nonempty")
        prompt = self.prompts.closed_book.format(question=question)
        resp = self._request(RequestKind.CLOSED_BOOK, prompt, {"question": question})
        return StrategyResult(resp.text.strip(), list(resp.token_logprobs), resp.calls_charged)

    def answer_open_book(self, question: str, passages: list[str], retrieved_ids=None) -> StrategyResult:
        if not question.strip():
            raise ValueError("question must be nonempty")
        if not passages:
            raise ValueError("open-book answering needs at least one passage")
        prompt = self.prompts.open_book.format(question=question, passages=format_passages(passages))
        resp = self._request(RequestKind.OPEN_BOOK, prompt,
                             {"question": question, "passages": list(passages)}, passages)
        ids = list(retrieved_ids) if retrieved_ids is not None else None
        return StrategyResult(resp.text.strip(), list(resp.token_logprobs), resp.calls_charged, ids)

    def decompose(self, question: str, diverse: bool = False) -> tuple[list[str], int]:
        """Returns the sub-questions and the calls charged for producing them.

        The charge is reported even when parsing fails, via the exception's
        ``calls`` attribute.
        """
        if not question.strip():
            raise ValueError("question must be nonempty")
        prompt = self.prompts.decompose.format(question=question)
        resp = self._request(RequestKind.DECOMPOSE, prompt, {"question": question}, diverse=diverse)
        try:
            return parse_decomposition(resp.text, self.max_children), resp.calls_charged
        except DecompositionFailed as exc:
            exc.calls = resp.calls_charged
            raise

    def reformulate(self, question: str) -> tuple[str, int]:
        prompt = self.prompts.reformulate.format(question=question)
        resp = self._request(RequestKind.REFORMULATE, prompt, {"question": question}, diverse=True)
        text = resp.text.strip()
        return (text or question), resp.calls_charged

    def aggregate_children(self, question: str, child_qa_pairs) -> StrategyResult:
        pairs = [(q, a) for q, a in child_qa_pairs]
        if not pairs:
            raise ValueError("aggregation needs at least one child")
        for q, a in pairs:
            if not a or not a.strip():
                raise ValueError(f"child {q!r} has no answer")
        prompt = self.prompts.aggregate.format(question=question, pairs=format_pairs(pairs))
        resp = self._request(RequestKind.AGGREGATE, prompt, {"question": question, "pairs": pairs})
        return StrategyResult(resp.text.strip(), list(resp.token_logprobs), resp.calls_charged)

    def judge(self, question: str, predicted: str, gold: str) -> int:
        if not predicted or not predicted.strip():
            return 0
        if self.judge_mode == "f1":
            return f1_judge(predicted, gold, self.judge_threshold)
        prompt = self.prompts.judge.format(question=question, predicted=predicted, gold=gold)
        try:
            resp = self._request(RequestKind.JUDGE, prompt,
                                 {"question": question, "predicted": predicted, "gold": gold})
        except Exception as exc:  # judging degrades to incorrect
            logger.warning("judge call failed: %s", exc)
            return 0
        verdict = resp.text.strip().lower()
        return int(verdict.startswith(("1", "yes", "correct", "true")))
