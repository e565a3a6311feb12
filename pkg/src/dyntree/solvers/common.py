from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field

from ..backend.client import KnowledgeClient
from ..retrieval import Retriever
from ..tree import ActionKind, QuestionNode, ReasoningTree, StrategyResult

_REF = re.compile(r"#(\d+)")


class AccountingError(AssertionError):
    pass


@dataclass
class Decision:
    node_id: int
    action: ActionKind
    question: str
    calls_delta: int = 0
    confidence: float | None = None
    forced: bool = False

    def to_json(self) -> str:
        return json.dumps({"node": self.node_id, "action": self.action.value,
                           "question": self.question, "calls_delta": self.calls_delta,
                           "confidence": self.confidence, "forced": self.forced})


@dataclass
class SolveOutcome:
    final_answer: str
    total_calls: int
    decisions: list[Decision]
    tree: ReasoningTree
    transitions: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    @property
    def method_usage(self) -> Counter:
        return Counter(d.action for d in self.decisions)

    def trace_lines(self) -> list[str]:
        return [d.to_json() for d in self.decisions]


def resolve_references(tree: ReasoningTree, node: QuestionNode) -> None:
    """Substitute ``#k`` with the answer of the k-th earlier sibling."""
    parent = tree.parent_of(node)
    if parent is None or "#" not in node.question_text:
        return

    def sub(m):
        k = int(m.group(1)) - 1
        if 0 <= k < node.child_index:
            ans = tree[parent.children[k]].final_answer
            if ans:
                return ans
        return m.group(0)

    node.question_text = _REF.sub(sub, node.question_text)


def run_closed_book(client: KnowledgeClient, node: QuestionNode, key=ActionKind.CB) -> StrategyResult:
    res = client.answer_closed_book(node.text)
    node.strategy_results[key] = res
    return res


def run_open_book(client: KnowledgeClient, retriever: Retriever, node: QuestionNode,
                  key=ActionKind.OB) -> StrategyResult:
    ids, passages = retriever.retrieve(node.text)
    res = client.answer_open_book(node.text, passages, ids)
    node.strategy_results[key] = res
    return res


def best_direct(node: QuestionNode) -> ActionKind:
    """Higher-confidence of the stored CB/OB results; CB wins ties."""
    cb = node.strategy_results.get(ActionKind.CB)
    ob = node.strategy_results.get(ActionKind.OB)
    if ob is not None and (cb is None or ob.confidence > cb.confidence):
        return ActionKind.OB
    return ActionKind.CB


def check_accounting(client: KnowledgeClient, start: int, tree: ReasoningTree) -> int:
    used = client.calls - start
    if used != tree.total_calls():
        raise AccountingError(f"backend charged {used} calls but the tree records {tree.total_calls()}")
    return used
