"""Reasoning tree built incrementally during a solve episode."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterator

SCHEMA_VERSION = 1
NO_LOGPROB_CONFIDENCE = 0.5


class TreeError(ValueError):
    pass


class ActionKind(str, enum.Enum):
    CB = "CB"
    OB = "OB"
    CHILD = "CHILD"
    CB_REFORMULATE = "CB_REFORMULATE"
    OB_REFORMULATE = "OB_REFORMULATE"
    CHILD_REFORMULATE = "CHILD_REFORMULATE"
    RESAMPLE_CHILDREN = "RESAMPLE_CHILDREN"

    @property
    def base(self) -> ActionKind:
        """The strategy an action finally executes (reformulation stripped)."""
        return _BASE[self]

    @property
    def reformulates(self) -> bool:
        return self in (ActionKind.CB_REFORMULATE, ActionKind.OB_REFORMULATE,
                        ActionKind.CHILD_REFORMULATE)

    @property
    def expands(self) -> bool:
        return self.base in (ActionKind.CHILD, ActionKind.RESAMPLE_CHILDREN)


_BASE = {
    ActionKind.CB: ActionKind.CB,
    ActionKind.OB: ActionKind.OB,
    ActionKind.CHILD: ActionKind.CHILD,
    ActionKind.CB_REFORMULATE: ActionKind.CB,
    ActionKind.OB_REFORMULATE: ActionKind.OB,
    ActionKind.CHILD_REFORMULATE: ActionKind.CHILD,
    ActionKind.RESAMPLE_CHILDREN: ActionKind.RESAMPLE_CHILDREN,
}


def confidence_from_logprobs(token_logprobs: list[float]) -> float:
    if not token_logprobs:
        return NO_LOGPROB_CONFIDENCE
    return math.exp(sum(token_logprobs) / len(token_logprobs))


@dataclass
class StrategyResult:
    answer_text: str
    token_logprobs: list[float]
    calls_used: int = 1
    retrieved_ids: list | None = None
    confidence: float = field(init=False)

    def __post_init__(self) -> None:
        self.confidence = confidence_from_logprobs(self.token_logprobs)

    def to_dict(self) -> dict:
        out = {
            "answer": self.answer_text,
            "confidence": self.confidence,
            "token_logprobs": list(self.token_logprobs),
            "calls_used": self.calls_used,
        }
        if self.retrieved_ids is not None:
            out["retrieved_ids"] = list(self.retrieved_ids)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> StrategyResult:
        return cls(d["answer"], list(d["token_logprobs"]), d["calls_used"],
                   d.get("retrieved_ids"))


@dataclass
class QuestionNode:
    id: int
    question_text: str
    depth: int = 0
    child_index: int = 0
    parent: int | None = None
    reformulated_text: str | None = None
    children: list[int] = field(default_factory=list)
    strategy_results: dict[ActionKind, StrategyResult] = field(default_factory=dict)
    chosen_action: ActionKind | None = None
    final_answer: str | None = None
    resample_count: int = 0
    # decomposition / reformulation calls that are not part of any stored result
    extra_calls: int = 0

    @property
    def text(self) -> str:
        """Text the strategies should act on."""
        return self.reformulated_text or self.question_text

    @property
    def answered(self) -> bool:
        return self.final_answer is not None

    def choose(self, action: ActionKind, result_key: ActionKind | None = None) -> None:
        key = action if result_key is None else result_key
        if key not in self.strategy_results:
            raise TreeError(f"node {self.id}: no result stored for {key.value}")
        self.chosen_action = action
        self.final_answer = self.strategy_results[key].answer_text

    def node_calls(self) -> int:
        return self.extra_calls + sum(r.calls_used for r in self.strategy_results.values())


@dataclass
class TreeLimits:
    max_depth: int = 3
    max_children: int = 5
    max_resamples: int = 2


class ReasoningTree:
    def __init__(self, question: str, limits: TreeLimits | None = None):
        if not question or not question.strip():
            raise TreeError("question must be nonempty")
        self.limits = limits or TreeLimits()
        self.nodes: dict[int, QuestionNode] = {}
        self._next_id = 0
        # calls spent in subtrees that were later discarded by resampling
        self.discarded_calls = 0
        self.root_id = self._new_node(question, depth=0, child_index=0, parent=None).id

    def _new_node(self, text: str, depth: int, child_index: int, parent: int | None) -> QuestionNode:
        node = QuestionNode(self._next_id, text, depth, child_index, parent)
        self.nodes[node.id] = node
        self._next_id += 1
        return node

    @property
    def root(self) -> QuestionNode:
        return self.nodes[self.root_id]

    def __len__(self) -> int:
        return len(self.nodes)

    def __getitem__(self, node_id: int) -> QuestionNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise TreeError(f"unknown node id {node_id}") from None

    def parent_of(self, node: QuestionNode) -> QuestionNode | None:
        return None if node.parent is None else self.nodes[node.parent]

    def siblings_count(self, node: QuestionNode) -> int:
        parent = self.parent_of(node)
        return 1 if parent is None else len(parent.children)

    def attach_children(self, node_id: int, sub_questions: list[str]) -> list[int]:
        node = self[node_id]
        if not 1 <= len(sub_questions) <= self.limits.max_children:
            raise TreeError(f"need 1..{self.limits.max_children} sub-questions, got {len(sub_questions)}")
        if node.depth + 1 > self.limits.max_depth:
            raise TreeError(f"node {node_id} at depth {node.depth} cannot expand past max_depth={self.limits.max_depth}")
        start = len(node.children)
        ids = []
        for i, q in enumerate(sub_questions):
            child = self._new_node(q, node.depth + 1, start + i, node.id)
            ids.append(child.id)
        node.children.extend(ids)
        return ids

    def descendants(self, node_id: int) -> list[int]:
        out = []
        stack = list(reversed(self[node_id].children))
        while stack:
            nid = stack.pop()
            out.append(nid)
            stack.extend(reversed(self.nodes[nid].children))
        return out

    def discard_subtree(self, node_id: int) -> int:
        node = self[node_id]
        if node.resample_count + 1 > self.limits.max_resamples:
            raise TreeError(f"node {node_id} exhausted its resample budget ({self.limits.max_resamples})")
        removed = self.descendants(node_id)
        for nid in removed:
            self.discarded_calls += self.nodes.pop(nid).node_calls()
        node.children = []
        for key in (ActionKind.CHILD, ActionKind.CHILD_REFORMULATE):
            dropped = node.strategy_results.pop(key, None)
            if dropped is not None:
                self.discarded_calls += dropped.calls_used
        if node.chosen_action is not None and node.chosen_action.expands:
            node.chosen_action = None
            node.final_answer = None
        node.resample_count += 1
        return len(removed)

    def preorder(self) -> Iterator[QuestionNode]:
        stack = [self.root_id]
        while stack:
            node = self.nodes[stack.pop()]
            yield node
            stack.extend(reversed(node.children))

    def decision_order(self) -> list[int]:
        return [n.id for n in self.preorder() if not n.answered]

    def total_calls(self) -> int:
        return self.discarded_calls + sum(n.node_calls() for n in self.nodes.values())

    def to_json(self) -> dict:
        nodes = []
        for n in self.preorder():
            nodes.append({
                "id": n.id,
                "parent": n.parent,
                "depth": n.depth,
                "child_index": n.child_index,
                "question": n.question_text,
                "reformulated": n.reformulated_text,
                "answers": {k.value: r.to_dict() for k, r in n.strategy_results.items()},
                "chosen_action": n.chosen_action.value if n.chosen_action else None,
                "final_answer": n.final_answer,
                "resample_count": n.resample_count,
                "extra_calls": n.extra_calls,
            })
        return {"schema": SCHEMA_VERSION, "root": self.root_id, "next_id": self._next_id,
                "discarded_calls": self.discarded_calls, "nodes": nodes}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    @classmethod
    def from_json(cls, doc: dict, limits: TreeLimits | None = None) -> ReasoningTree:
        if doc.get("schema") != SCHEMA_VERSION:
            raise TreeError(f"unsupported tree schema {doc.get('schema')!r}")
        by_id = {d["id"]: d for d in doc["nodes"]}
        root = by_id[doc["root"]]
        tree = cls(root["question"], limits)
        tree.nodes.clear()
        for d in doc["nodes"]:
            node = QuestionNode(d["id"], d["question"], d["depth"], d["child_index"], d["parent"],
                                reformulated_text=d.get("reformulated"),
                                chosen_action=ActionKind(d["chosen_action"]) if d["chosen_action"] else None,
                                final_answer=d["final_answer"], resample_count=d["resample_count"],
                                extra_calls=d.get("extra_calls", 0))
            node.strategy_results = {ActionKind(k): StrategyResult.from_dict(v) for k, v in d["answers"].items()}
            tree.nodes[node.id] = node
        for node in tree.nodes.values():
            if node.parent is not None:
                tree.nodes[node.parent].children.append(node.id)
        for node in tree.nodes.values():
            node.children.sort(key=lambda i: tree.nodes[i].child_index)
        tree.root_id = doc["root"]
        tree.discarded_calls = doc.get("discarded_calls", 0)
        tree._next_id = doc.get("next_id", max(tree.nodes) + 1)
        return tree


def new_tree(question: str, limits: TreeLimits | None = None) -> ReasoningTree:
    return ReasoningTree(question, limits)
