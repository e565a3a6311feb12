"""Exhaustive baseline: decompose everything, run every strategy, keep the most confident."""

from __future__ import annotations

from ..backend.client import DecompositionFailed, KnowledgeClient
from ..retrieval import Retriever
from ..tree import ActionKind, QuestionNode, ReasoningTree, TreeLimits, new_tree
from .common import (Decision, SolveOutcome, check_accounting, resolve_references, run_closed_book,
                     run_open_book)

# tie order when confidences are equal
PREFERENCE = (ActionKind.CB, ActionKind.OB, ActionKind.CHILD)


def build_tree(tree: ReasoningTree, client: KnowledgeClient, node: QuestionNode) -> None:
    """Decompose every node above max_depth; a one-item decomposition is a leaf."""
    if node.depth >= tree.limits.max_depth:
        return
    try:
        subs, calls = client.decompose(node.text)
    except DecompositionFailed as exc:
        node.extra_calls += getattr(exc, "calls", 0)
        return
    node.extra_calls += calls
    if len(subs) < 2:
        return
    for cid in tree.attach_children(node.id, subs):
        build_tree(tree, client, tree[cid])


def pick_most_confident(node: QuestionNode) -> ActionKind:
    best = None
    for action in PREFERENCE:
        res = node.strategy_results.get(action)
        if res is not None and (best is None or res.confidence > node.strategy_results[best].confidence):
            best = action
    return best


def _solve_node(tree: ReasoningTree, client: KnowledgeClient, retriever: Retriever,
                node: QuestionNode, decisions: list[Decision]) -> None:
    for cid in node.children:
        child = tree[cid]
        resolve_references(tree, child)
        _solve_node(tree, client, retriever, child, decisions)
    c0 = client.calls
    run_closed_book(client, node)
    run_open_book(client, retriever, node)
    if node.children:
        pairs = [(tree[c].question_text, tree[c].final_answer) for c in node.children]
        try:
            node.strategy_results[ActionKind.CHILD] = client.aggregate_children(node.text, pairs)
        except ValueError:
            pass
    pick = pick_most_confident(node)
    node.choose(pick)
    decisions.append(Decision(node.id, pick, node.text, client.calls - c0,
                              node.strategy_results[pick].confidence))


def solve_exhaustive(question: str, client: KnowledgeClient, retriever: Retriever,
                     limits: TreeLimits | None = None, max_depth: int | None = None) -> SolveOutcome:
    limits = limits or TreeLimits()
    if max_depth is not None:
        limits = TreeLimits(max_depth, limits.max_children, limits.max_resamples)
    start = client.calls
    tree = new_tree(question, limits)
    build_tree(tree, client, tree.root)
    decisions: list[Decision] = []
    _solve_node(tree, client, retriever, tree.root, decisions)
    total = check_accounting(client, start, tree)
    return SolveOutcome(tree.root.final_answer, total, decisions, tree)
