"""Greedy baseline: try strategies in a fixed order, stop at the first reliable answer."""

from __future__ import annotations

from ..backend.client import DecompositionFailed, KnowledgeClient
from ..retrieval import Retriever
from ..tree import ActionKind, QuestionNode, ReasoningTree, TreeLimits, new_tree
from .common import (Decision, SolveOutcome, check_accounting, resolve_references, run_closed_book,
                     run_open_book)
from .exhaustive import build_tree, solve_exhaustive
from .forest import ReliabilityClassifier, reliability_features, train_reliability

DEFAULT_ORDER = (ActionKind.CB, ActionKind.OB, ActionKind.CHILD)


def _try_child(tree, client, retriever, node, classifier, order, decisions):
    if node.depth >= tree.limits.max_depth:
        return None
    try:
        subs, calls = client.decompose(node.text)
    except DecompositionFailed as exc:
        node.extra_calls += getattr(exc, "calls", 0)
        return None
    node.extra_calls += calls
    if len(subs) < 2:
        # already atomic: decomposing gives nothing to recurse on
        return None
    for cid in tree.attach_children(node.id, subs):
        child = tree[cid]
        resolve_references(tree, child)
        _solve_node(tree, client, retriever, child, classifier, order, decisions)
    pairs = [(tree[c].question_text, tree[c].final_answer) for c in node.children]
    try:
        res = client.aggregate_children(node.text, pairs)
    except ValueError:
        return None
    node.strategy_results[ActionKind.CHILD] = res
    return res


def _solve_node(tree: ReasoningTree, client: KnowledgeClient, retriever: Retriever,
                node: QuestionNode, classifier: ReliabilityClassifier, order, decisions) -> None:
    executed = []
    for action in order:
        c0 = client.calls
        if action is ActionKind.CB:
            res = run_closed_book(client, node)
        elif action is ActionKind.OB:
            res = run_open_book(client, retriever, node)
        else:
            res = _try_child(tree, client, retriever, node, classifier, order, decisions)
            if res is None:
                continue
        decision = Decision(node.id, action, node.text, client.calls - c0, res.confidence)
        decisions.append(decision)
        executed.append(action)
        if classifier.reliable(action, res):
            node.choose(action)
            return
    if not executed:
        # nothing ran (CHILD-only order at a leaf); answer closed-book
        res = run_closed_book(client, node)
        decisions.append(Decision(node.id, ActionKind.CB, node.text, res.calls_used,
                                  res.confidence, forced=True))
        executed.append(ActionKind.CB)
    best = executed[0]
    for action in executed[1:]:
        if node.strategy_results[action].confidence > node.strategy_results[best].confidence:
            best = action
    node.choose(best)


def solve_greedy(question: str, classifier: ReliabilityClassifier, client: KnowledgeClient,
                 retriever: Retriever, order=None, limits: TreeLimits | None = None) -> SolveOutcome:
    order = tuple(order) if order is not None else tuple(classifier.order(DEFAULT_ORDER))
    start = client.calls
    tree = new_tree(question, limits)
    decisions: list[Decision] = []
    _solve_node(tree, client, retriever, tree.root, classifier, order, decisions)
    total = check_accounting(client, start, tree)
    return SolveOutcome(tree.root.final_answer, total, decisions, tree)


def reliability_records(question: str, gold: str, client: KnowledgeClient, retriever: Retriever,
                        limits: TreeLimits | None = None) -> dict:
    """Run CB, OB and CHILD on one question and label each with the judge."""
    tree = new_tree(question, limits)
    root = tree.root
    out = {}
    for action, res in ((ActionKind.CB, run_closed_book(client, root)),
                        (ActionKind.OB, run_open_book(client, retriever, root))):
        out[action] = (reliability_features(res), client.judge(question, res.answer_text, gold))
    build_tree(tree, client, root)
    if root.children:
        exh = solve_exhaustive  # children are answered the exhaustive way
        pairs = []
        for cid in root.children:
            child = tree[cid]
            resolve_references(tree, child)
            sub = exh(child.question_text, client, retriever,
                      max_depth=max(0, tree.limits.max_depth - child.depth))
            child.final_answer = sub.final_answer
            pairs.append((child.question_text, sub.final_answer or "unknown"))
        res = client.aggregate_children(question, pairs)
        out[ActionKind.CHILD] = (reliability_features(res), client.judge(question, res.answer_text, gold))
    return out


def train_reliability_classifier(records, client_factory, retriever: Retriever, seed: int = 0,
                                 limits: TreeLimits | None = None) -> ReliabilityClassifier:
    """``records`` are QARecord-like (question, gold_answer); one client per record."""
    data: dict = {a: [] for a in DEFAULT_ORDER}
    for rec in records:
        for action, row in reliability_records(rec.question, rec.gold_answer, client_factory(),
                                               retriever, limits).items():
            data[action].append(row)
    return ReliabilityClassifier({a: train_reliability(rows, seed) for a, rows in data.items() if rows})
