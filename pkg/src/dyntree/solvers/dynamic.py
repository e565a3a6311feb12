"""Node-by-node solving driven by a policy over the variant's actions.

Nodes are visited in DFS pre-order. A node is ready for a decision when it
has no children yet, or when all of its children are answered (a review
point, where the children are aggregated or, for the resample variant,
possibly discarded and regenerated).
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from ..agent import masked_argmax, select_action
from ..backend.client import DecompositionFailed, KnowledgeClient
from ..embeddings import HashedEmbedder
from ..features import VARIANTS, StateEncoder, SuccessRates, Variant
from ..nn.base import QNet
from ..retrieval import Retriever
from ..tree import ActionKind, QuestionNode, TreeLimits, new_tree
from .common import (Decision, SolveOutcome, best_direct, check_accounting, resolve_references,
                     run_closed_book, run_open_book)

STEP_BUDGET = 64


@dataclass
class Step:
    """One policy decision, with every call attributed to it."""
    state: np.ndarray | None
    action_index: int
    mask: tuple[int, ...]
    node_id: int
    calls: int = 0
    # False when the action came from an exploration draw that differs from the argmax
    greedy: bool = True


class NetPolicy:
    needs_state = True

    def __init__(self, net: QNet, epsilon: float = 0.0, rng: np.random.Generator | None = None):
        self.net = net
        self.epsilon = epsilon
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def __call__(self, state, mask) -> int:
        self.last_greedy = True
        if self.epsilon <= 0:
            return masked_argmax(self.net.forward(state), mask)
        ai = select_action(self.net, state, mask, self.epsilon, self.rng)
        self.last_greedy = ai == masked_argmax(self.net.forward(state), mask)
        return ai


class RandomPolicy:
    needs_state = False

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def __call__(self, state, mask) -> int:
        mask = sorted(mask)
        return int(mask[int(self.rng.integers(len(mask)))])


class _Episode:
    def __init__(self, question: str, variant: Variant, policy, client: KnowledgeClient,
                 retriever: Retriever, encoder: StateEncoder | None, rates: SuccessRates,
                 limits: TreeLimits, step_budget: int):
        self.variant = variant
        self.policy = policy
        self.client = client
        self.retriever = retriever
        self.encoder = encoder
        self.rates = rates
        self.limits = limits
        self.step_budget = step_budget
        self.tree = new_tree(question, limits)
        self.steps: list[Step] = []
        self.decisions: list[Decision] = []
        self.owner: dict[int, int] = {}      # node id -> step that produced its current children
        self.expansion: dict[int, ActionKind] = {}

    @contextmanager
    def _charge(self, step_idx: int):
        c0 = self.client.calls
        try:
            yield
        finally:
            self.steps[step_idx].calls += self.client.calls - c0

    def _next_ready(self) -> QuestionNode | None:
        tree = self.tree
        for nid in tree.decision_order():
            node = tree[nid]
            if not node.children or all(tree[c].answered for c in node.children):
                return node
        return None

    def _decide(self, node: QuestionNode, mask: list[int]) -> int:
        state = None
        if self.policy.needs_state:
            state = self.encoder.encode_node(self.tree, node, self.rates)
        ai = self.policy(state, mask)
        if ai not in mask:
            raise ValueError(f"policy chose masked action {ai}")
        self.steps.append(Step(state, ai, tuple(mask), node.id,
                               greedy=getattr(self.policy, "last_greedy", True)))
        return ai

    def run(self) -> SolveOutcome:
        start = self.client.calls
        while len(self.steps) < self.step_budget:
            node = self._next_ready()
            if node is None:
                break
            resolve_references(self.tree, node)
            if node.children:
                self._review(node)
            else:
                self._fresh(node)
        root = self.tree.root
        if root.answered:
            final = root.final_answer
        elif root.strategy_results:
            final = max(root.strategy_results.values(), key=lambda r: r.confidence).answer_text
        else:
            final = ""
        total = check_accounting(self.client, start, self.tree)
        return SolveOutcome(final, total, self.decisions, self.tree, steps=self.steps)

    # -- fresh nodes ----------------------------------------------------------
    def _fresh(self, node: QuestionNode) -> None:
        v = self.variant
        c0 = self.client.calls
        if v.probes:
            if ActionKind.CB not in node.strategy_results:
                run_closed_book(self.client, node)
            if ActionKind.OB not in node.strategy_results:
                run_open_book(self.client, self.retriever, node)
        probe_calls = self.client.calls - c0
        mask = [i for i, a in enumerate(v.actions)
                if a is not ActionKind.RESAMPLE_CHILDREN
                and not (a.expands and node.depth >= self.limits.max_depth)]
        idx = self._decide(node, mask)
        step_idx = len(self.steps) - 1
        self.steps[step_idx].calls += probe_calls
        action = v.actions[idx]
        with self._charge(step_idx):
            self._execute(node, action, step_idx)

    def _execute(self, node: QuestionNode, action: ActionKind, step_idx: int) -> None:
        decision = Decision(node.id, action, node.text)
        self.decisions.append(decision)
        c0 = self.client.calls
        if action.reformulates:
            text, calls = self.client.reformulate(node.question_text)
            node.extra_calls += calls
            node.reformulated_text = text
        base = action.base
        if base is ActionKind.CHILD:
            self._expand(node, action, step_idx, diverse=False)
        else:
            if action not in node.strategy_results:
                if base is ActionKind.CB:
                    run_closed_book(self.client, node, key=action)
                else:
                    run_open_book(self.client, self.retriever, node, key=action)
            node.choose(action)
            decision.confidence = node.strategy_results[action].confidence
        decision.calls_delta = self.client.calls - c0

    def _expand(self, node: QuestionNode, action: ActionKind, step_idx: int, diverse: bool) -> None:
        try:
            subs, calls = self.client.decompose(node.text, diverse=diverse)
        except DecompositionFailed as exc:
            node.extra_calls += getattr(exc, "calls", 0)
            self._fallback(node)
            return
        node.extra_calls += calls
        # a one-item (atomic) decomposition still becomes a child; max_depth bounds the chain
        self.tree.attach_children(node.id, subs)
        self.owner[node.id] = step_idx
        self.expansion[node.id] = action

    def _fallback(self, node: QuestionNode) -> None:
        """Answer directly with the more confident of CB and OB."""
        c0 = self.client.calls
        if ActionKind.CB not in node.strategy_results:
            run_closed_book(self.client, node)
        if ActionKind.OB not in node.strategy_results:
            run_open_book(self.client, self.retriever, node)
        pick = best_direct(node)
        node.choose(pick)
        self.decisions.append(Decision(node.id, pick, node.text, self.client.calls - c0,
                                       node.strategy_results[pick].confidence, forced=True))

    # -- review points ------------------------------------------------------------
    def _review(self, node: QuestionNode) -> None:
        v = self.variant
        can_resample = (ActionKind.RESAMPLE_CHILDREN in v.actions
                        and node.resample_count < self.limits.max_resamples)
        if not can_resample:
            with self._charge(self.owner[node.id]):
                self._aggregate(node)
            return
        mask = [v.index(ActionKind.CHILD), v.index(ActionKind.RESAMPLE_CHILDREN)]
        idx = self._decide(node, mask)
        step_idx = len(self.steps) - 1
        action = v.actions[idx]
        with self._charge(step_idx):
            c0 = self.client.calls
            decision = Decision(node.id, action, node.text)
            self.decisions.append(decision)
            if action is ActionKind.RESAMPLE_CHILDREN:
                expanded_with = self.expansion[node.id]
                self.tree.discard_subtree(node.id)
                self._expand(node, expanded_with, step_idx, diverse=True)
            else:
                self._aggregate(node)
                res = node.strategy_results.get(node.chosen_action)
                decision.confidence = res.confidence if res is not None else None
            decision.calls_delta = self.client.calls - c0

    def _aggregate(self, node: QuestionNode) -> None:
        tree = self.tree
        key = self.expansion[node.id]
        pairs = [(tree[c].question_text, tree[c].final_answer) for c in node.children]
        try:
            res = self.client.aggregate_children(node.text, pairs)
        except ValueError:
            # some child came back empty; answer this node directly instead
            self._fallback(node)
            return
        node.strategy_results[key] = res
        node.choose(key)


def solve_policy(question: str, variant: Variant, policy, client: KnowledgeClient,
                 retriever: Retriever, encoder: StateEncoder | None = None,
                 rates: SuccessRates | None = None, limits: TreeLimits | None = None,
                 step_budget: int = STEP_BUDGET) -> SolveOutcome:
    limits = limits or TreeLimits()
    if policy.needs_state and encoder is None:
        encoder = StateEncoder(variant, HashedEmbedder(), limits.max_depth)
    ep = _Episode(question, variant, policy, client, retriever, encoder, rates or SuccessRates(),
                  limits, step_budget)
    return ep.run()


def solve_rl(question: str, variant: Variant, net: QNet, client: KnowledgeClient,
             retriever: Retriever, encoder: StateEncoder | None = None,
             rates: SuccessRates | None = None, epsilon: float = 0.0,
             rng: np.random.Generator | None = None, limits: TreeLimits | None = None,
             step_budget: int = STEP_BUDGET) -> SolveOutcome:
    if net.n_actions != variant.n_actions:
        raise ValueError(f"network has {net.n_actions} outputs, variant {variant.name} needs {variant.n_actions}")
    return solve_policy(question, variant, NetPolicy(net, epsilon, rng), client, retriever,
                        encoder, rates, limits, step_budget)


def solve_random(question: str, client: KnowledgeClient, retriever: Retriever,
                 rng: np.random.Generator | None = None, limits: TreeLimits | None = None,
                 step_budget: int = STEP_BUDGET) -> SolveOutcome:
    rng = rng if rng is not None else np.random.default_rng(0)
    return solve_policy(question, VARIANTS["q_only"], RandomPolicy(rng), client, retriever,
                        limits=limits, step_budget=step_budget)
