"""Fixed-layout state vectors for each agent variant.

Layout, in order:
  basic        has_children, question length, child count, per-action success rates
  qtype        one-hot interrogative word
  structure    depth, position among siblings, sibling count
  question     question embedding
  probes       CB then OB: scaled mean log-prob, confidence, answer length, answer embedding
  resample     child confidence mean and variance, resample budget used, child/question similarity

The last two blocks exist only for variants that use them and are zero-filled
when there is nothing to describe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embeddings import cosine, tokenize
from .tree import ActionKind, QuestionNode, ReasoningTree, StrategyResult

QUESTION_WORDS = ("what", "who", "when", "where", "which", "how", "why")
N_QTYPES = len(QUESTION_WORDS) + 1
CHILD_SCALE = 5.0
QLEN_CAP, QLEN_SCALE = 100, 50.0
ALEN_CAP = 50


@dataclass(frozen=True)
class Variant:
    name: str
    actions: tuple[ActionKind, ...]
    probes: bool = False
    resample_block: bool = False
    arch: str = "mlp"

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def index(self, action: ActionKind) -> int:
        return self.actions.index(action)


_BASE3 = (ActionKind.CB, ActionKind.OB, ActionKind.CHILD)
VARIANTS = {
    "q_only": Variant("q_only", _BASE3),
    "transformer": Variant("transformer", _BASE3, arch="transformer"),
    "q_cb_ob": Variant("q_cb_ob", _BASE3, probes=True),
    "reform": Variant("reform", _BASE3 + (ActionKind.CB_REFORMULATE, ActionKind.OB_REFORMULATE,
                                          ActionKind.CHILD_REFORMULATE), probes=True),
    "resample": Variant("resample", _BASE3 + (ActionKind.RESAMPLE_CHILDREN,), probes=True,
                        resample_block=True),
}


def get_variant(name: str) -> Variant:
    try:
        return VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None


def state_dim(variant: Variant, dim: int) -> int:
    n = 3 + variant.n_actions + N_QTYPES + 3 + dim
    if variant.probes:
        n += 2 * (3 + dim)
    if variant.resample_block:
        n += 4
    return n


@dataclass
class SuccessRates:
    rates: dict[ActionKind, float] = field(default_factory=dict)
    counts: dict[ActionKind, int] = field(default_factory=dict)

    def rate(self, action: ActionKind) -> float:
        return self.rates.get(action, 0.5)

    def count(self, action: ActionKind) -> int:
        return self.counts.get(action, 0)

    def to_dict(self) -> dict:
        return {a.value: [self.rate(a), self.count(a)] for a in self.rates}

    @classmethod
    def from_dict(cls, d: dict) -> SuccessRates:
        out = cls()
        for k, (r, c) in d.items():
            out.rates[ActionKind(k)] = float(r)
            out.counts[ActionKind(k)] = int(c)
        return out


def update_success_rate(rates: SuccessRates, action: ActionKind, outcome: int) -> SuccessRates:
    """Running mean of binary outcomes; the 0.5 prior is dropped at the first observation."""
    count = rates.count(action) + 1
    rate = rates.rate(action) if count > 1 else 0.0
    rates.counts[action] = count
    rates.rates[action] = rate + (float(outcome) - rate) / count
    return rates


@dataclass(frozen=True)
class ChildStats:
    confidences: tuple[float, ...]
    answer_similarities: tuple[float, ...]
    resample_count: int
    max_resamples: int


def question_type(text: str) -> int:
    tokens = tokenize(text)
    if tokens and tokens[0] in QUESTION_WORDS:
        return QUESTION_WORDS.index(tokens[0])
    return len(QUESTION_WORDS)


def _probe_block(result: StrategyResult | None, embed, dim: int) -> np.ndarray:
    block = np.zeros(3 + dim)
    if result is None:
        return block
    lps = result.token_logprobs
    mean_lp = float(np.mean(lps)) if lps else 0.0
    block[0] = np.clip(mean_lp, -10.0, 0.0) / 10.0 + 1.0
    block[1] = result.confidence
    block[2] = min(len(tokenize(result.answer_text)), ALEN_CAP) / ALEN_CAP
    block[3:] = embed(result.answer_text)
    return block


class StateEncoder:
    def __init__(self, variant: Variant, embedder, max_depth: int = 3):
        self.variant = variant
        self.embedder = embedder
        self.dim = embedder.dim
        self.max_depth = max_depth

    @property
    def size(self) -> int:
        return state_dim(self.variant, self.dim)

    def child_stats(self, tree: ReasoningTree, node: QuestionNode) -> ChildStats | None:
        answered = [tree[c] for c in node.children if tree[c].answered]
        if not answered:
            return None
        q_emb = self.embedder.embed(node.text)
        confs, sims = [], []
        for child in answered:
            res = child.strategy_results.get(child.chosen_action) if child.chosen_action else None
            confs.append(res.confidence if res is not None else 0.0)
            sims.append(cosine(self.embedder.embed(child.final_answer), q_emb))
        return ChildStats(tuple(confs), tuple(sims), node.resample_count, tree.limits.max_resamples)

    def encode_node(self, tree: ReasoningTree, node: QuestionNode, rates: SuccessRates) -> np.ndarray:
        probes = None
        if self.variant.probes:
            probes = (node.strategy_results.get(ActionKind.CB), node.strategy_results.get(ActionKind.OB))
        stats = self.child_stats(tree, node) if self.variant.resample_block else None
        return self.encode(node, tree.siblings_count(node), probes, stats, rates)

    def encode(self, node: QuestionNode, sibling_count: int, probes, child_stats: ChildStats | None,
               rates: SuccessRates) -> np.ndarray:
        v = self.variant
        text = node.text
        n_children = len(node.children)
        basic = [float(n_children > 0),
                 min(len(tokenize(text)), QLEN_CAP) / QLEN_SCALE,
                 n_children / CHILD_SCALE]
        basic += [rates.rate(a) for a in v.actions]
        qtype = np.zeros(N_QTYPES)
        qtype[question_type(text)] = 1.0
        structure = [node.depth / max(1, self.max_depth),
                     node.child_index / max(1, sibling_count - 1),
                     sibling_count / CHILD_SCALE]
        parts = [np.asarray(basic), qtype, np.asarray(structure), self.embedder.embed(text)]
        if v.probes:
            cb, ob = probes if probes is not None else (None, None)
            parts.append(_probe_block(cb, self.embedder.embed, self.dim))
            parts.append(_probe_block(ob, self.embedder.embed, self.dim))
        if v.resample_block:
            block = np.zeros(4)
            if child_stats is not None and child_stats.confidences:
                confs = np.asarray(child_stats.confidences)
                block[0] = confs.mean()
                block[1] = confs.var()
                block[2] = child_stats.resample_count / max(1, child_stats.max_resamples)
                block[3] = float(np.mean(child_stats.answer_similarities))
            parts.append(block)
        return np.concatenate(parts)
