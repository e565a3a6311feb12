"""Small random-forest classifier (CART, gini) for strategy reliability."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..embeddings import tokenize
from ..tree import StrategyResult

logger = logging.getLogger(__name__)

N_FEATURES = 5
_NO_LOGPROBS = math.log(0.5)


def reliability_features(result: StrategyResult) -> np.ndarray:
    """mean, min, max, std of token log-probs and answer length in tokens."""
    lps = np.asarray(result.token_logprobs, dtype=float)
    if lps.size:
        stats = [lps.mean(), lps.min(), lps.max(), lps.std()]
    else:
        stats = [_NO_LOGPROBS, _NO_LOGPROBS, _NO_LOGPROBS, 0.0]
    return np.array(stats + [len(tokenize(result.answer_text))], dtype=float)


def _gini(pos, n):
    p = pos / n
    return 1.0 - p * p - (1 - p) * (1 - p)


@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    label: int = 0


class DecisionTree:
    def __init__(self, max_depth: int = 4, max_features: int | None = None, min_split: int = 2):
        self.max_depth = max_depth
        self.max_features = max_features
        self.min_split = min_split
        self.nodes: list[_Node] = []

    def fit(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> DecisionTree:
        self.nodes = []
        self._grow(X, y, 0, rng)
        return self

    def _leaf(self, y) -> int:
        # ties go to "unreliable"
        self.nodes.append(_Node(label=int(2 * y.sum() > len(y))))
        return len(self.nodes) - 1

    def _grow(self, X, y, depth, rng) -> int:
        n = len(y)
        pos = y.sum()
        if depth >= self.max_depth or n < self.min_split or pos in (0, n):
            return self._leaf(y)
        k = self.max_features or X.shape[1]
        feats = rng.choice(X.shape[1], size=min(k, X.shape[1]), replace=False)
        best = None
        parent = _gini(pos, n)
        for f in feats:
            order = np.argsort(X[:, f], kind="stable")
            xs, ys = X[order, f], y[order]
            left_pos = np.cumsum(ys)[:-1]
            counts = np.arange(1, n)
            valid = xs[1:] > xs[:-1]
            if not valid.any():
                continue
            lp = left_pos / counts
            rp = (pos - left_pos) / (n - counts)
            g_left = 1 - lp ** 2 - (1 - lp) ** 2
            g_right = 1 - rp ** 2 - (1 - rp) ** 2
            impurity = (counts * g_left + (n - counts) * g_right) / n
            impurity[~valid] = np.inf
            i = int(np.argmin(impurity))
            if best is None or impurity[i] < best[0]:
                best = (impurity[i], int(f), 0.5 * (xs[i] + xs[i + 1]))
        if best is None or best[0] >= parent:
            return self._leaf(y)
        _, f, thr = best
        me = len(self.nodes)
        self.nodes.append(_Node(feature=f, threshold=thr))
        mask = X[:, f] <= thr
        self.nodes[me].left = self._grow(X[mask], y[mask], depth + 1, rng)
        self.nodes[me].right = self._grow(X[~mask], y[~mask], depth + 1, rng)
        return me

    def predict_one(self, x: np.ndarray) -> int:
        i = 0
        while True:
            node = self.nodes[i]
            if node.left < 0:
                return node.label
            i = node.left if x[node.feature] <= node.threshold else node.right


class RandomForest:
    def __init__(self, n_trees: int = 50, max_depth: int = 4, seed: int = 0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.seed = seed
        self.trees: list[DecisionTree] = []

    def fit(self, X: np.ndarray, y: np.ndarray) -> RandomForest:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        rng = np.random.default_rng(self.seed)
        k = max(1, int(math.sqrt(X.shape[1])))
        self.trees = []
        for _ in range(self.n_trees):
            idx = rng.integers(len(y), size=len(y))
            self.trees.append(DecisionTree(self.max_depth, k).fit(X[idx], y[idx], rng))
        return self

    def predict_one(self, x) -> int:
        votes = sum(t.predict_one(x) for t in self.trees)
        return int(2 * votes > len(self.trees))

    def predict(self, X) -> np.ndarray:
        return np.array([self.predict_one(x) for x in np.asarray(X, dtype=float)], dtype=int)


@dataclass
class StrategyReliability:
    """Reliability verdicts for one strategy."""
    forest: RandomForest | None
    constant: int | None = None
    cv_accuracy: float = 0.0
    cv_precision: float = 0.0
    n_train: int = 0

    @property
    def degenerate(self) -> bool:
        return self.forest is None

    def reliable(self, result: StrategyResult) -> bool:
        if self.forest is None:
            return bool(self.constant)
        return bool(self.forest.predict_one(reliability_features(result)))


def _cv_scores(X, y, folds, seed, n_trees, max_depth) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(y))
    pred = np.zeros(len(y), dtype=int)
    for fold in np.array_split(order, folds):
        train = np.setdiff1d(order, fold)
        ytr = y[train]
        if ytr.min() == ytr.max():
            pred[fold] = ytr[0]
            continue
        pred[fold] = RandomForest(n_trees, max_depth, seed).fit(X[train], ytr).predict(X[fold])
    acc = float((pred == y).mean())
    tp = int(((pred == 1) & (y == 1)).sum())
    npos = int((pred == 1).sum())
    return acc, (tp / npos if npos else 0.0)


def train_reliability(records, seed: int = 0, n_trees: int = 50, max_depth: int = 4,
                      folds: int = 5) -> StrategyReliability:
    """Fit on ``(features, correct)`` pairs; single-class data gives a constant classifier."""
    records = list(records)
    if not records:
        raise ValueError("no training records")
    X = np.stack([np.asarray(f, dtype=float) for f, _ in records])
    y = np.asarray([int(c) for _, c in records])
    if y.min() == y.max():
        logger.warning("reliability data has a single class (%d); using a constant classifier", y[0])
        return StrategyReliability(None, int(y[0]), 1.0, float(y[0]), len(y))
    acc, prec = _cv_scores(X, y, min(folds, len(y)), seed, n_trees, max_depth)
    forest = RandomForest(n_trees, max_depth, seed).fit(X, y)
    return StrategyReliability(forest, None, acc, prec, len(y))


@dataclass
class ReliabilityClassifier:
    per_strategy: dict = field(default_factory=dict)

    def reliable(self, action, result: StrategyResult) -> bool:
        clf = self.per_strategy.get(action)
        return clf.reliable(result) if clf is not None else False

    def order(self, default) -> list:
        """Strategies by descending CV precision; uninformative ones go last, ties keep ``default``."""
        def key(action):
            clf = self.per_strategy.get(action)
            if clf is None:
                return (2, 0.0)
            return (int(clf.degenerate), -clf.cv_precision)
        return sorted(default, key=key)
