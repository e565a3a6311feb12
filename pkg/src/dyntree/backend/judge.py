"""Token-F1 answer judge used in desk mode."""

from __future__ import annotations

import re
import string
from collections import Counter

F1_THRESHOLD = 0.6

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = str.maketrans({c: " " for c in string.punctuation})


def normalize_answer(text: str) -> str:
    text = text.lower().translate(_PUNCT)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def token_f1(predicted: str, gold: str) -> float:
    p = normalize_answer(predicted).split()
    g = normalize_answer(gold).split()
    if not p or not g:
        return float(p == g)
    common = Counter(p) & Counter(g)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(p)
    recall = overlap / len(g)
    return 2 * precision * recall / (precision + recall)


def f1_judge(predicted: str, gold: str, threshold: float = F1_THRESHOLD) -> int:
    if not predicted or not predicted.strip():
        return 0
    return int(token_f1(predicted, gold) >= threshold)
