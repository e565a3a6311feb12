"""Prompt templates. Swap in a different ``PromptSet`` to change the wording."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path


@dataclass(frozen=True)
class PromptSet:
    closed_book: str = (
        "Answer the question with a short phrase, using only what you know.\n"
        "Question: {question}\nAnswer:"
    )
    open_book: str = (
        "Use the passages to answer the question with a short phrase.\n"
        "{passages}\nQuestion: {question}\nAnswer:"
    )
    decompose: str = (
        "Break the question into the sub-questions needed to answer it, one per line, "
        "numbered 1., 2., ... Refer to the answer of sub-question k as #k. "
        "If it needs no decomposition, repeat it as the only item.\n"
        "Question: {question}\nSub-questions:"
    )
    reformulate: str = (
        "Rewrite the question so it is clear and unambiguous. Keep its meaning.\n"
        "Question: {question}\nRewritten:"
    )
    aggregate: str = (
        "Given the answered sub-questions, answer the main question with a short phrase.\n"
        "{pairs}\nQuestion: {question}\nAnswer:"
    )
    judge: str = (
        "Is the predicted answer correct given the gold answer? Reply 1 for yes or 0 for no.\n"
        "Question: {question}\nGold: {gold}\nPredicted: {predicted}\nVerdict:"
    )

    @classmethod
    def from_file(cls, path: str | Path) -> PromptSet:
        """Load overrides from a JSON object keyed by template name."""
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown prompt names: {sorted(unknown)}")
        return cls(**data)


def format_passages(passages) -> str:
    return "\n".join(f"Passage {i + 1}: {p}" for i, p in enumerate(passages))


def format_pairs(pairs) -> str:
    return "\n".join(f"Q{i + 1}: {q}\nA{i + 1}: {a}" for i, (q, a) in enumerate(pairs))
