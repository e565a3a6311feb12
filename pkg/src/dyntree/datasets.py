"""Multi-hop QA dataset loaders (HotpotQA, MuSiQue, 2WikiMultiHopQA)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .retrieval import Document

FORMATS = ("hotpot_json", "musique_jsonl", "twowiki_json", "records_jsonl")
SPLITS = ("train", "dev", "test")


class DatasetError(ValueError):
    pass


@dataclass
class QARecord:
    id: str
    question: str
    gold_answer: str
    context: list[tuple[str, list[str]]] = field(default_factory=list)
    split: str = "test"

    def __post_init__(self):
        if not self.question or not self.question.strip():
            raise DatasetError(f"record {self.id}: empty question")
        if not self.gold_answer or not str(self.gold_answer).strip():
            raise DatasetError(f"record {self.id}: empty answer")
        if self.split not in SPLITS:
            raise DatasetError(f"record {self.id}: unknown split {self.split!r}")

    def to_dict(self) -> dict:
        return {"id": self.id, "question": self.question, "answer": self.gold_answer,
                "context": [[t, list(p)] for t, p in self.context], "split": self.split}

    @classmethod
    def from_dict(cls, d: dict) -> QARecord:
        return cls(str(d["id"]), d["question"], d["answer"],
                   [(t, list(p)) for t, p in d.get("context", [])], d.get("split", "test"))


def _require(obj: dict, key: str, rec_id) -> object:
    if key not in obj:
        raise DatasetError(f"record {rec_id}: missing field {key!r}")
    return obj[key]


def _wiki_style(items, split: str) -> list[QARecord]:
    # HotpotQA and 2Wiki share the [[title, [sentences...]], ...] context layout
    out = []
    for i, obj in enumerate(items):
        rec_id = obj.get("_id", obj.get("id", f"#{i}"))
        question = _require(obj, "question", rec_id)
        answer = _require(obj, "answer", rec_id)
        context = [(title, list(sents)) for title, sents in obj.get("context", [])]
        out.append(QARecord(str(rec_id), question, answer, context, split))
    return out


def _musique(lines, split: str, path) -> list[QARecord]:
    out = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
        rec_id = obj.get("id", f"line{lineno}")
        question = _require(obj, "question", rec_id)
        answer = _require(obj, "answer", rec_id)
        context = [(p.get("title", ""), [p["paragraph_text"]]) for p in obj.get("paragraphs", [])]
        out.append(QARecord(str(rec_id), question, answer, context, split))
    return out


def load_dataset(path: str | Path, format: str, split: str = "test") -> list[QARecord]:
    if format not in FORMATS:
        raise DatasetError(f"unknown format {format!r}; expected one of {FORMATS}")
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path}: no such file")
    with open(path, encoding="utf-8") as fh:
        if format == "musique_jsonl":
            return _musique(fh, split, path)
        if format == "records_jsonl":
            out = []
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    out.append(QARecord.from_dict(json.loads(line)))
                except (json.JSONDecodeError, KeyError) as exc:
                    raise DatasetError(f"{path}:{lineno}: bad record ({exc})") from exc
            return out
        try:
            items = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}: invalid JSON at line {exc.lineno} ({exc.msg})") from exc
    if not isinstance(items, list):
        raise DatasetError(f"{path}: expected a JSON array of records")
    return _wiki_style(items, split)


def write_records(path: str | Path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def corpus_from_records(records) -> list[Document]:
    """Flatten record contexts into one paragraph per (title, paragraph), deduplicated."""
    docs, seen = [], set()
    for rec in records:
        for title, paragraphs in rec.context:
            text = " ".join(s.strip() for s in paragraphs if s.strip())
            key = (title, text)
            if not text or key in seen:
                continue
            seen.add(key)
            docs.append(Document(len(docs), title, f"{title}. {text}" if title else text))
    return docs
