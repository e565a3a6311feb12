"""In-process BM25 retrieval over a paragraph corpus."""

from __future__ import annotations

import heapq
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

_SPLIT_RE = re.compile(r"[^a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _SPLIT_RE.split(text.lower()) if t]


@dataclass(frozen=True)
class Document:
    doc_id: int | str
    title: str
    text: str


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 5
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.k1 <= 0:
            raise ValueError("k1 must be > 0")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must be in [0, 1]")


@dataclass
class Corpus:
    documents: list[Document]
    postings: dict[str, list[tuple[int | str, int]]]
    doc_lengths: dict[int | str, int]
    avg_doc_length: float
    _by_id: dict = field(default_factory=dict, repr=False)
    _tf: dict = field(default_factory=dict, repr=False)

    @property
    def n_docs(self) -> int:
        return len(self.documents)

    def document(self, doc_id) -> Document:
        return self._by_id[doc_id]

    def idf(self, term: str) -> float:
        n = len(self.postings.get(term, ()))
        return math.log(1.0 + (self.n_docs - n + 0.5) / (n + 0.5))


def index(documents) -> Corpus:
    docs = [d if isinstance(d, Document) else Document(*d) for d in documents]
    if not docs:
        raise ValueError("cannot index an empty corpus")
    postings: dict[str, list] = {}
    lengths: dict = {}
    by_id: dict = {}
    tf_table: dict = {}
    for doc in docs:
        if doc.doc_id in by_id:
            raise ValueError(f"duplicate document id {doc.doc_id!r}")
        tokens = tokenize(doc.text)
        counts = Counter(tokens)
        by_id[doc.doc_id] = doc
        lengths[doc.doc_id] = len(tokens)
        tf_table[doc.doc_id] = counts
        for term, tf in counts.items():
            postings.setdefault(term, []).append((doc.doc_id, tf))
    avg = sum(lengths.values()) / len(lengths)
    return Corpus(docs, postings, lengths, avg, by_id, tf_table)


def _query_terms(query: str) -> list[str]:
    # distinct terms, first-occurrence order; fixes the accumulation order
    return list(dict.fromkeys(tokenize(query)))


def _term_weight(corpus: Corpus, tf: int, length: int, idf: float, cfg: RetrievalConfig) -> float:
    if corpus.avg_doc_length > 0:
        norm = 1.0 - cfg.b + cfg.b * length / corpus.avg_doc_length
    else:
        norm = 1.0
    return idf * tf * (cfg.k1 + 1.0) / (tf + cfg.k1 * norm)


def score(corpus: Corpus, query: str, doc_id, config: RetrievalConfig | None = None) -> float:
    cfg = config or RetrievalConfig()
    if doc_id not in corpus._by_id:
        raise KeyError(f"unknown document {doc_id!r}")
    tfs = corpus._tf[doc_id]
    total = 0.0
    for term in _query_terms(query):
        tf = tfs.get(term, 0)
        if tf:
            total += _term_weight(corpus, tf, corpus.doc_lengths[doc_id], corpus.idf(term), cfg)
    return total


def top_k(corpus: Corpus, query: str, config: RetrievalConfig | None = None) -> list[tuple]:
    cfg = config or RetrievalConfig()
    scores: dict = {}
    for term in _query_terms(query):
        plist = corpus.postings.get(term)
        if not plist:
            continue
        idf = corpus.idf(term)
        for doc_id, tf in plist:
            w = _term_weight(corpus, tf, corpus.doc_lengths[doc_id], idf, cfg)
            scores[doc_id] = scores.get(doc_id, 0.0) + w
    k = min(cfg.k, corpus.n_docs)
    best = heapq.nsmallest(k, ((-s, d) for d, s in scores.items()))
    out = [(d, -neg) for neg, d in best]
    if len(out) < k:
        # zero-score documents fill the remainder in id order
        chosen = set(scores)
        rest = sorted(d.doc_id for d in corpus.documents if d.doc_id not in chosen)
        out.extend((d, 0.0) for d in rest[: k - len(out)])
    return out


class Retriever:
    """Binds a corpus to a config and returns passage texts for open-book prompts."""

    def __init__(self, corpus: Corpus, config: RetrievalConfig | None = None):
        self.corpus = corpus
        self.config = config or RetrievalConfig()

    def retrieve(self, query: str) -> tuple[list, list[str]]:
        hits = top_k(self.corpus, query, self.config)
        ids = [d for d, _ in hits]
        return ids, [self.corpus.document(d).text for d in ids]


def load_corpus_jsonl(path: str | Path) -> list[Document]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                docs.append(Document(obj["id"], obj.get("title", ""), obj["text"]))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: bad corpus line ({exc})") from exc
    return docs


def write_corpus_jsonl(path: str | Path, documents) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in documents:
            fh.write(json.dumps({"id": d.doc_id, "title": d.title, "text": d.text}) + "\n")
