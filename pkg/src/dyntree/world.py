"""Deterministic synthetic QA world.

Facts are (entity, relation) -> entity. Questions compose one to three
relations ("What is the r1 of the r2 of E?"). Whether a leaf fact can be
answered closed-book (memorized) or open-book (retrievable) is decided per
relation, so the best strategy for a node is visible in its wording.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field

import numpy as np

from .datasets import QARecord
from .retrieval import Document
from .tree import ActionKind

RELATION_POOL = (
    "capital", "founder", "mentor", "birthplace", "spouse", "employer", "editor",
    "sibling", "author", "director", "architect", "composer", "patron", "successor",
    "neighbor", "curator",
)
_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
_RESERVED = {"what", "which", "who", "name", "tell", "identify", "the", "of", "is", "me",
             "entity", "or", "give", "state", "find"}

REFORMULATIONS = (
    "Which entity is the {chain}?",
    "Name the {chain}.",
    "Tell me the {chain}.",
    "Identify the {chain}.",
)


def stable_hash(*parts) -> int:
    digest = hashlib.blake2b(repr(parts).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass
class WorldConfig:
    n_entities: int = 200
    n_relations: int = 12
    name_tokens: int = 1
    memorized_fraction: float = 0.6
    # per-fact overrides on top of the relation profile
    both_rate: float = 0.0
    neither_rate: float = 0.0
    # probability that a deterministic (temperature 0) decomposition is wrong
    rigged_rate: float = 0.0
    cb_logprob: float = -0.1
    cb_wrong_logprob: float = -3.0
    ob_logprob: float = -0.2
    ob_wrong_logprob: float = -2.5
    aggregate_logprob: float = -0.15
    jitter: float = 0.05


@dataclass(frozen=True)
class ParsedQuestion:
    relations: tuple[str, ...]  # outermost first
    entity: str

    @property
    def depth(self) -> int:
        return len(self.relations)

    def chain_text(self) -> str:
        return " of the ".join(self.relations) + f" of {self.entity}"


@dataclass
class SyntheticWorld:
    seed: int
    config: WorldConfig
    entities: list[str]
    relations: list[str]
    facts: dict[tuple[str, str], str]
    memorized: set[tuple[str, str]]
    retrievable: set[tuple[str, str]]
    passage_ids: dict[tuple[str, str], int] = field(default_factory=dict)
    _passages: list[Document] = field(default_factory=list, repr=False)
    _pattern: re.Pattern | None = field(default=None, repr=False)

    def __post_init__(self):
        self._entity_set = set(self.entities)
        rels = "|".join(sorted(self.relations, key=len, reverse=True))
        self._pattern = re.compile(rf"\bthe ({rels}) of ")
        self._passages = []
        self.passage_ids = {}
        e_pos = {e: i for i, e in enumerate(self.entities)}
        r_pos = {r: i for i, r in enumerate(self.relations)}
        for key in sorted(self.retrievable, key=lambda k: (e_pos[k[0]], r_pos[k[1]])):
            e, r = key
            doc_id = len(self._passages)
            text = f"{e}: the {r} of {e} is {self.facts[key]}."
            self._passages.append(Document(doc_id, e, text))
            self.passage_ids[key] = doc_id

    # -- structure -------------------------------------------------------
    def parse(self, question: str) -> ParsedQuestion | None:
        text = question.strip().rstrip("?.! ").strip()
        m = self._pattern.search(text)
        if m is None:
            return None
        parts = text[m.start():].split(" of ")
        relations = []
        for part in parts[:-1]:
            if not part.startswith("the "):
                return None
            rel = part[4:]
            if rel not in self.relations:
                return None
            relations.append(rel)
        entity = parts[-1]
        if entity not in self._entity_set or not relations:
            return None
        return ParsedQuestion(tuple(relations), entity)

    def resolve(self, parsed: ParsedQuestion) -> str:
        value = parsed.entity
        for rel in reversed(parsed.relations):
            value = self.facts[(value, rel)]
        return value

    def gold_for(self, question: str) -> str | None:
        parsed = self.parse(question)
        return None if parsed is None else self.resolve(parsed)

    def fact_profile(self, parsed: ParsedQuestion) -> tuple[bool, bool]:
        key = (parsed.entity, parsed.relations[0])
        return key in self.memorized, key in self.retrievable

    def optimal_action(self, question: str) -> ActionKind | None:
        """CB iff memorized, OB iff retrievable only, CHILD iff composite."""
        parsed = self.parse(question)
        if parsed is None:
            return None
        if parsed.depth > 1:
            return ActionKind.CHILD
        mem, ret = self.fact_profile(parsed)
        if mem:
            return ActionKind.CB
        if ret:
            return ActionKind.OB
        return None

    @staticmethod
    def question_text(relations, entity: str) -> str:
        return "What is the " + ParsedQuestion(tuple(relations), entity).chain_text() + "?"

    def decomposition(self, parsed: ParsedQuestion, wrong: bool = False) -> list[str]:
        """One hop per sub-question, innermost first, chained through ``#k``.

        A wrong decomposition walks the relations in the opposite order.
        """
        if parsed.depth == 1:
            return [self.question_text(parsed.relations, parsed.entity)]
        hops = list(parsed.relations if wrong else parsed.relations[::-1])
        out = [self.question_text([hops[0]], parsed.entity)]
        out += [f"What is the {rel} of #{i}?" for i, rel in enumerate(hops[1:], start=1)]
        return out

    def distractor(self, *salt, avoid: str | None = None) -> str:
        idx = stable_hash(self.seed, "distractor", *salt) % len(self.entities)
        name = self.entities[idx]
        if name == avoid:
            name = self.entities[(idx + 1) % len(self.entities)]
        return name

    def paraphrase(self, question: str) -> str:
        parsed = self.parse(question)
        if parsed is None:
            return question
        template = REFORMULATIONS[stable_hash(self.seed, "reform", question) % len(REFORMULATIONS)]
        return template.format(chain=parsed.chain_text())

    def logprobs(self, answer: str, mean: float, *salt) -> list[float]:
        """Per-token log-probs with exactly the requested mean."""
        n = max(1, len(answer.split()))
        jitter = self.config.jitter
        vals = []
        for i in range(n):
            d = (stable_hash(self.seed, "lp", i // 2, *salt) % 1000) / 1000.0 * jitter
            vals.append(mean + d if i % 2 == 0 else mean - d)
        if n % 2 == 1:
            vals[-1] = mean * n - sum(vals[:-1])
        return vals

    # -- corpus / questions -----------------------------------------------
    def passage_for(self, key: tuple[str, str]) -> Document | None:
        doc_id = self.passage_ids.get(key)
        return None if doc_id is None else self._passages[doc_id]

    def corpus_documents(self) -> list[Document]:
        return list(self._passages)

    def sample_questions(self, n: int, depth_mix: dict[int, float], seed: int,
                         exclude: set[str] = frozenset(), prefix: str = "q") -> list[QARecord]:
        rng = np.random.default_rng([self.seed, seed])
        depths = sorted(depth_mix)
        weights = np.array([depth_mix[d] for d in depths], dtype=float)
        weights = weights / weights.sum()
        seen = set(exclude)
        out = []
        attempts = 0
        while len(out) < n:
            attempts += 1
            if attempts > 200 * n + 1000:
                raise ValueError("could not sample enough distinct questions")
            depth = depths[int(rng.choice(len(depths), p=weights))]
            entity = self.entities[int(rng.integers(len(self.entities)))]
            rel_idx = rng.choice(len(self.relations), size=depth, replace=False)
            rels = [self.relations[int(i)] for i in rel_idx]
            q = self.question_text(rels, entity)
            if q in seen:
                continue
            seen.add(q)
            gold = self.resolve(ParsedQuestion(tuple(rels), entity))
            out.append(QARecord(f"{prefix}{self.seed}-{len(out)}", q, gold, split="train"))
        return out

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": asdict(self.config),
            "entities": self.entities,
            "relations": self.relations,
            "facts": [[e, r, x] for (e, r), x in self.facts.items()],
            "memorized": sorted([list(k) for k in self.memorized]),
            "retrievable": sorted([list(k) for k in self.retrievable]),
        }

    @classmethod
    def from_dict(cls, d: dict) -> SyntheticWorld:
        return cls(
            seed=d["seed"],
            config=WorldConfig(**d["config"]),
            entities=list(d["entities"]),
            relations=list(d["relations"]),
            facts={(e, r): x for e, r, x in d["facts"]},
            memorized={tuple(k) for k in d["memorized"]},
            retrievable={tuple(k) for k in d["retrievable"]},
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> SyntheticWorld:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _entity_names(rng: np.random.Generator, n: int, tokens: int = 2) -> list[str]:
    words = sorted({c1 + v1 + c2 + v2 for c1 in _CONSONANTS for v1 in _VOWELS
                    for c2 in _CONSONANTS for v2 in _VOWELS} - _RESERVED)
    if tokens * n > len(words):
        raise ValueError(f"at most {len(words) // tokens} entities supported")
    picked = rng.choice(len(words), size=tokens * n, replace=False)
    return [" ".join(words[picked[tokens * i + j]].capitalize() for j in range(tokens))
            for i in range(n)]


def build_world(seed: int, config: WorldConfig | None = None) -> SyntheticWorld:
    cfg = config or WorldConfig()
    if not 1 <= cfg.n_relations <= len(RELATION_POOL):
        raise ValueError(f"n_relations must be in 1..{len(RELATION_POOL)}")
    rng = np.random.default_rng(seed)
    entities = _entity_names(rng, cfg.n_entities, cfg.name_tokens)
    relations = [RELATION_POOL[i] for i in sorted(rng.choice(len(RELATION_POOL), cfg.n_relations, replace=False))]
    n_mem = int(round(cfg.memorized_fraction * cfg.n_relations))
    order = rng.permutation(cfg.n_relations)
    mem_rels = {relations[i] for i in order[:n_mem]}
    facts, memorized, retrievable = {}, set(), set()
    for ei, e in enumerate(entities):
        for r in relations:
            j = int(rng.integers(cfg.n_entities - 1))
            facts[(e, r)] = entities[j if j < ei else j + 1]
            mem = r in mem_rels
            ret = not mem
            u = rng.random()
            if u < cfg.both_rate:
                mem = ret = True
            elif u < cfg.both_rate + cfg.neither_rate:
                mem = ret = False
            if mem:
                memorized.add((e, r))
            if ret:
                retrievable.add((e, r))
    return SyntheticWorld(seed, cfg, entities, relations, facts, memorized, retrievable)


DEFAULT_DEPTH_MIX = {1: 1 / 3, 2: 1 / 3, 3: 1 / 3}


def generate_world(seed: int, n_questions: int, depth_mix: dict[int, float] | None = None,
                   config: WorldConfig | None = None, split_fractions=(0.7, 0.1, 0.2)):
    """Build a world, its question set and its BM25 corpus.

    Questions are split train/dev/test by position in the (random) sample.
    """
    from .retrieval import index

    if n_questions < 1:
        raise ValueError("n_questions must be >= 1")
    mix = depth_mix or DEFAULT_DEPTH_MIX
    if any(d not in (1, 2, 3) for d in mix):
        raise ValueError("composition depths must be in {1, 2, 3}")
    world = build_world(seed, config)
    records = world.sample_questions(n_questions, mix, seed=seed)
    n_train = int(round(split_fractions[0] * n_questions))
    n_dev = int(round(split_fractions[1] * n_questions))
    for i, rec in enumerate(records):
        rec.split = "train" if i < n_train else "dev" if i < n_train + n_dev else "test"
    return world, records, index(world.corpus_documents())
