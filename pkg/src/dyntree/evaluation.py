"""Evaluation loop, per-record reports and the accuracy/cost tradeoff table."""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .backend.base import BackendError
from .backend.client import KnowledgeClient
from .retrieval import Retriever
from .solvers.common import SolveOutcome
from .solvers.dynamic import solve_random
from .solvers.exhaustive import solve_exhaustive
from .solvers.greedy import solve_greedy
from .tree import ActionKind, TreeLimits

logger = logging.getLogger(__name__)

# solver(question, client, rng) -> SolveOutcome
Solver = Callable[[str, KnowledgeClient, np.random.Generator], SolveOutcome]

ROW_FIELDS = ("record_id", "correct", "calls", "decisions") + tuple(
    f"use_{a.value}" for a in ActionKind) + ("predicted", "gold", "error")
TRADEOFF_FIELDS = ("solver", "accuracy", "total_calls", "mean_calls_per_question", "n")


class RecordMismatch(ValueError):
    pass


@dataclass
class EvalRow:
    record_id: str
    correct: int
    calls: int
    usage: dict[ActionKind, int]
    predicted: str
    gold: str
    error: str = ""

    @property
    def decisions(self) -> int:
        return sum(self.usage.values())


@dataclass
class EvalReport:
    solver: str
    rows: list[EvalRow]
    outcomes: list[SolveOutcome | None] = field(default_factory=list, repr=False)

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def accuracy(self) -> float:
        return sum(r.correct for r in self.rows) / self.n if self.rows else 0.0

    @property
    def total_calls(self) -> int:
        return sum(r.calls for r in self.rows)

    @property
    def mean_calls_per_question(self) -> float:
        return self.total_calls / self.n if self.rows else 0.0

    @property
    def method_usage(self) -> Counter:
        usage: Counter = Counter()
        for r in self.rows:
            usage.update(r.usage)
        return usage

    def record_ids(self) -> list[str]:
        return [r.record_id for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        for r in self.rows:
            w.writerow([r.record_id, r.correct, r.calls, r.decisions]
                       + [r.usage.get(a, 0) for a in ActionKind] + [r.predicted, r.gold, r.error])
        usage = self.method_usage
        w.writerow([f"summary:{self.solver}", f"{self.accuracy:.6f}", self.total_calls,
                    sum(usage.values())] + [usage.get(a, 0) for a in ActionKind]
                   + ["", "", f"mean_calls={self.mean_calls_per_question:.6f}"])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def read_report_csv(path: str | Path) -> EvalReport:
    """Rebuild a report from its CSV (summary row dropped)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not rows[-1]["record_id"].startswith("summary:"):
        raise ValueError(f"{path}: not an evaluation report")
    solver = rows[-1]["record_id"].split(":", 1)[1]
    out = []
    for r in rows[:-1]:
        usage = {a: int(r[f"use_{a.value}"]) for a in ActionKind if int(r[f"use_{a.value}"])}
        out.append(EvalRow(r["record_id"], int(r["correct"]), int(r["calls"]), usage,
                           r["predicted"], r["gold"], r["error"]))
    return EvalReport(solver, out)


def _run_one(solver: Solver, rec, backend, judge_mode: str, rng) -> tuple[EvalRow, SolveOutcome | None]:
    client = KnowledgeClient(backend, judge_mode=judge_mode)
    try:
        outcome = solver(rec.question, client, rng)
    except BackendError as exc:
        logger.warning("record %s failed: %s", rec.id, exc)
        return EvalRow(rec.id, 0, client.calls, {}, "", rec.gold_answer, f"{type(exc).__name__}: {exc}"), None
    correct = client.judge(rec.question, outcome.final_answer, rec.gold_answer)
    return EvalRow(rec.id, int(correct), outcome.total_calls, dict(outcome.method_usage),
                   outcome.final_answer, rec.gold_answer), outcome


def evaluate(name: str, solver: Solver, records, backend, seed: int = 0, judge_mode: str = "f1",
             threads: int = 1) -> EvalReport:
    """Run ``solver`` on every record with its own client and a per-record RNG.

    Rows keep the record order whatever the thread count, so reports are
    byte-identical between sequential and threaded runs.
    """
    records = list(records)
    rngs = [np.random.default_rng([seed, i]) for i in range(len(records))]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda i: _run_one(solver, records[i], backend, judge_mode, rngs[i]),
                                    range(len(records))))
    else:
        results = [_run_one(solver, rec, backend, judge_mode, rng) for rec, rng in zip(records, rngs)]
    return EvalReport(name, [r for r, _ in results], [o for _, o in results])


def compare(*reports: EvalReport) -> list[dict]:
    """Tradeoff rows (solver, accuracy, total calls) over one shared record set."""
    if not reports:
        raise ValueError("nothing to compare")
    ids = sorted(reports[0].record_ids())
    for rep in reports[1:]:
        if sorted(rep.record_ids()) != ids:
            raise RecordMismatch(f"reports {reports[0].solver!r} and {rep.solver!r} cover different records")
    return [{"solver": r.solver, "accuracy": r.accuracy, "total_calls": r.total_calls,
             "mean_calls_per_question": r.mean_calls_per_question, "n": r.n} for r in reports]


def tradeoff_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRADEOFF_FIELDS)
    for r in rows:
        w.writerow([r["solver"], f"{r['accuracy']:.6f}", r["total_calls"],
                    f"{r['mean_calls_per_question']:.6f}", r["n"]])
    return buf.getvalue()


def optimal_action_rate(outcomes, world) -> tuple[float, int]:
    """Share of free (non-forced) decisions matching the world's constructed optimum."""
    hits = total = 0
    for outcome in outcomes:
        if outcome is None:
            continue
        for d in outcome.decisions:
            if d.forced:
                continue
            best = world.optimal_action(d.question)
            if best is None:
                continue
            total += 1
            hits += d.action.base is best
    return (hits / total if total else 0.0), total


# -- solver adapters ---------------------------------------------------------
def rl_solver(agent, retriever: Retriever) -> Solver:
    encoder = agent.encoder()
    return lambda q, client, rng: agent.solve(q, client, retriever, 0.0, rng, encoder)


def exhaustive_solver(retriever: Retriever, limits: TreeLimits | None = None) -> Solver:
    return lambda q, client, rng: solve_exhaustive(q, client, retriever, limits)


def greedy_solver(classifier, retriever: Retriever, order=None, limits: TreeLimits | None = None) -> Solver:
    return lambda q, client, rng: solve_greedy(q, classifier, client, retriever, order, limits)


def random_solver(retriever: Retriever, limits: TreeLimits | None = None) -> Solver:
    return lambda q, client, rng: solve_random(q, client, retriever, rng, limits)
