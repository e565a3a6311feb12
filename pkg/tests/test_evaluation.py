from __future__ import annotations

import csv

import numpy as np
import pytest

from dyntree.backend.base import BackendTransportError
from dyntree.evaluation import (RecordMismatch, compare, evaluate, exhaustive_solver, greedy_solver,
                                optimal_action_rate, random_solver, read_report_csv, tradeoff_csv)
from dyntree.solvers.common import SolveOutcome
from dyntree.tree import new_tree

from test_solvers import Always


def gold_solver(records):
    gold = {r.question: r.gold_answer for r in records}
    return lambda q, client, rng: SolveOutcome(gold[q], 0, [], new_tree(q))


def test_oracle_and_empty_solvers(sim):
    world, records, backend, _ = sim
    recs = records[:20]
    assert evaluate("gold", gold_solver(recs), recs, backend).accuracy == 1.0
    empty = evaluate("empty", lambda q, c, r: SolveOutcome("", 0, [], new_tree(q)), recs, backend)
    assert empty.accuracy == 0.0


def test_csv_recount_matches_accuracy(sim, tmp_path):
    world, records, backend, retriever = sim
    rep = evaluate("random", random_solver(retriever), records[:50], backend, seed=3)
    rep.write_csv(tmp_path / "r.csv")
    with open(tmp_path / "r.csv", newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if not r["record_id"].startswith("summary:")]
    assert sum(int(r["correct"]) for r in rows) / len(rows) == pytest.approx(rep.accuracy)
    assert sum(int(r["calls"]) for r in rows) == rep.total_calls
    back = read_report_csv(tmp_path / "r.csv")
    assert back.to_csv() == rep.to_csv()
    assert sum(rep.method_usage.values()) == sum(r.decisions for r in rep.rows)


def test_threads_do_not_change_report(sim):
    world, records, backend, retriever = sim
    a = evaluate("random", random_solver(retriever), records[:40], backend, seed=1)
    b = evaluate("random", random_solver(retriever), records[:40], backend, seed=1, threads=4)
    assert a.to_csv() == b.to_csv()


def test_compare_and_tradeoff(sim):
    world, records, backend, retriever = sim
    recs = records[:30]
    exh = evaluate("exhaustive", exhaustive_solver(retriever), recs, backend)
    gre = evaluate("greedy", greedy_solver(Always(CB=False), retriever), recs, backend)
    rows = compare(exh, gre)
    assert [r["solver"] for r in rows] == ["exhaustive", "greedy"]
    assert rows[0]["accuracy"] == 1.0
    assert compare(exh, exh)[0] == compare(exh, exh)[1]
    text = tradeoff_csv(rows)
    assert text.splitlines()[0] == "solver,accuracy,total_calls,mean_calls_per_question,n"
    with pytest.raises(RecordMismatch):
        compare(exh, evaluate("greedy", greedy_solver(Always(), retriever), records[30:60], backend))


def test_backend_error_recorded_per_record(sim):
    world, records, backend, retriever = sim

    def broken(q, client, rng):
        client.answer_closed_book(q)
        raise BackendTransportError("offline")

    rep = evaluate("broken", broken, records[:3], backend)
    assert [r.correct for r in rep.rows] == [0, 0, 0]
    assert all(r.calls == 1 and "offline" in r.error for r in rep.rows)


def test_optimal_action_rate_on_exhaustive(sim):
    world, records, backend, retriever = sim
    rep = evaluate("exhaustive", exhaustive_solver(retriever), records[:30], backend)
    rate, total = optimal_action_rate(rep.outcomes, world)
    assert total > 0 and 0.0 <= rate <= 1.0
