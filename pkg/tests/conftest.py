from __future__ import annotations

import sys

import numpy as np
import pytest

from dyntree.backend.base import BackendResponse, CallAccounting, RequestKind
from dyntree.backend.simulated import SimulatedBackend
from dyntree.nn.base import QNet
from dyntree.retrieval import Retriever
from dyntree.world import generate_world


class ScriptedBackend:
    """Backend returning canned (text, logprobs) per request kind, in order."""

    model_id = "scripted"

    def __init__(self, script: dict | None = None, default=("answer", (-0.1,))):
        self.script = {k: list(v) for k, v in (script or {}).items()}
        self.default = default
        self.accounting = CallAccounting()
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        queue = self.script.get(request.kind)
        text, lps = queue.pop(0) if queue else self.default
        self.accounting.charge(1, judge=request.kind is RequestKind.JUDGE)
        return BackendResponse(text, tuple(lps), 1)


class RuleNet(QNet):
    """Q-values computed by a Python rule from the state vector (test double)."""

    kind = "rule"

    def __init__(self, input_dim: int, n_actions: int, rule):
        super().__init__(input_dim, n_actions, np.float64)
        self.rule = rule

    def _forward(self, x):
        return np.stack([np.asarray(self.rule(row), dtype=float) for row in x]), None

    def descriptor(self):
        return {"kind": self.kind, "input_dim": self.input_dim, "n_actions": self.n_actions}


@pytest.fixture(scope="session")
def small_world():
    return generate_world(0, 300)


@pytest.fixture
def sim(small_world):
    world, records, corpus = small_world
    return world, records, SimulatedBackend(world), Retriever(corpus)


def find_record(world, records, depth, profiles=None):
    """First record of the given depth whose hop facts match ``profiles`` (each 'mem'/'ret')."""
    for rec in records:
        parsed = world.parse(rec.question)
        if parsed.depth != depth:
            continue
        if profiles is None:
            return rec
        value, ok = parsed.entity, True
        for rel, want in zip(reversed(parsed.relations), profiles):
            key = (value, rel)
            mem = key in world.memorized
            if (want == "mem") != mem:
                ok = False
                break
            value = world.facts[key]
        if ok:
            return rec
    raise LookupError("no matching record")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
