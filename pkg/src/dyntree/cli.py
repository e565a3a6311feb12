"""Command-line entry point: train, eval, compare, generate-world, inspect."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .agent import CLI_REWARDS, RewardConfig
from .backend.base import BackendError, CachedBackend
from .backend.client import KnowledgeClient
from .backend.http import CACHE_DIR_ENV, HttpChatBackend
from .backend.simulated import SimulatedBackend
from .datasets import FORMATS, DatasetError, corpus_from_records, load_dataset, write_records
from .evaluation import (compare, evaluate, exhaustive_solver, greedy_solver, random_solver,
                         read_report_csv, rl_solver, tradeoff_csv)
from .features import VARIANTS
from .nn.base import ArchitectureMismatch
from .nn.checkpoint import CheckpointError
from .retrieval import RetrievalConfig, Retriever, index, load_corpus_jsonl, write_corpus_jsonl
from .solvers.exhaustive import solve_exhaustive
from .solvers.dynamic import solve_random
from .solvers.greedy import solve_greedy, train_reliability_classifier
from .training import TrainConfig, TrainedAgent, train
from .tree import TreeLimits
from .world import SyntheticWorld, generate_world

logger = logging.getLogger("dyntree")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3
SOLVERS = ("rl", "exhaustive", "greedy", "random")
WORLD_FILE, RECORDS_FILE, CORPUS_FILE = "world.json", "records.jsonl", "corpus.jsonl"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- data / backend wiring ---------------------------------------------------
class Workspace:
    """Records, retriever and backend resolved from the command-line flags."""

    def __init__(self, args):
        self.world: SyntheticWorld | None = None
        wdir = Path(args.world) if args.world else None
        if wdir is not None and (wdir / WORLD_FILE).exists():
            self.world = SyntheticWorld.load(wdir / WORLD_FILE)
        if args.dataset:
            self.records = load_dataset(args.dataset, args.format)
        elif wdir is not None:
            self.records = load_dataset(wdir / RECORDS_FILE, "records_jsonl")
        else:
            raise UsageError("give --world DIR (from generate-world) or --dataset PATH")
        if wdir is not None and (wdir / CORPUS_FILE).exists():
            docs = load_corpus_jsonl(wdir / CORPUS_FILE)
        else:
            docs = corpus_from_records(self.records)
        if not docs:
            raise DatasetError("empty retrieval corpus")
        self.retriever = Retriever(index(docs), RetrievalConfig(k=args.k))
        if args.backend == "sim":
            if self.world is None:
                raise UsageError("--backend sim needs --world DIR containing world.json")
            self.backend = SimulatedBackend(self.world)
        else:
            inner = HttpChatBackend()
            cache = os.environ.get(CACHE_DIR_ENV)
            self.backend = CachedBackend(inner, cache) if cache else inner

    def split(self, name: str, limit: int | None = None) -> list:
        # datasets loaded from files carry one split; use them all
        recs = [r for r in self.records if r.split == name] or list(self.records)
        return recs[:limit] if limit else recs


def _train_config(args) -> tuple[str, str, TrainConfig]:
    cfg: dict = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DatasetError(f"{args.config}: unreadable config ({exc})") from exc
    variant = args.variant or cfg.pop("variant", "q_only")
    reward = args.reward or cfg.pop("reward", "balanced")
    cfg.pop("variant", None)
    cfg.pop("reward", None)
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(cfg) - known
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    if "limits" in cfg:
        cfg["limits"] = TreeLimits(**cfg["limits"])
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.episodes is not None:
        cfg["episodes"] = args.episodes
    if variant not in VARIANTS:
        raise UsageError(f"unknown variant {variant!r}")
    if reward not in CLI_REWARDS:
        raise UsageError(f"unknown reward regime {reward!r}")
    return variant, reward, TrainConfig(**cfg)


# -- subcommands -------------------------------------------------------------
def cmd_generate_world(args) -> int:
    world, records, _ = generate_world(args.seed or 0, args.n_questions)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    world.save(out / WORLD_FILE)
    write_records(out / RECORDS_FILE, records)
    write_corpus_jsonl(out / CORPUS_FILE, world.corpus_documents())
    print(f"wrote {len(records)} questions and {len(world.corpus_documents())} passages to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    variant, reward, config = _train_config(args)
    ws = Workspace(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    agent, log = train(variant, RewardConfig.named(reward), ws.split("train"), ws.backend,
                       ws.retriever, config, out / "training_log.csv")
    agent.save(out / "agent")
    (out / "train_config.json").write_text(json.dumps(
        {"variant": variant, "reward": reward, "episodes": config.episodes, "seed": config.seed,
         "return_mode": config.return_mode}, sort_keys=True, indent=1))
    print(f"trained {variant} for {len(log)} episodes; agent saved to {out / 'agent'}")
    return EXIT_OK


def _solver(args, ws: Workspace):
    if args.solver == "rl":
        if not args.agent:
            raise UsageError("--solver rl needs --agent DIR")
        return rl_solver(TrainedAgent.load(args.agent), ws.retriever)
    if args.solver == "exhaustive":
        return exhaustive_solver(ws.retriever)
    if args.solver == "random":
        return random_solver(ws.retriever)
    dev = ws.split("dev", args.dev_limit)
    clf = train_reliability_classifier(dev, lambda: KnowledgeClient(ws.backend), ws.retriever,
                                       seed=args.seed or 0)
    return greedy_solver(clf, ws.retriever)


def cmd_eval(args) -> int:
    ws = Workspace(args)
    solver = _solver(args, ws)
    records = ws.split(args.split, args.limit)
    report = evaluate(args.solver, solver, records, ws.backend, seed=args.seed or 0,
                      threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"eval_{args.solver}.csv"
    report.write_csv(path)
    print(f"{args.solver}: accuracy {report.accuracy:.4f}, mean calls {report.mean_calls_per_question:.3f} "
          f"over {report.n} records -> {path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    reports = []
    for p in args.reports:
        try:
            reports.append(read_report_csv(p))
        except (OSError, KeyError) as exc:
            raise DatasetError(f"{p}: {exc}") from exc
    text = tradeoff_csv(compare(*reports))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "tradeoff.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_inspect(args) -> int:
    ws = Workspace(args)
    client = KnowledgeClient(ws.backend)
    if args.solver == "rl":
        if not args.agent:
            raise UsageError("--solver rl needs --agent DIR")
        outcome = TrainedAgent.load(args.agent).solve(args.question, client, ws.retriever)
    elif args.solver == "exhaustive":
        outcome = solve_exhaustive(args.question, client, ws.retriever)
    elif args.solver == "random":
        outcome = solve_random(args.question, client, ws.retriever, np.random.default_rng(args.seed or 0))
    else:
        clf = train_reliability_classifier(ws.split("dev", args.dev_limit),
                                           lambda: KnowledgeClient(ws.backend), ws.retriever)
        outcome = solve_greedy(args.question, clf, client, ws.retriever)
    print(json.dumps(outcome.tree.to_json(), indent=1))
    for line in outcome.trace_lines():
        print(line)
    print(json.dumps({"final_answer": outcome.final_answer, "total_calls": outcome.total_calls}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dyntree", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_flags(sp):
        sp.add_argument("--world", help="directory written by generate-world")
        sp.add_argument("--dataset", help="QA file to use instead of the world's records")
        sp.add_argument("--format", choices=FORMATS, default="records_jsonl")
        sp.add_argument("--backend", choices=("sim", "http"), default="sim")
        sp.add_argument("--k", type=int, choices=(3, 5, 7), default=5)
        sp.add_argument("--seed", type=int)

    g = sub.add_parser("generate-world", help="write a synthetic world, its questions and corpus")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-questions", type=int, default=1000)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate_world)

    t = sub.add_parser("train", help="train a Q-network variant")
    data_flags(t)
    t.add_argument("--variant", choices=sorted(VARIANTS))
    t.add_argument("--reward", choices=sorted(CLI_REWARDS))
    t.add_argument("--episodes", type=int)
    t.add_argument("--config", help="JSON training config (flags override it)")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    def solver_flags(sp):
        sp.add_argument("--solver", choices=SOLVERS, default="rl")
        sp.add_argument("--agent", help="agent directory saved by train")
        sp.add_argument("--dev-limit", type=int, default=200, help="dev questions for greedy classifiers")

    e = sub.add_parser("eval", help="evaluate a solver and write a per-record CSV")
    data_flags(e)
    solver_flags(e)
    e.add_argument("--split", choices=("train", "dev", "test"), default="test")
    e.add_argument("--limit", type=int)
    e.add_argument("--threads", type=int, default=1)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", help="accuracy/calls tradeoff table from eval CSVs")
    c.add_argument("reports", nargs="+")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    i = sub.add_parser("inspect", help="print one question's tree and decision trace")
    data_flags(i)
    solver_flags(i)
    i.add_argument("--question", required=True)
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dyntree: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendError as exc:
        print(f"dyntree: backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (DatasetError, CheckpointError, ArchitectureMismatch, OSError, ValueError) as exc:
        print(f"dyntree: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
