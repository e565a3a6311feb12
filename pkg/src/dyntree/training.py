"""Episode loop that trains a Q-network on QA records."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .agent import (EpsilonSchedule, ReplayBuffer, RewardConfig, Transition, returns_to_go,
                    sync_target, train_step)
from .backend.base import BackendError
from .backend.client import KnowledgeClient
from .embeddings import HashedEmbedder, cosine
from .features import StateEncoder, SuccessRates, Variant, get_variant, state_dim, update_success_rate
from .retrieval import Retriever
from .solvers.common import SolveOutcome
from .solvers.dynamic import STEP_BUDGET, Step, solve_rl
from .tree import TreeLimits

logger = logging.getLogger(__name__)

LOG_FIELDS = ("episode", "loss", "epsilon", "reward", "calls")
RETURN_MODES = ("mc", "td", "watkins")


@dataclass
class TrainConfig:
    episodes: int = 5000
    seed: int = 0
    batch_size: int = 32
    buffer_capacity: int = 10_000
    warmup: int = 500
    sync_every: int = 250
    lr: float = 1e-3
    clip_norm: float = 5.0
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    decay_fraction: float = 0.5
    # "mc": each decision's target is its discounted return-to-go;
    # "td": one-step bootstrapped targets across consecutive decisions;
    # "watkins": return-to-go cut at the next exploratory decision, bootstrapped there
    return_mode: str = "watkins"
    updates_per_decision: int = 1
    embed_dim: int = 64
    step_budget: int = STEP_BUDGET
    limits: TreeLimits = field(default_factory=TreeLimits)

    def __post_init__(self):
        if self.return_mode not in RETURN_MODES:
            raise ValueError(f"return_mode must be one of {RETURN_MODES}")
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")


def build_net(variant: Variant, input_dim: int, seed: int = 0, dtype=np.float32) -> nn.QNet:
    if variant.arch == "transformer":
        return nn.TransformerQNet(input_dim, variant.n_actions, seed=seed, dtype=dtype)
    return nn.MlpQNet(input_dim, variant.n_actions, seed=seed, dtype=dtype)


@dataclass
class TrainedAgent:
    variant: Variant
    net: nn.QNet
    rates: SuccessRates
    limits: TreeLimits = field(default_factory=TreeLimits)
    embed_dim: int = 64

    def encoder(self) -> StateEncoder:
        return StateEncoder(self.variant, HashedEmbedder(self.embed_dim), self.limits.max_depth)

    def solve(self, question: str, client: KnowledgeClient, retriever: Retriever,
              epsilon: float = 0.0, rng=None, encoder: StateEncoder | None = None) -> SolveOutcome:
        return solve_rl(question, self.variant, self.net, client, retriever,
                        encoder or self.encoder(), self.rates, epsilon, rng, self.limits)

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        nn.save(self.net, d / "model.dtqn")
        (d / "success_rates.json").write_text(json.dumps(self.rates.to_dict(), sort_keys=True))
        meta = {"variant": self.variant.name, "embed_dim": self.embed_dim, "limits": asdict(self.limits)}
        (d / "agent.json").write_text(json.dumps(meta, sort_keys=True, indent=1))

    @classmethod
    def load(cls, directory: str | Path) -> TrainedAgent:
        d = Path(directory)
        meta = json.loads((d / "agent.json").read_text())
        variant = get_variant(meta["variant"])
        net = nn.load(d / "model.dtqn")
        expected = state_dim(variant, meta["embed_dim"])
        if net.input_dim != expected or net.n_actions != variant.n_actions:
            raise nn.ArchitectureMismatch(
                f"checkpoint is {net.input_dim}->{net.n_actions}, variant {variant.name} needs "
                f"{expected}->{variant.n_actions}")
        rates = SuccessRates.from_dict(json.loads((d / "success_rates.json").read_text()))
        return cls(variant, net, rates, TreeLimits(**meta["limits"]), meta["embed_dim"])


def step_rewards(steps: list[Step], reward: RewardConfig, similarity: float) -> list[float]:
    """Per-decision rewards: each pays for its own calls, the last also gets the answer term."""
    rewards = [-reward.beta * s.calls for s in steps]
    if rewards:
        rewards[-1] += reward.alpha * similarity
    return rewards


def episode_transitions(steps: list[Step], reward: RewardConfig, similarity: float,
                        return_mode: str = "mc") -> list[Transition]:
    rewards = step_rewards(steps, reward, similarity)
    if return_mode == "mc":
        returns = returns_to_go(rewards, reward.gamma)
        return [Transition(s.state, s.action_index, g) for s, g in zip(steps, returns)]
    if return_mode == "watkins":
        return _truncated_returns(steps, rewards, reward.gamma)
    out = []
    for i, s in enumerate(steps):
        if i + 1 < len(steps):
            nxt = steps[i + 1]
            out.append(Transition(s.state, s.action_index, rewards[i], nxt.state, False, nxt.mask))
        else:
            out.append(Transition(s.state, s.action_index, rewards[i]))
    return out


def _truncated_returns(steps: list[Step], rewards: list[float], gamma: float) -> list[Transition]:
    """Watkins-style multi-step targets.

    A later exploratory action says nothing about the greedy continuation, so
    the return stops there and the target net's estimate takes over.
    """
    out = []
    n = len(steps)
    cut = n  # index of the next exploratory step after i
    acc = 0.0
    for i in reversed(range(n)):
        if cut < n:
            # recompute the partial sum up to the cut; episodes are short
            acc = sum(rewards[k] * gamma ** (k - i) for k in range(i, cut))
            nxt = steps[cut]
            out.append(Transition(steps[i].state, steps[i].action_index, acc, nxt.state, False,
                                  nxt.mask, gamma ** (cut - i)))
        else:
            acc = rewards[i] + gamma * acc
            out.append(Transition(steps[i].state, steps[i].action_index, acc))
        if not steps[i].greedy:
            cut = i
    out.reverse()
    return out


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6f}"


def train(variant: Variant | str, reward: RewardConfig, records, backend, retriever: Retriever,
          config: TrainConfig | None = None, log_path: str | Path | None = None,
          judge_mode: str = "f1") -> tuple[TrainedAgent, list[dict]]:
    """Run ``config.episodes`` episodes on questions drawn uniformly from ``records``."""
    config = config or TrainConfig()
    variant = get_variant(variant) if isinstance(variant, str) else variant
    records = list(records)
    if not records:
        raise ValueError("no training records")
    embedder = HashedEmbedder(config.embed_dim)
    encoder = StateEncoder(variant, embedder, config.limits.max_depth)
    net = build_net(variant, encoder.size, config.seed)
    target = net.clone()
    optimizer = nn.Adam(lr=config.lr, clip_norm=config.clip_norm)
    buffer = ReplayBuffer(config.buffer_capacity, seed=config.seed + 1)
    schedule = EpsilonSchedule(config.epsilon_start, config.epsilon_end, config.decay_fraction,
                               config.episodes)
    rng = np.random.default_rng(config.seed)
    rates = SuccessRates()
    agent = TrainedAgent(variant, net, rates, config.limits, config.embed_dim)
    updates = 0
    log: list[dict] = []
    for ep in range(config.episodes):
        rec = records[int(rng.integers(len(records)))]
        eps = schedule.value(ep)
        client = KnowledgeClient(backend, judge_mode=judge_mode)
        try:
            outcome = solve_rl(rec.question, variant, net, client, retriever, encoder, rates, eps,
                               rng, config.limits, config.step_budget)
            correct = client.judge(rec.question, outcome.final_answer, rec.gold_answer)
        except BackendError as exc:
            logger.warning("episode %d aborted (record %s): %s", ep, rec.id, exc)
            continue
        sim = cosine(embedder.embed(outcome.final_answer), embedder.embed(rec.gold_answer))
        transitions = episode_transitions(outcome.steps, reward, sim, config.return_mode)
        outcome.transitions = transitions
        for t in transitions:
            buffer.push(t)
        for s in outcome.steps:
            update_success_rate(rates, variant.actions[s.action_index], correct)
        losses = []
        if len(buffer) >= max(config.warmup, config.batch_size):
            for _ in range(len(transitions) * config.updates_per_decision):
                losses.append(train_step(net, target, buffer, reward, optimizer, config.batch_size))
                updates += 1
                sync_target(net, target, updates, config.sync_every)
        log.append({"episode": ep, "loss": float(np.mean(losses)) if losses else None,
                    "epsilon": eps, "reward": float(sum(step_rewards(outcome.steps, reward, sim))),
                    "calls": outcome.total_calls})
    if log_path is not None:
        write_training_log(log_path, log)
    return agent, log


def write_training_log(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        for r in rows:
            w.writerow([r["episode"], _fmt(r["loss"]), _fmt(r["epsilon"]), _fmt(r["reward"]), r["calls"]])
