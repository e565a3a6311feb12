"""DQN decision layer: reward, exploration, replay and updates."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .nn.base import ArchitectureMismatch, QNet
from .nn.optim import Adam


class RewardName(str, enum.Enum):
    HIGH_ACCURACY = "HIGH_ACCURACY"
    BALANCED = "BALANCED"
    EFFICIENCY = "EFFICIENCY"
    CUSTOM = "CUSTOM"


REGIMES = {
    RewardName.HIGH_ACCURACY: (2.0, 0.05),
    RewardName.BALANCED: (1.0, 0.1),
    RewardName.EFFICIENCY: (0.5, 0.2),
}
CLI_REWARDS = {"high": RewardName.HIGH_ACCURACY, "balanced": RewardName.BALANCED,
               "efficiency": RewardName.EFFICIENCY}


@dataclass(frozen=True)
class RewardConfig:
    name: RewardName
    alpha: float
    beta: float
    gamma: float = 0.99

    def __post_init__(self):
        expected = REGIMES.get(self.name)
        if expected is not None and (self.alpha, self.beta) != expected:
            raise ValueError(f"{self.name.value} regime is alpha={expected[0]}, beta={expected[1]}")

    @classmethod
    def named(cls, name: str | RewardName, gamma: float = 0.99) -> RewardConfig:
        if isinstance(name, str) and name in CLI_REWARDS:
            name = CLI_REWARDS[name]
        name = RewardName(name)
        alpha, beta = REGIMES[name]
        return cls(name, alpha, beta, gamma)

    @classmethod
    def custom(cls, alpha: float, beta: float, gamma: float = 0.99) -> RewardConfig:
        return cls(RewardName.CUSTOM, alpha, beta, gamma)


def compute_reward(config: RewardConfig, sim_value: float, calls: int) -> float:
    if calls < 0:
        raise ValueError("calls must be >= 0")
    return config.alpha * sim_value - config.beta * calls


@dataclass
class Transition:
    state: np.ndarray
    action_index: int
    reward: float
    next_state: np.ndarray | None = None
    terminal: bool = True
    # actions allowed in next_state; None means every action of the variant
    next_mask: tuple[int, ...] | None = None
    # multiplier on the bootstrapped value; None means the config's gamma.
    # Multi-step transitions carry gamma ** n here.
    discount: float | None = None

    def __post_init__(self):
        if self.terminal != (self.next_state is None):
            raise ValueError("terminal transitions have no next state, and vice versa")


class ReplayBuffer:
    def __init__(self, capacity: int = 10_000, seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition | None] = [None] * capacity
        self._next = 0
        self._size = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self._size

    def push(self, transition: Transition) -> None:
        self._items[self._next] = transition
        self._next = (self._next + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def contents(self) -> list[Transition]:
        """Resident transitions, oldest first."""
        if self._size < self.capacity:
            return list(self._items[: self._size])
        return self._items[self._next:] + self._items[: self._next]

    def sample_indices(self, batch_size: int) -> np.ndarray:
        if batch_size > self._size:
            raise ValueError(f"buffer holds {self._size} transitions, cannot sample {batch_size}")
        return self.rng.choice(self._size, size=batch_size, replace=False)

    def sample(self, batch_size: int) -> list[Transition]:
        return [self._items[i] for i in self.sample_indices(batch_size)]


@dataclass
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.05
    decay_fraction: float = 0.5
    total_episodes: int = 1

    def value(self, episode: int) -> float:
        horizon = self.decay_fraction * self.total_episodes
        if horizon <= 0:
            return self.end
        frac = min(1.0, max(0, episode) / horizon)
        return self.start + (self.end - self.start) * frac


def masked_argmax(q: np.ndarray, mask) -> int:
    best, best_val = None, -np.inf
    for i in sorted(mask):
        if q[i] > best_val:
            best, best_val = i, q[i]
    return int(best)


def action_probabilities(q: np.ndarray, mask, temperature: float = 1.0) -> np.ndarray:
    """Softmax over allowed actions; disallowed actions get probability 0."""
    mask = sorted(mask)
    probs = np.zeros(len(q))
    z = np.asarray([q[i] for i in mask], dtype=float) / temperature
    z = np.exp(z - z.max())
    probs[mask] = z / z.sum()
    return probs


def select_action(net: QNet, state, mask, epsilon: float, rng: np.random.Generator) -> int:
    mask = sorted(set(mask))
    if not mask:
        raise ValueError("action mask is empty")
    if epsilon > 0 and rng.random() < epsilon:
        return int(mask[int(rng.integers(len(mask)))])
    return masked_argmax(net.forward(state), mask)


def td_target(config: RewardConfig, transition: Transition, target_net: QNet) -> float:
    if transition.terminal:
        return float(transition.reward)
    q_next = target_net.forward(transition.next_state)
    mask = transition.next_mask if transition.next_mask is not None else range(len(q_next))
    disc = config.gamma if transition.discount is None else transition.discount
    return float(transition.reward + disc * max(float(q_next[i]) for i in mask))


def train_step(net: QNet, target_net: QNet, buffer: ReplayBuffer, config: RewardConfig,
               optimizer: Adam, batch_size: int = 32) -> float:
    """One Adam step on a uniformly sampled batch; returns the pre-step mean squared TD error."""
    batch = buffer.sample(batch_size)
    states = np.stack([t.state for t in batch])
    actions = np.array([t.action_index for t in batch])
    targets = np.empty(len(batch))
    live = [i for i, t in enumerate(batch) if not t.terminal]
    for i, t in enumerate(batch):
        targets[i] = t.reward
    if live:
        q_next = target_net.forward(np.stack([batch[i].next_state for i in live]))
        for row, i in enumerate(live):
            t = batch[i]
            mask = t.next_mask if t.next_mask is not None else range(q_next.shape[1])
            disc = config.gamma if t.discount is None else t.discount
            targets[i] = t.reward + disc * max(float(q_next[row, j]) for j in mask)
    loss, grads = net.loss_and_grads(states, actions, targets)
    optimizer.apply(net, grads)
    return 2.0 * loss


def sync_target(net: QNet, target_net: QNet, step: int, every_n_steps: int = 250) -> bool:
    if net.descriptor() != target_net.descriptor():
        raise ArchitectureMismatch("online and target networks differ")
    if step % every_n_steps == 0:
        target_net.copy_params_from(net)
        return True
    return False


def returns_to_go(rewards: list[float], gamma: float) -> list[float]:
    out = [0.0] * len(rewards)
    acc = 0.0
    for i in reversed(range(len(rewards))):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out
