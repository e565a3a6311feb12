"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import QNet


@dataclass
class CoordinateCheck:
    name: str
    index: tuple[int, ...]
    numeric: float
    analytic: float

    @property
    def rel_error(self) -> float:
        denom = max(abs(self.numeric), abs(self.analytic), 1e-8)
        return abs(self.numeric - self.analytic) / denom


def gradient_check(net: QNet, states, actions, targets, n_coords: int = 200, h: float = 1e-3,
                   seed: int = 0, max_tries: int | None = None) -> tuple[list[CoordinateCheck], int]:
    """Compare gradients on ``n_coords`` random coordinates.

    A coordinate whose +-h perturbation flips any ReLU is skipped, since the
    loss is not differentiable across the kink and the difference quotient
    means nothing there. Returns the checks and the number skipped.
    """
    rng = np.random.default_rng(seed)
    _, grads = net.loss_and_grads(states, actions, targets)
    base_pattern = net.relu_pattern(states)
    names = sorted(net.params)
    sizes = np.array([net.params[n].size for n in names], dtype=float)
    checks: list[CoordinateCheck] = []
    skipped = 0
    max_tries = max_tries or 20 * n_coords
    while len(checks) < n_coords and len(checks) + skipped < max_tries:
        name = names[rng.choice(len(names), p=sizes / sizes.sum())]
        p = net.params[name]
        idx = tuple(int(rng.integers(s)) for s in p.shape)
        old = p[idx]
        p[idx] = old + h
        lp, _ = net.loss_and_grads(states, actions, targets)
        kink = not np.array_equal(net.relu_pattern(states), base_pattern)
        p[idx] = old - h
        lm, _ = net.loss_and_grads(states, actions, targets)
        kink = kink or not np.array_equal(net.relu_pattern(states), base_pattern)
        p[idx] = old
        if kink:
            skipped += 1
            continue
        checks.append(CoordinateCheck(name, idx, (lp - lm) / (2 * h), float(grads[name][idx])))
    return checks, skipped
