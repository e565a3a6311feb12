from __future__ import annotations

import numpy as np

from .base import QNet


class MlpQNet(QNet):
    """ReLU MLP; ``hidden=()`` gives a single linear layer."""

    kind = "mlp"

    def __init__(self, input_dim: int, n_actions: int, hidden=(128, 128), seed: int = 0,
                 dtype=np.float32):
        super().__init__(input_dim, n_actions, dtype)
        self.hidden = tuple(int(h) for h in hidden)
        rng = np.random.default_rng(seed)
        sizes = [self.input_dim, *self.hidden, self.n_actions]
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            scale = np.sqrt(1.0 / fan_in) if last else np.sqrt(2.0 / fan_in)
            self.params[f"W{i}"] = (rng.standard_normal((fan_in, fan_out)) * scale).astype(self.dtype)
            self.params[f"b{i}"] = np.zeros(fan_out, dtype=self.dtype)

    @property
    def n_layers(self) -> int:
        return len(self.hidden) + 1

    def descriptor(self) -> dict:
        return {"kind": self.kind, "input_dim": self.input_dim, "n_actions": self.n_actions,
                "hidden": list(self.hidden)}

    def _forward(self, x):
        acts = [x]
        h = x
        for i in range(self.n_layers):
            z = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            h = np.maximum(z, 0) if i < self.n_layers - 1 else z
            acts.append(h)
        return h, acts

    def _relu_inputs(self, acts):
        return acts[1:-1]

    def _backward(self, dq, acts):
        grads = {}
        delta = dq
        for i in reversed(range(self.n_layers)):
            grads[f"W{i}"] = acts[i].T @ delta
            grads[f"b{i}"] = delta.sum(axis=0)
            if i:
                delta = (delta @ self.params[f"W{i}"].T) * (acts[i] > 0)
        return grads
