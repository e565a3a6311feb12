from __future__ import annotations

import numpy as np


class ArchitectureMismatch(ValueError):
    pass


class QNet:
    """Shared plumbing for Q-networks: ordered parameter dict and the TD loss.

    Subclasses implement ``_forward(x) -> (q, cache)`` and
    ``_backward(dq, cache) -> grads``, both batched over the first axis.
    """

    kind = "abstract"

    def __init__(self, input_dim: int, n_actions: int, dtype=np.float32):
        self.input_dim = int(input_dim)
        self.n_actions = int(n_actions)
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}

    # -- subclass hooks -----------------------------------------------------
    def _forward(self, x: np.ndarray):
        raise NotImplementedError

    def _backward(self, dq: np.ndarray, cache) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError

    def _relu_inputs(self, cache) -> list[np.ndarray]:
        raise NotImplementedError

    # -- public API -------------------------------------------------------------
    def _as_batch(self, states) -> tuple[np.ndarray, bool]:
        x = np.asarray(states, dtype=self.dtype)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(f"state length {x.shape[-1]} != input_dim {self.input_dim}")
        return x, single

    def forward(self, states) -> np.ndarray:
        x, single = self._as_batch(states)
        q, _ = self._forward(x)
        return q[0] if single else q

    def loss_and_grads(self, states, actions, targets) -> tuple[float, dict[str, np.ndarray]]:
        """Mean of 0.5 * (Q(s, a) - y)^2 over the batch, and its gradients."""
        x, _ = self._as_batch(states)
        actions = np.asarray(actions, dtype=int).reshape(-1)
        targets = np.asarray(targets, dtype=self.dtype).reshape(-1)
        if actions.shape[0] != x.shape[0] or targets.shape[0] != x.shape[0]:
            raise ValueError("states, actions and targets must have the same length")
        if actions.min() < 0 or actions.max() >= self.n_actions:
            raise ValueError(f"action index out of range for {self.n_actions} actions")
        q, cache = self._forward(x)
        n = x.shape[0]
        rows = np.arange(n)
        resid = q[rows, actions] - targets
        dq = np.zeros_like(q)
        dq[rows, actions] = resid / n
        grads = self._backward(dq, cache)
        return float(0.5 * np.mean(resid.astype(np.float64) ** 2)), grads

    def backward(self, state, action_index: int, td_target: float) -> dict[str, np.ndarray]:
        _, grads = self.loss_and_grads(np.asarray(state)[None, :], [action_index], [td_target])
        return grads

    def relu_pattern(self, states) -> np.ndarray:
        """Flattened on/off pattern of every ReLU for the given batch."""
        x, _ = self._as_batch(states)
        _, cache = self._forward(x)
        parts = [(z > 0).ravel() for z in self._relu_inputs(cache)]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=bool)

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy_params_from(self, src: QNet) -> None:
        if src.descriptor() != self.descriptor():
            raise ArchitectureMismatch("cannot copy parameters between different architectures")
        for name, value in src.params.items():
            np.copyto(self.params[name], value)

    def clone(self) -> QNet:
        other = self.__class__.__new__(self.__class__)
        other.__dict__.update(self.__dict__)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other


def copy_params(src_net: QNet, dst_net: QNet) -> None:
    dst_net.copy_params_from(src_net)
