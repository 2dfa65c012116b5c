from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Experience:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool
    next_mask: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform minibatch sampling.

    Each stored transition also keeps the feasibility mask of its successor
    so bootstrap targets only look at actions that were actually allowed.
    """

    def __init__(self, capacity: int, state_dim: int, n_actions: int, rng: np.random.Generator):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.rng = rng
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.terminals = np.zeros(capacity, dtype=bool)
        self.next_masks = np.zeros((capacity, n_actions), dtype=bool)
        self.ids = np.full(capacity, -1, dtype=np.int64)  # insertion serial numbers
        self.size = 0
        self.added = 0

    def __len__(self) -> int:
        return self.size

    def add(self, exp: Experience) -> None:
        if not (np.all(np.isfinite(exp.state)) and np.all(np.isfinite(exp.next_state))
                and np.isfinite(exp.reward)):
            raise ValueError("experience contains non-finite values")
        if not 0 <= exp.action < self.next_masks.shape[1]:
            raise ValueError(f"action {exp.action} outside the sub-action space")
        i = self.added % self.capacity
        self.states[i] = exp.state
        self.actions[i] = exp.action
        self.rewards[i] = exp.reward
        self.next_states[i] = exp.next_state
        self.terminals[i] = exp.terminal
        self.next_masks[i] = exp.next_mask
        self.ids[i] = self.added
        self.added += 1
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch_size: int) -> np.ndarray:
        if batch_size > self.size:
            raise ValueError(f"batch of {batch_size} from {self.size} stored transitions")
        return self.rng.choice(self.size, size=batch_size, replace=False)

    def batch(self, idx: np.ndarray) -> dict:
        return {
            "states": self.states[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_states": self.next_states[idx],
            "terminals": self.terminals[idx],
            "next_masks": self.next_masks[idx],
            "ids": self.ids[idx],
        }

    def sample(self, batch_size: int) -> dict:
        return self.batch(self.sample_indices(batch_size))
