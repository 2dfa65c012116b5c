"""Tabular Q-learning baseline over a coarse abstraction of the system state."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .. import kernels
from ..mdp import ActionSpace, SystemState


def q_learning_update(table: np.ndarray, s: int, a: int, r: float, s_next: int, alpha: float,
                      gamma: float, next_mask: Optional[np.ndarray] = None,
                      terminal: bool = False) -> np.ndarray:
    """Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a)), in place."""
    if terminal:
        boot = 0.0
    elif next_mask is None:
        boot = table[s_next].max()
    else:
        boot = table[s_next][np.asarray(next_mask, dtype=bool)].max()
    table[s, a] += alpha * (r + gamma * boot - table[s, a])
    return table


class TabularQAgent:
    """Q-table indexed by (mean-demand bin, mean-reputation bin)."""

    kind = "tabular_q"

    def __init__(self, space: ActionSpace, bins: int = 8, alpha: float = 0.1, gamma: float = 0.85,
                 seed: int = 0):
        self.space = space
        self.bins = bins
        self.alpha = alpha
        self.gamma = gamma
        self.table = np.zeros((bins * bins, space.n_sub))
        self.rng = np.random.default_rng(seed)

    def _bin(self, value: float, lo: float, hi: float) -> int:
        if hi <= lo:
            return 0
        frac = (value - lo) / (hi - lo)
        return int(min(max(frac, 0.0), 1.0 - 1e-12) * self.bins)

    def state_bin(self, state: SystemState) -> int:
        d = self._bin(float(np.mean(state.ue_demands)), *self.space.demand_range)
        r = self._bin(float(np.mean(state.server_reputations)), *self.space.reputation_range)
        return d * self.bins + r

    def select_action(self, s_bin: int, mask: np.ndarray, epsilon: float,
                      rng: Optional[np.random.Generator] = None) -> int:
        mask = np.asarray(mask, dtype=bool)
        feasible = np.flatnonzero(mask)
        if feasible.size == 0:
            raise ValueError("no feasible sub-action")
        rng = rng if rng is not None else self.rng
        if epsilon > 0 and rng.random() < epsilon:
            return int(feasible[rng.integers(feasible.size)])
        return int(kernels.masked_argmax(np.ascontiguousarray(self.table[s_bin]), mask))

    def update(self, s: int, a: int, r: float, s_next: int, next_mask=None, terminal=False) -> None:
        q_learning_update(self.table, s, a, r, s_next, self.alpha, self.gamma, next_mask, terminal)
