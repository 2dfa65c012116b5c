"""State encoding, factored action space, feasibility masks and reward.

A timeslot's joint action (one UE and one hash level per server) is chosen
as M sequential sub-decisions in server order.  Sub-action ``a`` for a
server encodes ``(ue, level) = divmod(a, L)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class InfeasibleAction(ValueError):
    """A joint or partial action violates the offloading constraints."""


@dataclass(frozen=True)
class SystemState:
    ue_demands: np.ndarray
    server_reputations: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.ue_demands, dtype=float)
        r = np.asarray(self.server_reputations, dtype=float)
        if d.ndim != 1 or r.ndim != 1:
            raise ValueError("state components must be vectors")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(r))):
            raise ValueError("state entries must be finite")
        if np.any(d < 0) or np.any(r < 0):
            raise ValueError("state entries must be non-negative")
        object.__setattr__(self, "ue_demands", d)
        object.__setattr__(self, "server_reputations", r)


@dataclass(frozen=True)
class JointAction:
    ues: tuple
    levels: tuple

    def __post_init__(self):
        object.__setattr__(self, "ues", tuple(int(u) for u in self.ues))
        object.__setattr__(self, "levels", tuple(int(l) for l in self.levels))
        if len(self.ues) != len(self.levels):
            raise ValueError("ues and levels must have one entry per server")

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[int, int]]) -> "JointAction":
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.ues, self.levels))


@dataclass(frozen=True)
class RewardWeights:
    w_reward: float = 1.0
    w_revenue: float = 1.0
    w_latency: float = 1.0

    def __post_init__(self):
        if min(self.w_reward, self.w_revenue, self.w_latency) < 0:
            raise ValueError("reward weights must be non-negative")

    def __add__(self, other: "RewardWeights") -> "RewardWeights":
        return RewardWeights(self.w_reward + other.w_reward,
                             self.w_revenue + other.w_revenue,
                             self.w_latency + other.w_latency)


DEFAULT_HASH_LEVELS = (0.0, 20.0, 40.0, 60.0, 80.0, 100.0)


@dataclass(frozen=True)
class ActionSpace:
    num_ues: int
    num_servers: int
    total_hash: float
    hash_levels: tuple = DEFAULT_HASH_LEVELS
    demand_range: tuple = (0.6, 1.6)
    reputation_range: tuple = (0.0, 3.0)
    _level_arr: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        levels = tuple(float(h) for h in self.hash_levels)
        object.__setattr__(self, "hash_levels", levels)
        if self.num_ues < 1 or self.num_servers < 1:
            raise ValueError("need at least one UE and one server")
        if self.num_ues < self.num_servers:
            raise ValueError(f"U={self.num_ues} < M={self.num_servers}: servers need distinct UEs")
        if not levels or any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("hash levels must be strictly increasing")
        if levels[0] < 0 or levels[-1] > self.total_hash:
            raise ValueError("hash levels must lie within [0, H]")
        object.__setattr__(self, "_level_arr", np.array(levels))

    @property
    def num_levels(self) -> int:
        return len(self.hash_levels)

    @property
    def n_sub(self) -> int:
        return subaction_space(self.num_ues, self.num_levels)

    @property
    def state_dim(self) -> int:
        return self.num_ues + self.num_servers

    @property
    def input_dim(self) -> int:
        """Q-network input: encoded state, one-hot server, remaining budget."""
        return self.state_dim + self.num_servers + 1

    def encode_sub(self, ue: int, level: int) -> int:
        return ue * self.num_levels + level

    def decode_sub(self, a: int) -> tuple[int, int]:
        return divmod(int(a), self.num_levels)

    def hash_of(self, level: int) -> float:
        return self.hash_levels[level]

    def level_array(self) -> np.ndarray:
        return self._level_arr


def subaction_space(num_ues: int, num_levels: int) -> int:
    if num_ues < 1 or num_levels < 1:
        raise ValueError("counts must be positive")
    return num_ues * num_levels


def _minmax(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi <= lo:
        return np.zeros_like(x)
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


def encode_state(state: SystemState, space: ActionSpace) -> np.ndarray:
    if state.ue_demands.shape != (space.num_ues,) or state.server_reputations.shape != (space.num_servers,):
        raise ValueError(
            f"state shape ({state.ue_demands.size}, {state.server_reputations.size}) "
            f"does not match (U={space.num_ues}, M={space.num_servers})"
        )
    return np.concatenate([
        _minmax(state.ue_demands, *space.demand_range),
        _minmax(state.server_reputations, *space.reputation_range),
    ])


def agent_input(encoded: np.ndarray, server: int, used_hash: float, space: ActionSpace) -> np.ndarray:
    onehot = np.zeros(space.num_servers)
    onehot[server] = 1.0
    remaining = max(space.total_hash - used_hash, 0.0) / space.total_hash
    return np.concatenate([encoded, onehot, [remaining]])


def feasible_mask(space: ActionSpace, partial: Sequence[tuple[int, int]] = ()) -> np.ndarray:
    """Boolean mask over the next server's sub-actions given earlier choices."""
    if len(partial) >= space.num_servers:
        raise InfeasibleAction("all servers already decided")
    taken = np.zeros(space.num_ues, dtype=bool)
    used = 0.0
    for ue, level in partial:
        if not (0 <= ue < space.num_ues and 0 <= level < space.num_levels):
            raise InfeasibleAction(f"partial decision ({ue}, {level}) out of range")
        if taken[ue]:
            raise InfeasibleAction(f"UE {ue} selected twice in partial decisions")
        taken[ue] = True
        used += space.hash_of(level)
    levels = space.level_array()
    level_ok = (levels + used <= space.total_hash) & (levels < space.total_hash)
    mask = np.logical_and.outer(~taken, level_ok).ravel()
    if not mask.any():
        raise InfeasibleAction("no feasible sub-action remains")
    return mask


def restrict_mask(mask: np.ndarray, space: ActionSpace, ue: Optional[int] = None,
                  level: Optional[int] = None) -> np.ndarray:
    """Pin the UE and/or hash level of a sub-decision (used by ablations)."""
    grid = mask.reshape(space.num_ues, space.num_levels).copy()
    if ue is not None:
        keep = np.zeros_like(grid)
        keep[ue, :] = True
        grid &= keep
    if level is not None:
        keep = np.zeros_like(grid)
        keep[:, level] = True
        grid &= keep
    return grid.ravel()


def violations(space: ActionSpace, action: JointAction) -> list[str]:
    out = []
    M = space.num_servers
    if len(action.ues) != M:
        return [f"action covers {len(action.ues)} servers, expected {M}"]
    for m, (u, l) in enumerate(action.pairs()):
        if not 0 <= u < space.num_ues:
            out.append(f"server {m}: UE index {u} outside [0, {space.num_ues})")
        if not 0 <= l < space.num_levels:
            out.append(f"server {m}: hash level {l} outside [0, {space.num_levels})")
    if out:
        return out
    if len(set(action.ues)) != M:
        out.append(f"UEs not distinct across servers: {action.ues}")
    hashes = [space.hash_of(l) for l in action.levels]
    if sum(hashes) > space.total_hash:
        out.append(f"total hash {sum(hashes)} exceeds network hash {space.total_hash}")
    for m, p in enumerate(hashes):
        if p >= space.total_hash:
            out.append(f"server {m}: hash {p} not below network hash {space.total_hash}")
    return out


def check_action(space: ActionSpace, action: JointAction) -> None:
    problems = violations(space, action)
    if problems:
        raise InfeasibleAction("; ".join(problems))


def server_utilities(outcome, weights: RewardWeights = RewardWeights()) -> np.ndarray:
    return (weights.w_reward * np.asarray(outcome.mining_rewards, dtype=float)
            + weights.w_revenue * np.asarray(outcome.revenues, dtype=float)
            - weights.w_latency * np.asarray(outcome.latencies, dtype=float))


def reward(outcome, weights: RewardWeights = RewardWeights()) -> float:
    """Weighted slot utility: mining reward plus revenue minus latency, over servers."""
    return float(np.sum(server_utilities(outcome, weights)))


ACTION_TRACE_FIELDS = ["timeslot", "server", "ue", "hash_level"]


def write_action_trace(path, actions: Sequence[JointAction], start_slot: int = 0) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ACTION_TRACE_FIELDS)
        for t, act in enumerate(actions, start_slot):
            for m, (u, l) in enumerate(act.pairs()):
                w.writerow([t, m, u, l])


def read_action_trace(path) -> list[JointAction]:
    slots: dict[int, dict[int, tuple[int, int]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            slots.setdefault(int(row["timeslot"]), {})[int(row["server"])] = (int(row["ue"]), int(row["hash_level"]))
    out = []
    for t in sorted(slots):
        per = slots[t]
        out.append(JointAction.from_pairs([per[m] for m in sorted(per)]))
    return out
