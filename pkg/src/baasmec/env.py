"""MEC environment: tasks, service cost, latency, reputation and the slot step."""
from __future__ import annotations

import csv
import os
from collections import deque
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import ledger as lg
from .mdp import ActionSpace, JointAction, RewardWeights, SystemState, check_action, reward


@dataclass(frozen=True)
class TaskSpec:
    data_size_mb: float
    cpu_demand_gcycles: float
    deadline_s: float

    def __post_init__(self):
        if min(self.data_size_mb, self.cpu_demand_gcycles, self.deadline_s) <= 0:
            raise ValueError("task fields must be positive")


@dataclass
class MecServer:
    server_id: int
    wallet: str
    compute_capacity_ghz: float = 5.0
    hash_power_mhs: float = 0.0


@dataclass(frozen=True)
class EnvConfig:
    num_ues: int = 6
    num_servers: int = 3
    price_unit: float = 0.15
    total_hash: float = 500.0
    horizon: int = 200
    reward_weights: RewardWeights = RewardWeights()
    seed: int = 0
    capacity_ghz: float = 5.0
    data_size_range: tuple = (1.0, 5.0)
    demand_range: tuple = (0.6, 1.6)
    slack_factor: float = 1.2
    ref_capacity_ghz: float = 5.0
    latency_scale: float = 1.0
    hash_levels: tuple = (0.0, 20.0, 40.0, 60.0, 80.0, 100.0)
    block_size_kb: float = 5.0
    kappa: float = 60.0
    eta: float = 1.0 / 600.0
    first_miner_reward: float = 30.0
    reward_per_kb: float = 0.0
    reputation_window: Optional[int] = None
    reputation_range: tuple = (0.0, 3.0)
    initial_ue_balance: float = 1000.0

    def __post_init__(self):
        if not isinstance(self.reward_weights, RewardWeights):
            object.__setattr__(self, "reward_weights", RewardWeights(*self.reward_weights))
        if self.num_ues < self.num_servers:
            raise ValueError(f"num_ues={self.num_ues} must be >= num_servers={self.num_servers}")
        if self.num_servers < 1 or self.horizon < 1:
            raise ValueError("need at least one server and a positive horizon")
        if self.price_unit <= 0 or self.total_hash <= 0 or self.capacity_ghz <= 0:
            raise ValueError("price, total hash and capacity must be positive")
        lo, hi = self.data_size_range
        if not 0 < lo <= hi:
            raise ValueError("data size range must be positive and ordered")
        lo, hi = self.demand_range
        if not 0 < lo <= hi:
            raise ValueError("demand range must be positive and ordered")

    @property
    def window(self) -> int:
        return self.reputation_window or self.horizon

    def action_space(self) -> ActionSpace:
        # a degenerate (fixed) demand range still needs a scaling span
        lo, hi = self.demand_range
        scale = (0.6, 1.6) if hi <= lo else (lo, hi)
        return ActionSpace(self.num_ues, self.num_servers, self.total_hash,
                           tuple(self.hash_levels), scale, tuple(self.reputation_range))

    def mining_model(self) -> lg.MiningModel:
        return lg.MiningModel(self.eta, self.kappa, self.block_size_kb,
                              self.first_miner_reward, self.reward_per_kb)

    def with_(self, **kw) -> "EnvConfig":
        return replace(self, **kw)


def service_cost(cpu_demand_gcycles: float, price_unit: float) -> float:
    if cpu_demand_gcycles <= 0 or price_unit <= 0:
        raise ValueError("demand and price must be positive")
    return price_unit * cpu_demand_gcycles


def execution_latency(assigned: bool, data_size_mb: float, cpu_demand_gcycles: float,
                      capacity_ghz: float) -> float:
    # data size enters as a dimensionless multiplier
    if capacity_ghz <= 0:
        raise ValueError("capacity must be positive")
    if not assigned:
        return 0.0
    return data_size_mb * cpu_demand_gcycles / capacity_ghz


def reputation_score(desired_sum_s: float, actual_sum_s: float) -> float:
    if desired_sum_s < 0 or actual_sum_s < 0:
        raise ValueError("latency sums must be non-negative")
    if actual_sum_s == 0:
        return 1.0
    return desired_sum_s / actual_sum_s


class ReputationTracker:
    """Per-server desired/actual latency sums over a sliding slot window."""

    def __init__(self, num_servers: int, window: int):
        self.window = window
        self._slots: list[deque] = [deque(maxlen=window) for _ in range(num_servers)]

    def record(self, server: int, desired_s: float, actual_s: float) -> None:
        self._slots[server].append((desired_s, actual_s))

    def sums(self, server: int) -> tuple[float, float]:
        hist = self._slots[server]
        return sum(d for d, _ in hist), sum(a for _, a in hist)

    def score(self, server: int) -> float:
        return reputation_score(*self.sums(server))

    def scores(self) -> np.ndarray:
        return np.array([self.score(m) for m in range(len(self._slots))])


def task_deadline(data_size_mb, cpu_demand_gcycles, slack_factor: float = 1.2,
                  ref_capacity_ghz: float = 5.0, latency_scale: float = 1.0):
    """Desired completion time: a slack multiple of latency at reference capacity."""
    return slack_factor * data_size_mb * latency_scale * cpu_demand_gcycles / ref_capacity_ghz


def sample_tasks(rng: np.random.Generator, config: EnvConfig) -> list[TaskSpec]:
    U = config.num_ues
    d = rng.uniform(*config.data_size_range, size=U)
    xi = rng.uniform(*config.demand_range, size=U)
    tau = task_deadline(d, xi, config.slack_factor, config.ref_capacity_ghz, config.latency_scale)
    return [TaskSpec(float(a), float(b), float(c)) for a, b, c in zip(d, xi, tau)]


@dataclass
class TimeslotOutcome:
    timeslot: int
    served_ues: list
    hash_mhs: list
    revenues: list
    latencies: list
    mining_rewards: list
    success_probs: list
    winner: Optional[int]
    skipped: list
    total_reward: float = 0.0


@dataclass(frozen=True)
class SlotProblem:
    """Everything needed to score candidate joint actions for one slot."""

    demands: np.ndarray
    sizes: np.ndarray
    hash_levels: np.ndarray
    capacity_ghz: float
    price_unit: float
    total_hash: float
    mining_factor: float  # R * exp(-eta * phi(b))
    weights: RewardWeights
    num_servers: int


class MecEnv:
    """One blockchain-empowered MEC system instance.

    Tasks and winner draws use independent child streams of ``seed`` so two
    policies run on the same seed face the same task sequence.
    """

    def __init__(self, config: EnvConfig, seed: Optional[int] = None):
        self.config = config
        self.space = config.action_space()
        self.mining = config.mining_model()
        seed = config.seed if seed is None else seed
        task_ss, win_ss, ledger_ss = np.random.SeedSequence(seed).spawn(3)
        self.task_rng = np.random.default_rng(task_ss)
        self.win_rng = np.random.default_rng(win_ss)
        self._ledger_seed = int(ledger_ss.generate_state(1)[0])
        self.episode = -1
        self.reset()

    def reset(self) -> SystemState:
        cfg = self.config
        self.episode += 1
        self.ledger = lg.Ledger(seed=self._ledger_seed + self.episode)
        self.ue_wallets = [self.ledger.register_account(cfg.initial_ue_balance).wallet_address
                           for _ in range(cfg.num_ues)]
        self.servers = [MecServer(m, self.ledger.register_account(0.0).wallet_address, cfg.capacity_ghz)
                        for m in range(cfg.num_servers)]
        self.reputation = ReputationTracker(cfg.num_servers, cfg.window)
        self.t = 0
        self.tasks = sample_tasks(self.task_rng, cfg)
        self.state = self._observe()
        return self.state

    def _observe(self) -> SystemState:
        return SystemState(np.array([t.cpu_demand_gcycles for t in self.tasks]), self.reputation.scores())

    @property
    def done(self) -> bool:
        return self.t >= self.config.horizon

    def slot_problem(self) -> SlotProblem:
        cfg = self.config
        return SlotProblem(
            demands=np.array([t.cpu_demand_gcycles for t in self.tasks]),
            sizes=np.array([t.data_size_mb * cfg.latency_scale for t in self.tasks]),
            hash_levels=np.array(self.space.hash_levels),
            capacity_ghz=cfg.capacity_ghz,
            price_unit=cfg.price_unit,
            total_hash=cfg.total_hash,
            mining_factor=self.mining.reward * self.mining.survival,
            weights=cfg.reward_weights,
            num_servers=cfg.num_servers,
        )

    def evaluate(self, action: JointAction) -> float:
        """Utility the action would earn this slot, assuming every payment clears."""
        cfg = self.config
        check_action(self.space, action)
        total = 0.0
        w = cfg.reward_weights
        prop = lg.propagation_time(self.mining.block_size_kb, self.mining.kappa)
        for m, (u, l) in enumerate(action.pairs()):
            task = self.tasks[u]
            phi = service_cost(task.cpu_demand_gcycles, cfg.price_unit)
            lat = execution_latency(True, task.data_size_mb * cfg.latency_scale,
                                    task.cpu_demand_gcycles, cfg.capacity_ghz)
            p = lg.mining_success_probability(
                lg.relative_hash_power(self.space.hash_of(l), cfg.total_hash), self.mining.eta, prop)
            total += w.w_reward * lg.expected_reward(self.mining.reward, p) + w.w_revenue * phi - w.w_latency * lat
        return total

    def step(self, action: JointAction) -> tuple[SystemState, TimeslotOutcome]:
        cfg = self.config
        check_action(self.space, action)
        M = cfg.num_servers
        revenues, latencies, skipped = [0.0] * M, [0.0] * M, [False] * M

        # (a) trading, (b) computation and reputation
        for m, u in enumerate(action.ues):
            task = self.tasks[u]
            server = self.servers[m]
            contract = self.ledger.creation_trade(self.ue_wallets[u], task.cpu_demand_gcycles, cfg.price_unit)
            try:
                tx = self.ledger.trading(contract, server.wallet)
            except lg.InsufficientBalance:
                skipped[m] = True
                continue
            revenues[m] = tx.amount
            latencies[m] = execution_latency(True, task.data_size_mb * cfg.latency_scale,
                                             task.cpu_demand_gcycles, server.compute_capacity_ghz)
            self.reputation.record(m, task.deadline_s, latencies[m])

        # (c) mining
        prop = lg.propagation_time(self.mining.block_size_kb, self.mining.kappa)
        hashes, probs, mining = [], [], []
        for m, level in enumerate(action.levels):
            p_m = self.space.hash_of(level)
            self.servers[m].hash_power_mhs = p_m
            prob = lg.mining_success_probability(lg.relative_hash_power(p_m, cfg.total_hash), self.mining.eta, prop)
            hashes.append(p_m)
            probs.append(prob)
            mining.append(lg.expected_reward(self.mining.reward, prob))
        winner = lg.sample_winner(probs, self.win_rng)

        # (d) block
        if winner is not None:
            self.ledger.mint(self.servers[winner].wallet, self.mining.reward)
        self.ledger.seal_block(winner)

        # (e) outcome
        outcome = TimeslotOutcome(self.t, list(action.ues), hashes, revenues, latencies,
                                  mining, probs, winner, skipped)
        outcome.total_reward = reward(outcome, cfg.reward_weights)

        # (f) next state
        self.t += 1
        self.tasks = sample_tasks(self.task_rng, cfg)
        self.state = self._observe()
        return self.state, outcome


TRACE_FIELDS = ["episode", "timeslot", "server", "ue", "hash_mhs", "revenue_tokens", "latency_s",
                "expected_mining_reward", "success_prob", "winner", "skipped", "total_reward"]


def trace_rows(outcome: TimeslotOutcome, episode: int = 0) -> list[dict]:
    rows = []
    for m, u in enumerate(outcome.served_ues):
        rows.append({
            "episode": episode,
            "timeslot": outcome.timeslot,
            "server": m,
            "ue": u,
            "hash_mhs": outcome.hash_mhs[m],
            "revenue_tokens": repr(outcome.revenues[m]),
            "latency_s": repr(outcome.latencies[m]),
            "expected_mining_reward": repr(outcome.mining_rewards[m]),
            "success_prob": repr(outcome.success_probs[m]),
            "winner": "" if outcome.winner is None else outcome.winner,
            "skipped": int(outcome.skipped[m]),
            "total_reward": repr(outcome.total_reward),
        })
    return rows


def append_trace(path, outcomes: Sequence[TimeslotOutcome], episode: int = 0) -> None:
    """Append per-(timeslot, server) rows, writing the header for a new file."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_FIELDS)
        if new:
            writer.writeheader()
        for oc in outcomes:
            writer.writerows(trace_rows(oc, episode))


def replay(config: EnvConfig, seed: int, actions: Sequence[JointAction]) -> list[TimeslotOutcome]:
    """Re-run a recorded action sequence from a fresh environment."""
    env = MecEnv(config, seed=seed)
    out = []
    for act in actions:
        if env.done:
            env.reset()
        _, oc = env.step(act)
        out.append(oc)
    return out
