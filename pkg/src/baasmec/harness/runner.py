"""Training and evaluation loops for every scheme.

Each timeslot is decided as M sequential per-server sub-decisions.  Learning
schemes see one transition per sub-decision; the reward of a sub-decision is
that server's share of the slot utility.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..agents.dqn import DqnAgent, EpsilonSchedule
from ..agents.ga import ga_optimize
from ..agents.replay import Experience
from ..agents.tabular import TabularQAgent
from ..env import MecEnv, TimeslotOutcome
from ..mdp import (ActionSpace, JointAction, SystemState, agent_input, encode_state, feasible_mask,
                   restrict_mask, server_utilities)
from .config import ExperimentConfig

log = logging.getLogger(__name__)

EVAL_SEED_OFFSET = 100_003
WARMUP_SEED_OFFSET = 7_919


class InvariantViolation(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# ablation restrictions


def pinned_ue(space: ActionSpace, slot: int, server: int) -> int:
    """Round-robin assignment used when user selection is disabled."""
    return (slot * space.num_servers + server) % space.num_ues


def pinned_level(space: ActionSpace, used_hash: float) -> int:
    """Median hash level, lowered if the remaining budget cannot cover it."""
    level = space.num_levels // 2
    while level > 0 and (used_hash + space.hash_of(level) > space.total_hash
                         or space.hash_of(level) >= space.total_hash):
        level -= 1
    return level


@dataclass
class Ablation:
    no_user_selection: bool = False
    no_resource_allocation: bool = False

    @property
    def label(self) -> str:
        if self.no_user_selection:
            return "no_user_selection"
        if self.no_resource_allocation:
            return "no_resource_allocation"
        return ""

    def mask(self, space: ActionSpace, slot: int, server: int, partial) -> np.ndarray:
        mask = feasible_mask(space, partial)
        used = sum(space.hash_of(l) for _, l in partial)
        ue = pinned_ue(space, slot, server) if self.no_user_selection else None
        level = pinned_level(space, used) if self.no_resource_allocation else None
        if ue is None and level is None:
            return mask
        return restrict_mask(mask, space, ue=ue, level=level)


# ---------------------------------------------------------------------------
# schemes


@dataclass
class SlotContext:
    inputs: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    state_bin: int = 0


class Scheme:
    name = "base"
    learns = False

    def __init__(self, config: ExperimentConfig, space: ActionSpace, seed: int):
        self.config = config
        self.space = space
        self.ablation = Ablation(config.disable_user_selection, config.disable_resource_allocation)
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0FFEE]))
        self.epsilon = 0.0

    def act(self, env: MecEnv, slot: int, greedy: bool) -> tuple[JointAction, SlotContext]:
        raise NotImplementedError

    def learn(self, ctx: SlotContext, outcome: TimeslotOutcome, next_state: SystemState,
              next_slot: int, terminal: bool) -> Optional[float]:
        return None

    def _sequential(self, slot: int, choose) -> tuple[JointAction, SlotContext]:
        ctx = SlotContext()
        partial = []
        used = 0.0
        for m in range(self.space.num_servers):
            mask = self.ablation.mask(self.space, slot, m, partial)
            a = choose(m, used, mask, ctx)
            ctx.masks.append(mask)
            ctx.actions.append(a)
            ue, level = self.space.decode_sub(a)
            partial.append((ue, level))
            used += self.space.hash_of(level)
        return JointAction.from_pairs(partial), ctx


class RandomScheme(Scheme):
    name = "random"

    def act(self, env, slot, greedy):
        def choose(m, used, mask, ctx):
            feasible = np.flatnonzero(mask)
            return int(feasible[self.rng.integers(feasible.size)])
        return self._sequential(slot, choose)


class MinLatencyScheme(Scheme):
    """Oracle baseline: fastest remaining task per server, largest feasible hash level."""

    name = "min_latency"

    def act(self, env, slot, greedy):
        work = np.array([t.data_size_mb * t.cpu_demand_gcycles for t in env.tasks])
        levels = self.space.level_array()

        def choose(m, used, mask, ctx):
            grid = mask.reshape(self.space.num_ues, self.space.num_levels)
            ues = np.flatnonzero(grid.any(axis=1))
            ue = int(ues[np.argmin(work[ues])])
            level = int(np.flatnonzero(grid[ue])[np.argmax(levels[grid[ue]])])
            return self.space.encode_sub(ue, level)
        return self._sequential(slot, choose)


class GaScheme(Scheme):
    name = "ga"

    def act(self, env, slot, greedy):
        space = self.space
        fixed_ues = None
        fixed_level = None
        if self.ablation.no_user_selection:
            fixed_ues = [pinned_ue(space, slot, m) for m in range(space.num_servers)]
        if self.ablation.no_resource_allocation:
            fixed_level = space.num_levels // 2
        action = ga_optimize(env.slot_problem(), self.config.ga_params(), self.rng,
                             fixed_ues=fixed_ues, fixed_level=fixed_level)
        return action, SlotContext()


class DqnScheme(Scheme):
    learns = True

    def __init__(self, config, space, seed, double: bool):
        super().__init__(config, space, seed)
        self.name = "double_dqn" if double else "classic_dqn"
        self.agent = DqnAgent(space.input_dim, space.n_sub, double=double, gamma=config.gamma,
                              lr=config.lr, batch_size=config.batch_size, sync_period=config.sync_period,
                              buffer_capacity=config.buffer_capacity, output=config.output,
                              reward_bounds=reward_bounds(config) if config.output == "sigmoid" else None,
                              center_rate=config.center_rate, seed=seed)
        self._enc = None

    def _input(self, state: SystemState, m: int, used: float) -> np.ndarray:
        return agent_input(encode_state(state, self.space), m, used, self.space)

    def act(self, env, slot, greedy):
        enc = encode_state(env.state, self.space)
        eps = 0.0 if greedy else self.epsilon

        def choose(m, used, mask, ctx):
            x = agent_input(enc, m, used, self.space)
            ctx.inputs.append(x)
            return self.agent.select_action(x, mask, eps, self.rng)
        return self._sequential(slot, choose)

    def store(self, ctx, outcome, next_state, next_slot, terminal) -> None:
        rewards = server_utilities(outcome, self.config.env.reward_weights)
        M = self.space.num_servers
        next_x = self._input(next_state, 0, 0.0)
        next_mask = self.ablation.mask(self.space, next_slot, 0, [])
        for m in range(M):
            if m + 1 < M:
                s2, mk, done = ctx.inputs[m + 1], ctx.masks[m + 1], False
            else:
                s2, mk, done = next_x, next_mask, terminal
            self.agent.remember(Experience(ctx.inputs[m], ctx.actions[m], float(rewards[m]), s2, done, mk))

    def learn(self, ctx, outcome, next_state, next_slot, terminal):
        self.store(ctx, outcome, next_state, next_slot, terminal)
        loss = None
        for _ in range(self.space.num_servers):
            loss = self.agent.train_step()
        return loss


class TabularScheme(Scheme):
    name = "tabular_q"
    learns = True

    def __init__(self, config, space, seed):
        super().__init__(config, space, seed)
        self.agent = TabularQAgent(space, bins=config.tabular_bins, alpha=config.tabular_alpha,
                                   gamma=config.gamma, seed=seed)

    def act(self, env, slot, greedy):
        s_bin = self.agent.state_bin(env.state)
        eps = 0.0 if greedy else self.epsilon

        def choose(m, used, mask, ctx):
            return self.agent.select_action(s_bin, mask, eps, self.rng)
        action, ctx = self._sequential(slot, choose)
        ctx.state_bin = s_bin
        return action, ctx

    def learn(self, ctx, outcome, next_state, next_slot, terminal):
        rewards = server_utilities(outcome, self.config.env.reward_weights)
        M = self.space.num_servers
        next_bin = self.agent.state_bin(next_state)
        next_mask = self.ablation.mask(self.space, next_slot, 0, [])
        for m in range(M):
            if m + 1 < M:
                self.agent.update(ctx.state_bin, ctx.actions[m], float(rewards[m]), ctx.state_bin,
                                  ctx.masks[m + 1])
            else:
                self.agent.update(ctx.state_bin, ctx.actions[m], float(rewards[m]), next_bin,
                                  next_mask, terminal)
        return None


def reward_bounds(config: ExperimentConfig) -> tuple[float, float]:
    """Range of one server's utility, used to normalise rewards for a logistic head."""
    env = config.env
    w = env.reward_weights
    mining = env.first_miner_reward + env.reward_per_kb * env.block_size_kb
    top = mining * max(env.hash_levels) / env.total_hash
    lo = -w.w_latency * env.data_size_range[1] * env.latency_scale * env.demand_range[1] / env.capacity_ghz
    hi = w.w_reward * top + w.w_revenue * env.price_unit * env.demand_range[1]
    return lo, hi


def make_scheme(config: ExperimentConfig, seed: int, scheme: Optional[str] = None) -> Scheme:
    name = scheme or config.scheme
    space = config.env.action_space()
    if name == "double_dqn":
        return DqnScheme(config, space, seed, double=True)
    if name == "classic_dqn":
        return DqnScheme(config, space, seed, double=False)
    if name == "tabular_q":
        return TabularScheme(config, space, seed)
    if name == "ga":
        return GaScheme(config, space, seed)
    if name == "random":
        return RandomScheme(config, space, seed)
    if name == "min_latency":
        return MinLatencyScheme(config, space, seed)
    raise ValueError(f"unknown scheme {name!r}")


# ---------------------------------------------------------------------------
# loops


def check_env_invariants(env: MecEnv) -> None:
    if not env.ledger.verify():
        raise InvariantViolation("ledger chain failed verification")
    cfg = env.config
    expected = cfg.num_ues * cfg.initial_ue_balance + env.ledger.minted
    actual = env.ledger.total_balance()
    if not math.isclose(actual, expected, rel_tol=1e-9, abs_tol=1e-9):
        raise InvariantViolation(f"token conservation broken: {actual} != {expected}")


@dataclass
class TrainResult:
    scheme: Scheme
    utilities: list
    latencies: list
    losses: list
    art_s: float


def warm_up(scheme: Scheme, config: ExperimentConfig, seed: int) -> None:
    """Fill a DQN replay buffer with random-policy transitions."""
    if not isinstance(scheme, DqnScheme) or config.warmup_transitions <= 0:
        return
    env = MecEnv(config.env, seed=seed + WARMUP_SEED_OFFSET)
    rnd = RandomScheme(config, scheme.space, seed + WARMUP_SEED_OFFSET)
    M = scheme.space.num_servers
    slots = -(-config.warmup_transitions // M)
    for t in range(slots):
        action, ctx = rnd.act(env, t, greedy=False)
        ctx.inputs = []
        enc = encode_state(env.state, scheme.space)
        used = 0.0
        for m, (_, l) in enumerate(action.pairs()):
            ctx.inputs.append(agent_input(enc, m, used, scheme.space))
            used += scheme.space.hash_of(l)
        next_state, outcome = env.step(action)
        terminal = env.done
        scheme.store(ctx, outcome, next_state, t + 1, terminal)
        if terminal:
            env.reset()


def run_training(config: ExperimentConfig, seed: int, scheme: Optional[str] = None,
                 setup: Optional[Callable[[Scheme], None]] = None) -> TrainResult:
    """Run ``config.timeslots`` learning slots and log per-slot utility.

    ``setup(scheme)`` runs once before warm-up, e.g. to attach probes.
    """
    sch = make_scheme(config, seed, scheme)
    if setup is not None:
        setup(sch)
    warm_up(sch, config, seed)
    env = MecEnv(config.env, seed=seed)
    schedule = EpsilonSchedule(config.eps_start, config.eps_end,
                               int(config.eps_decay_fraction * config.timeslots))
    utilities, latencies, losses = [], [], []
    art = 0.0
    for t in range(config.timeslots):
        sch.epsilon = schedule.value(t)
        t0 = time.perf_counter()
        action, ctx = sch.act(env, t, greedy=False)
        art += time.perf_counter() - t0
        next_state, outcome = env.step(action)
        terminal = env.done
        if sch.learns:
            t0 = time.perf_counter()
            loss = sch.learn(ctx, outcome, next_state, t + 1, terminal)
            art += time.perf_counter() - t0
            if loss is not None:
                if not math.isfinite(loss):
                    raise InvariantViolation(f"non-finite loss at slot {t}")
                losses.append(loss)
        utilities.append(outcome.total_reward)
        latencies.append(float(np.sum(outcome.latencies)))
        if terminal:
            check_env_invariants(env)
            env.reset()
    check_env_invariants(env)
    return TrainResult(sch, utilities, latencies, losses, art)


@dataclass
class EvalResult:
    utilities: list
    rollout_latency: list
    decision_s: float

    @property
    def mean_utility(self) -> float:
        return float(np.mean(self.utilities)) if self.utilities else 0.0

    @property
    def total_utility(self) -> float:
        return float(np.sum(self.utilities))

    @property
    def ecl(self) -> float:
        return float(np.mean(self.rollout_latency))


def evaluate(sch: Scheme, config: ExperimentConfig, seed: int, rollouts: Optional[int] = None,
             callback=None) -> EvalResult:
    """Greedy rollouts on a held-out task stream shared by all schemes for ``seed``.

    ``callback(env, action, outcome)`` sees every evaluation step.
    """
    rollouts = config.eval_rollouts if rollouts is None else rollouts
    if rollouts < 1:
        raise ValueError("need at least one evaluation rollout")
    env = MecEnv(config.env, seed=seed + EVAL_SEED_OFFSET)
    utilities, rollout_latency = [], []
    spent = 0.0
    slot = 0
    for r in range(rollouts):
        if r:
            env.reset()
        total_lat = 0.0
        while not env.done:
            t0 = time.perf_counter()
            action, _ = sch.act(env, slot, greedy=True)
            spent += time.perf_counter() - t0
            _, outcome = env.step(action)
            if callback is not None:
                callback(env, action, outcome)
            utilities.append(outcome.total_reward)
            total_lat += float(np.sum(outcome.latencies))
            slot += 1
        check_env_invariants(env)
        rollout_latency.append(total_lat)
    return EvalResult(utilities, rollout_latency, spent)
