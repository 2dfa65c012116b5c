"""Deep Q-learning agents: double DQN (the proposed scheme) and classic DQN."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .. import kernels
from ..nn import AdamState, DenseNet, TrainingDiverged, adam_step, flatten_grads, load_params, mse_loss, save_params
from .replay import Experience, ReplayBuffer


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear decay from ``start`` to ``end`` over ``decay_steps`` steps, then flat."""

    start: float = 1.0
    end: float = 0.05
    decay_steps: int = 1000

    def __post_init__(self):
        if not (0.0 <= self.end <= self.start <= 1.0):
            raise ValueError("need 0 <= end <= start <= 1")

    def value(self, step: int) -> float:
        if self.decay_steps <= 0:
            return self.end
        frac = min(max(step, 0) / self.decay_steps, 1.0)
        return self.start + (self.end - self.start) * frac


def masked_argmax_rows(q: np.ndarray, masks: np.ndarray) -> np.ndarray:
    # argmax returns the first maximum, i.e. lowest index on ties
    return np.argmax(np.where(masks, q, -np.inf), axis=1)


def _as_batch(rewards, next_states, terminals, next_masks):
    r = np.atleast_1d(np.asarray(rewards, dtype=np.float64))
    s2 = np.atleast_2d(np.asarray(next_states, dtype=np.float64))
    done = np.atleast_1d(np.asarray(terminals, dtype=bool))
    masks = np.atleast_2d(np.asarray(next_masks, dtype=bool))
    return r, s2, done, masks


def double_dqn_target(rewards, next_states, terminals, online: DenseNet, target: DenseNet,
                      gamma: float, next_masks, probe: Optional[Callable] = None) -> np.ndarray:
    """y = r + gamma * Q_target(s', argmax_a Q_online(s', a)) over feasible a.

    ``probe(next_states, next_masks, evaluated_actions)`` is called with the
    actions at which the target network is read, for instrumentation.
    """
    r, s2, done, masks = _as_batch(rewards, next_states, terminals, next_masks)
    a_star = masked_argmax_rows(online.forward_train(s2)[0], masks)
    q_next = target.forward_train(s2)[0]
    if probe is not None:
        probe(s2, masks, a_star)
    boot = q_next[np.arange(len(r)), a_star]
    return np.where(done, r, r + gamma * boot)


def classic_dqn_target(rewards, next_states, terminals, target: DenseNet, gamma: float,
                       next_masks) -> np.ndarray:
    """y = r + gamma * max_a Q_target(s', a) over feasible a."""
    r, s2, done, masks = _as_batch(rewards, next_states, terminals, next_masks)
    q_next = target.forward_train(s2)[0]
    a_star = masked_argmax_rows(q_next, masks)
    boot = q_next[np.arange(len(r)), a_star]
    return np.where(done, r, r + gamma * boot)


class DqnAgent:
    """Q-network agent over masked discrete sub-actions.

    ``double=True`` selects next actions with the online network and
    evaluates them with the target network; ``double=False`` is the classic
    max-over-target update.  The target network is hard-synced every
    ``sync_period`` training steps.
    """

    kind = "dqn"

    def __init__(self, input_dim: int, n_actions: int, *, double: bool = True, gamma: float = 0.85,
                 lr: float = 0.01, batch_size: int = 128, sync_period: int = 100,
                 buffer_capacity: int = 100_000, output: str = "linear",
                 reward_bounds: Optional[tuple] = None, center_rate: float = 0.0, seed: int = 0):
        if not 0.0 < gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if output == "sigmoid" and reward_bounds is None:
            raise ValueError("a logistic head needs reward_bounds to normalise rewards")
        init_ss, buf_ss, act_ss = np.random.SeedSequence(seed).spawn(3)
        self.double = double
        self.gamma = gamma
        self.batch_size = batch_size
        self.sync_period = sync_period
        self.reward_bounds = reward_bounds
        # reward centering only applies to the unbounded linear head
        self.center_rate = center_rate if reward_bounds is None else 0.0
        self.online = DenseNet.q_network(input_dim, n_actions, output=output,
                                         rng=np.random.default_rng(init_ss))
        self.target = self.online.copy()
        self.adam = AdamState(lr=lr)
        self.buffer = ReplayBuffer(buffer_capacity, input_dim, n_actions, np.random.default_rng(buf_ss))
        self.rng = np.random.default_rng(act_ss)
        self.train_steps = 0
        self.reward_offset = 0.0
        self.probe: Optional[Callable] = None

    @property
    def n_actions(self) -> int:
        return self.online.sizes[-1]

    def scale_reward(self, r: float) -> float:
        """Map a raw reward into the range the output head can represent."""
        if self.reward_bounds is None:
            return r
        lo, hi = self.reward_bounds
        # keeps bootstrapped targets inside [0, 1] for the logistic head
        return (1.0 - self.gamma) * float(np.clip((r - lo) / (hi - lo), 0.0, 1.0))

    def q_values(self, x: np.ndarray) -> np.ndarray:
        return self.online.forward(x)

    def select_action(self, x: np.ndarray, mask: np.ndarray, epsilon: float,
                      rng: Optional[np.random.Generator] = None) -> int:
        mask = np.asarray(mask, dtype=bool)
        feasible = np.flatnonzero(mask)
        if feasible.size == 0:
            raise ValueError("no feasible sub-action")
        rng = rng if rng is not None else self.rng
        if feasible.size == 1:
            return int(feasible[0])
        if epsilon > 0 and rng.random() < epsilon:
            return int(feasible[rng.integers(feasible.size)])
        return int(kernels.masked_argmax(self.q_values(x), mask))

    def remember(self, exp: Experience) -> None:
        r = self.scale_reward(exp.reward)
        if self.center_rate > 0:
            # running mean of rewards; the first one seeds it
            if self.buffer.added == 0:
                self.reward_offset = r
            else:
                self.reward_offset += self.center_rate * (r - self.reward_offset)
        self.buffer.add(Experience(exp.state, exp.action, r, exp.next_state, exp.terminal, exp.next_mask))

    def targets(self, batch: dict) -> np.ndarray:
        """Bootstrap targets for a minibatch, on centred rewards.

        Subtracting the running reward mean shifts every Q-value by about
        ``offset / (1 - gamma)`` and leaves the greedy policy unchanged, but
        spares the network from fitting a large common value that would
        drown out the differences between actions.
        """
        rewards = batch["rewards"] - self.reward_offset
        if self.double:
            return double_dqn_target(rewards, batch["next_states"], batch["terminals"],
                                     self.online, self.target, self.gamma, batch["next_masks"],
                                     probe=self.probe)
        return classic_dqn_target(rewards, batch["next_states"], batch["terminals"],
                                  self.target, self.gamma, batch["next_masks"])

    def train_on_batch(self, batch: dict) -> float:
        y = self.targets(batch)
        out, cache = self.online.forward_train(batch["states"])
        rows = np.arange(len(y))
        loss, g = mse_loss(out[rows, batch["actions"]], y)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"loss became {loss} at training step {self.train_steps}")
        dout = np.zeros_like(out)
        dout[rows, batch["actions"]] = g
        gW, gb = self.online.backward(cache, dout)
        adam_step(self.online, flatten_grads(gW, gb), self.adam)
        self.train_steps += 1
        if self.train_steps % self.sync_period == 0:
            self.sync_target()
        return loss

    def train_step(self) -> Optional[float]:
        """One minibatch update; ``None`` when the buffer holds too few samples."""
        if len(self.buffer) < self.batch_size:
            return None
        return self.train_on_batch(self.buffer.sample(self.batch_size))

    def sync_target(self) -> None:
        self.target.load_state(self.online)

    # -- checkpoints --------------------------------------------------------

    def save(self, path) -> None:
        meta = {"kind": "double_dqn" if self.double else "classic_dqn", "gamma": self.gamma,
                "train_steps": self.train_steps, "reward_offset": self.reward_offset,
                "adam_steps": self.adam.step_count,
                "sync_period": self.sync_period}
        with open(path, "w", encoding="utf-8") as fh:
            save_params(self.online, fh, meta)
            save_params(self.target, fh, {"role": "target"})

    def load(self, path) -> dict:
        with open(path, encoding="utf-8") as fh:
            online, meta = load_params(fh)
            target, _ = load_params(fh)
        self.online.load_state(online)
        self.target.load_state(target)
        self.gamma = float(meta["gamma"])
        self.train_steps = int(meta["train_steps"])
        self.reward_offset = float(meta.get("reward_offset", 0.0))
        return meta
