"""Experiment configuration and the key-value scenario file format.

A scenario file holds one ``key = value`` pair per line; ``#`` starts a
comment.  Keys are the field names of :class:`~baasmec.env.EnvConfig` and
:class:`ExperimentConfig`.  Tuples are comma separated, e.g.::

    num_ues = 6
    num_servers = 3
    hash_levels = 0, 20, 40, 60, 80, 100
    reward_weights = 1, 1, 1
    scheme = double_dqn
    seeds = 0, 1, 2
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, replace
from typing import Optional

from ..agents.ga import GaParams
from ..env import EnvConfig
from ..mdp import RewardWeights

SCHEMES = ("double_dqn", "classic_dqn", "tabular_q", "ga", "random", "min_latency")
PAPER_SCHEMES = ("double_dqn", "classic_dqn", "tabular_q", "ga")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    scheme: str = "double_dqn"
    timeslots: int = 2000
    seeds: tuple = (0, 1, 2)
    disable_resource_allocation: bool = False
    disable_user_selection: bool = False
    out_dir: str = "results"
    eval_rollouts: int = 2
    warmup_transitions: int = 20_000
    center_rate: float = 0.0
    lr: float = 0.01
    gamma: float = 0.85
    batch_size: int = 128
    buffer_capacity: int = 100_000
    sync_period: int = 100
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5
    output: str = "linear"
    tabular_alpha: float = 0.1
    tabular_bins: int = 8
    ga_population: int = 50
    ga_generations: int = 40
    ga_tournament: int = 3
    ga_crossover: float = 0.8
    ga_mutation: float = 0.05

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {', '.join(SCHEMES)}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.timeslots < 0:
            raise ConfigError("timeslots must be non-negative")
        if not 0.0 <= self.center_rate <= 1.0:
            raise ConfigError("center_rate must lie in [0, 1]")
        if self.output not in ("linear", "sigmoid"):
            raise ConfigError("output must be linear or sigmoid")

    @property
    def episodes(self) -> int:
        h = self.env.horizon
        return -(-self.timeslots // h)

    def ga_params(self) -> GaParams:
        return GaParams(self.ga_population, self.ga_generations, self.ga_tournament,
                        self.ga_crossover, self.ga_mutation)

    def with_(self, **kw) -> "ExperimentConfig":
        env_keys = {f.name for f in dataclasses.fields(EnvConfig)}
        env_kw = {k: v for k, v in kw.items() if k in env_keys}
        exp_kw = {k: v for k, v in kw.items() if k not in env_keys}
        cfg = self
        if env_kw:
            cfg = replace(cfg, env=replace(cfg.env, **env_kw))
        return replace(cfg, **exp_kw) if exp_kw else cfg

    def items(self) -> list[tuple[str, object]]:
        out = []
        for f in dataclasses.fields(EnvConfig):
            out.append((f.name, getattr(self.env, f.name)))
        for f in dataclasses.fields(self):
            if f.name != "env":
                out.append((f.name, getattr(self, f.name)))
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {format_value(v)}\n" for k, v in self.items())

    def digest(self) -> str:
        """Hash of everything that affects results; the output directory does not."""
        text = "".join(f"{k} = {format_value(v)}\n" for k, v in self.items() if k != "out_dir")
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def desk_config(**kw) -> ExperimentConfig:
    """Desk-scale defaults: M=3, U=6, six hash levels, 2000 slots, 3 seeds."""
    return ExperimentConfig().with_(**kw)


def format_value(v) -> str:
    if isinstance(v, RewardWeights):
        return f"{v.w_reward!r}, {v.w_revenue!r}, {v.w_latency!r}"
    if isinstance(v, (tuple, list)):
        return ", ".join(format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return "none"
    return str(v)


def _coerce(name: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, RewardWeights) or name == "reward_weights":
            parts = [float(x) for x in raw.split(",")]
            if len(parts) != 3:
                raise ValueError("need three weights")
            return RewardWeights(*parts)
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw}")
        if isinstance(default, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if name == "seeds":
                return tuple(int(x) for x in items)
            return tuple(float(x) for x in items)
        if name == "reputation_window":
            return None if raw.lower() in ("", "none") else int(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r} ({exc})") from None


def parse_config(text: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    defaults = dict(base.items())
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        updates[key] = _coerce(key, raw, defaults[key])
    try:
        return base.with_(**updates)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)
