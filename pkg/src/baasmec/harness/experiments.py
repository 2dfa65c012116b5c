"""Parameter sweeps, the ECL/ART benchmark and the contract cost report."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from ..ledger import GasSchedule, gas_to_cost
from .config import PAPER_SCHEMES, ConfigError, ExperimentConfig
from .runner import evaluate, run_training

METRIC_FIELDS = ["scheme", "seed", "x", "total_utility", "avg_utility", "ecl_s", "art_s"]
TIMING_FIELDS = ("art_s",)


@dataclass
class MetricsRow:
    scheme: str
    seed: int
    x: float
    total_utility: float
    avg_utility: float
    ecl_s: float
    art_s: float

    def __post_init__(self):
        if not np.isfinite(self.total_utility) or not np.isfinite(self.avg_utility):
            raise ValueError(f"non-finite utility for {self.scheme} seed {self.seed}")
        if self.ecl_s < 0 or self.art_s < 0:
            raise ValueError("ECL and ART must be non-negative")

    def as_dict(self) -> dict:
        return asdict(self)


def train_and_evaluate(config: ExperimentConfig, seed: int, scheme: str, x: float = 0.0,
                       label: Optional[str] = None) -> MetricsRow:
    """Train ``scheme`` for ``config.timeslots`` slots, then score it greedily.

    ART counts decision and learning time in both phases; environment
    stepping is excluded so schemes are compared on their own cost.
    """
    tr = run_training(config, seed, scheme)
    ev = evaluate(tr.scheme, config, seed)
    return MetricsRow(label or scheme, seed, x, ev.total_utility, ev.mean_utility, ev.ecl,
                      tr.art_s + ev.decision_s)


def _grid(config: ExperimentConfig, values: Iterable, schemes: Sequence[str], apply,
          variants: Sequence[tuple[str, str, dict]] = ()) -> list[MetricsRow]:
    rows = []
    for v in values:
        cfg_v = apply(config, v)
        for scheme in schemes:
            for seed in config.seeds:
                rows.append(train_and_evaluate(cfg_v, seed, scheme, float(v)))
        for label, scheme, overrides in variants:
            cfg_a = cfg_v.with_(**overrides)
            for seed in config.seeds:
                rows.append(train_and_evaluate(cfg_a, seed, scheme, float(v), label))
    return rows


def sweep_ue_counts(config: ExperimentConfig, ue_counts: Sequence[int],
                    schemes: Sequence[str] = PAPER_SCHEMES) -> list[MetricsRow]:
    M = config.env.num_servers
    bad = [u for u in ue_counts if u < M]
    if bad:
        raise ConfigError(f"UE counts {bad} are below the server count {M}")
    return _grid(config, ue_counts, schemes, lambda c, u: c.with_(num_ues=int(u)))


def sweep_demand(config: ExperimentConfig, demands: Sequence[float],
                 schemes: Sequence[str] = PAPER_SCHEMES) -> list[MetricsRow]:
    """Every UE requests exactly ``demand`` Gcycles in each sweep cell."""
    if any(d <= 0 for d in demands):
        raise ConfigError("demands must be positive")
    return _grid(config, demands, schemes, lambda c, d: c.with_(demand_range=(float(d), float(d))))


ABLATIONS = (
    ("no_resource_allocation", {"disable_resource_allocation": True}),
    ("no_user_selection", {"disable_user_selection": True}),
)


def sweep_block_size(config: ExperimentConfig, sizes_kb: Sequence[float],
                     schemes: Sequence[str] = PAPER_SCHEMES,
                     ablation_schemes: Sequence[str] = ("double_dqn", "classic_dqn")) -> list[MetricsRow]:
    if any(b < 0 for b in sizes_kb):
        raise ConfigError("block sizes must be non-negative")
    variants = [(f"{s}/{name}", s, kw) for s in ablation_schemes for name, kw in ABLATIONS]
    return _grid(config, sizes_kb, schemes, lambda c, b: c.with_(block_size_kb=float(b)), variants)


def measure_ecl_art(config: ExperimentConfig, ue_counts: Optional[Sequence[int]] = None,
                    schemes: Sequence[str] = PAPER_SCHEMES) -> list[MetricsRow]:
    """Table-II-style rows: ECL and ART per scheme and UE count."""
    if config.eval_rollouts < 1:
        raise ConfigError("need at least one evaluation rollout")
    ue_counts = ue_counts or [config.env.num_ues]
    return sweep_ue_counts(config, ue_counts, schemes)


def summarize(rows: Sequence[MetricsRow]) -> list[dict]:
    """Seed-averaged metrics per (scheme, x), in first-seen order."""
    groups: dict[tuple, list[MetricsRow]] = {}
    for r in rows:
        groups.setdefault((r.scheme, r.x), []).append(r)
    out = []
    for (scheme, x), rs in groups.items():
        out.append({
            "scheme": scheme,
            "x": x,
            "seeds": len(rs),
            "avg_utility": float(np.mean([r.avg_utility for r in rs])),
            "ecl_s": float(np.mean([r.ecl_s for r in rs])),
            "art_s": float(np.mean([r.art_s for r in rs])),
        })
    return out


def contract_cost_report(schedule: GasSchedule = GasSchedule(), n_users: int = 5) -> list[dict]:
    """Gas, ether and USD per contract function, the total and the per-user share."""
    if n_users < 1:
        raise ValueError("need at least one user")
    rows = []
    for name, gas, ether_decimals in (("CreationTrade()", schedule.creation_trade_gas, 4),
                                      ("Trading()", schedule.trading_gas, 5)):
        ether, usd = gas_to_cost(gas, schedule, ether_decimals=ether_decimals)
        rows.append({"function": name, "gas": gas, "ether": ether, "usd": usd})
    total_gas = schedule.creation_trade_gas + schedule.trading_gas
    ether, usd = gas_to_cost(total_gas, schedule)
    rows.append({"function": "Total", "gas": total_gas, "ether": ether, "usd": usd})
    rows.append({"function": f"PerUser(n={n_users})", "gas": total_gas / n_users,
                 "ether": ether / n_users, "usd": usd / n_users})
    return rows
