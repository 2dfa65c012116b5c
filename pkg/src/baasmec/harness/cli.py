"""Command-line entry point: ``baasmec <subcommand> [options]``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from .. import ledger as lg
from ..env import append_trace
from ..mdp import InfeasibleAction, write_action_trace
from ..nn import TrainingDiverged
from . import experiments as ex
from .config import PAPER_SCHEMES, SCHEMES, ConfigError, ExperimentConfig, load_config
from .report import write_csv, write_plot_script
from .runner import DqnScheme, InvariantViolation, evaluate, run_training

log = logging.getLogger("baasmec")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    if args.scheme is not None:
        cfg = replace(cfg, scheme=args.scheme)
    if args.timeslots is not None:
        cfg = replace(cfg, timeslots=args.timeslots)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _schemes(args, cfg: ExperimentConfig) -> list[str]:
    if args.schemes:
        names = [s.strip() for s in args.schemes.split(",") if s.strip()]
        bad = [s for s in names if s not in SCHEMES]
        if bad:
            raise ConfigError(f"unknown schemes: {', '.join(bad)}")
        return names
    if args.scheme is not None:
        return [cfg.scheme]
    return list(PAPER_SCHEMES)


def cmd_train(args, cfg: ExperimentConfig) -> None:
    out = cfg.out_dir
    series, metrics = [], []
    for seed in cfg.seeds:
        log.info("training %s seed %d for %d slots", cfg.scheme, seed, cfg.timeslots)
        tr = run_training(cfg, seed)
        series += [{"scheme": cfg.scheme, "seed": seed, "timeslot": t, "utility": u, "latency_s": lat}
                   for t, (u, lat) in enumerate(zip(tr.utilities, tr.latencies))]
        actions, outcomes, envs = [], [], []

        def record(env, action, outcome):
            actions.append(action)
            outcomes.append(outcome)
            envs[:] = [env]

        ev = evaluate(tr.scheme, cfg, seed, callback=record if args.trace else None)
        metrics.append(ex.MetricsRow(cfg.scheme, seed, float(cfg.timeslots), ev.total_utility,
                                     ev.mean_utility, ev.ecl, tr.art_s + ev.decision_s).as_dict())
        if args.trace:
            stem = os.path.join(out, f"{cfg.scheme}_seed{seed}")
            os.makedirs(out, exist_ok=True)
            trace_path = stem + "_trace.csv"
            if os.path.exists(trace_path):
                os.remove(trace_path)
            append_trace(trace_path, outcomes)
            write_action_trace(stem + "_actions.csv", actions)
            with open(stem + "_chain.jsonl", "w", encoding="utf-8") as fh:
                fh.write(lg.export_chain(envs[0].ledger.chain))
            if isinstance(tr.scheme, DqnScheme):
                tr.scheme.agent.save(stem + ".ckpt")
    h = cfg.digest()
    path = write_csv(os.path.join(out, f"train_{cfg.scheme}.csv"),
                     ["scheme", "seed", "timeslot", "utility", "latency_s"], series, "train", h)
    write_csv(os.path.join(out, f"eval_{cfg.scheme}.csv"), ex.METRIC_FIELDS, metrics, "train", h)
    if args.plot:
        write_plot_script(path, "timeslot", "utility", group="seed", ylabel="total system utility")
    print(path)


def _sweep(args, cfg: ExperimentConfig, name: str, rows) -> None:
    h = cfg.digest()
    path = write_csv(os.path.join(cfg.out_dir, f"{name}.csv"), ex.METRIC_FIELDS,
                     [r.as_dict() for r in rows], name, h)
    write_csv(os.path.join(cfg.out_dir, f"{name}_summary.csv"),
              ["scheme", "x", "seeds", "avg_utility", "ecl_s", "art_s"], ex.summarize(rows), name, h)
    if args.plot:
        write_plot_script(path, "x", "avg_utility", ylabel="average system utility")
    print(path)


def cmd_sweep_ues(args, cfg):
    values = [int(v) for v in _floats(args.values or "5,10,15,20,25,30")]
    _sweep(args, cfg, "sweep_ues", ex.sweep_ue_counts(cfg, values, _schemes(args, cfg)))


def cmd_sweep_demand(args, cfg):
    values = _floats(args.values or "0.6,0.8,1.0,1.2,1.4,1.6")
    _sweep(args, cfg, "sweep_demand", ex.sweep_demand(cfg, values, _schemes(args, cfg)))


def cmd_sweep_blocksize(args, cfg):
    values = _floats(args.values or "1,2,4,6,8,10")
    _sweep(args, cfg, "sweep_blocksize", ex.sweep_block_size(cfg, values, _schemes(args, cfg)))


def cmd_bench(args, cfg):
    values = [int(v) for v in _floats(args.values)] if args.values else None
    _sweep(args, cfg, "bench", ex.measure_ecl_art(cfg, values, _schemes(args, cfg)))


def cmd_contract_cost(args, cfg):
    schedule = lg.GasSchedule()
    rows = ex.contract_cost_report(schedule, args.users)
    path = write_csv(os.path.join(cfg.out_dir, "contract_cost.csv"), ["function", "gas", "ether", "usd"],
                     rows, "contract-cost", cfg.digest())
    for r in rows:
        print(f"{r['function']:<18} {r['gas']:>12} {r['ether']:>10} {r['usd']:>10}")
    print(path)


COMMANDS = {
    "train": (cmd_train, "train one scheme and log per-slot utility"),
    "sweep-ues": (cmd_sweep_ues, "average utility versus number of UEs"),
    "sweep-demand": (cmd_sweep_demand, "average utility versus per-UE service demand"),
    "sweep-blocksize": (cmd_sweep_blocksize, "average utility versus block size, with ablations"),
    "bench": (cmd_bench, "edge computation latency (ECL) and algorithm running time (ART)"),
    "contract-cost": (cmd_contract_cost, "gas, ether and USD cost of the trading contract"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="baasmec", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="scenario file (key = value per line)")
        p.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
        p.add_argument("--out", help="output directory")
        p.add_argument("--scheme", choices=SCHEMES, help="scheme to run")
        p.add_argument("--schemes", help="comma-separated schemes for sweeps")
        p.add_argument("--timeslots", type=int, help="training timeslots per run")
        p.add_argument("--values", help="comma-separated sweep values")
        p.add_argument("--users", type=int, default=5, help="users sharing the contract cost")
        p.add_argument("--plot", action="store_true", help="also emit a matplotlib script")
        p.add_argument("--trace", action="store_true",
                       help="write evaluation traces, action traces, chain export and checkpoints")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command][0](args, cfg)
    except (ConfigError, InfeasibleAction, InvariantViolation, TrainingDiverged,
            lg.LedgerError, ValueError) as exc:
        print(f"baasmec {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
