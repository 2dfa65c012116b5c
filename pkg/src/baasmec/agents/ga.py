"""Genetic-algorithm baseline: myopic search over one slot's joint action."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .. import kernels
from ..env import SlotProblem
from ..mdp import JointAction


@dataclass(frozen=True)
class GaParams:
    population: int = 50
    generations: int = 40
    tournament: int = 3
    crossover_prob: float = 0.8
    mutation_prob: float = 0.05
    elites: int = 1


def score(problem: SlotProblem, ues: np.ndarray, levels: np.ndarray) -> np.ndarray:
    w = problem.weights
    return kernels.score_population(ues, levels, problem.demands, problem.sizes, problem.hash_levels,
                                    problem.capacity_ghz, problem.price_unit, problem.total_hash,
                                    problem.mining_factor, w.w_reward, w.w_revenue, w.w_latency)


def _pin(ues, levels, fixed_ues, fixed_level):
    if fixed_ues is not None:
        ues[:] = np.asarray(fixed_ues, dtype=np.int64)
    if fixed_level is not None:
        levels[:] = fixed_level


def ga_optimize(problem: SlotProblem, params: GaParams = GaParams(),
                rng: Optional[np.random.Generator] = None,
                fixed_ues: Optional[Sequence[int]] = None,
                fixed_level: Optional[int] = None) -> JointAction:
    """Best feasible joint action found for the current slot.

    Genes are per-server (UE, hash level) pairs.  Tournament selection,
    one-point crossover between servers and per-gene resets, with a repair
    pass after every variation.  ``fixed_ues``/``fixed_level`` pin parts of
    the genome for the ablation modes.
    """
    rng = rng if rng is not None else np.random.default_rng()
    U = problem.demands.size
    M = problem.num_servers
    L = problem.hash_levels.size
    P = params.population

    def repair(u, l):
        # pinned UEs are distinct, so repair only ever lowers pinned levels
        _pin(u, l, fixed_ues, fixed_level)
        kernels.repair_population(u, l, U, problem.hash_levels, problem.total_hash)

    ues = rng.integers(0, U, size=(P, M), dtype=np.int64)
    levels = rng.integers(0, L, size=(P, M), dtype=np.int64)
    repair(ues, levels)
    fit = score(problem, ues, levels)
    best = int(np.argmax(fit))
    best_u, best_l, best_f = ues[best].copy(), levels[best].copy(), fit[best]

    for _ in range(params.generations):
        contenders = rng.integers(0, P, size=(P, params.tournament))
        winners = contenders[np.arange(P), np.argmax(fit[contenders], axis=1)]
        cu, cl = ues[winners].copy(), levels[winners].copy()
        if M > 1:
            for i in range(0, P - 1, 2):
                if rng.random() < params.crossover_prob:
                    cut = rng.integers(1, M)
                    cu[[i, i + 1], cut:] = cu[[i + 1, i], cut:]
                    cl[[i, i + 1], cut:] = cl[[i + 1, i], cut:]
        flip_u = rng.random((P, M)) < params.mutation_prob
        flip_l = rng.random((P, M)) < params.mutation_prob
        cu[flip_u] = rng.integers(0, U, size=int(flip_u.sum()))
        cl[flip_l] = rng.integers(0, L, size=int(flip_l.sum()))
        repair(cu, cl)
        cfit = score(problem, cu, cl)
        # elitism: carry the best so far into the next generation
        order = np.argsort(cfit, kind="stable")
        for k in range(min(params.elites, P)):
            slot = order[k]
            cu[slot], cl[slot], cfit[slot] = best_u, best_l, best_f
        ues, levels, fit = cu, cl, cfit
        top = int(np.argmax(fit))
        if fit[top] > best_f:
            best_u, best_l, best_f = ues[top].copy(), levels[top].copy(), fit[top]

    return JointAction(tuple(best_u), tuple(best_l))
