"""
Q-learning guided local search.

A tabular agent picks one of five perturbation strengths (fraction of jobs
re-placed) from a discretized description of the current solution. Rewards
mix the scalarized fitness change with a Pareto-dominance bonus; Q-values are
updated from discounted returns at the end of each episode.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .objectives import NormBounds, ObjectiveVector, WeightVector, dominates, scalarize

ACTION_FRACTIONS = (0.02, 0.05, 0.08, 0.10, 0.15)
N_ACTIONS = len(ACTION_FRACTIONS)

FITNESS_BINS = 10
TIME_BINS = 4
COUNT_BINS = 5


class EmptyTrajectory(ValueError):
    pass


class StateKey(NamedTuple):
    fitness_bin: int
    time_of_day_bin: int
    sla_bin: int
    carbon_bin: int
    edge_count_bin: int
    fog_count_bin: int
    cloud_count_bin: int
    jobs_bin: int


@dataclass
class SearchParams:
    alpha: float = 0.15
    gamma: float = 0.9
    epsilon0: float = 0.4
    epsilon_decay: float = 0.95
    epsilon_floor: float = 0.05
    episodes: int = 10
    steps_per_episode: int = 1
    global_decay: bool = False
    jobs_scale: int = 1100  # job count mapped to the top jobs_bin

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        for name in ("epsilon0", "epsilon_floor", "epsilon_decay"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.episodes < 0 or self.steps_per_episode < 1:
            raise ValueError("episodes >= 0 and steps_per_episode >= 1 required")


def _zero_row() -> np.ndarray:
    return np.zeros(N_ACTIONS)


class QTable:
    """State -> action-value vector; unseen states read as zeros."""

    def __init__(self):
        self._q: dict[StateKey, np.ndarray] = defaultdict(_zero_row)

    def row(self, s: StateKey) -> np.ndarray:
        return self._q[s]

    def get(self, s: StateKey, a: int) -> float:
        return float(self._q[s][a]) if s in self._q else 0.0

    def __len__(self) -> int:
        return len(self._q)

    def __contains__(self, s) -> bool:
        return s in self._q

    def items(self):
        return sorted(self._q.items())

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(StateKey._fields) + [f"q_a{k + 1}" for k in range(N_ACTIONS)])
            for s, row in self.items():
                w.writerow(list(s) + [repr(float(v)) for v in row])


@dataclass
class Trajectory:
    steps: list[tuple[StateKey, int, float]] = field(default_factory=list)

    def append(self, s: StateKey, a: int, r: float) -> None:
        self.steps.append((s, a, r))

    def __len__(self) -> int:
        return len(self.steps)


class EpsilonSchedule:
    """Multiplicative per-episode decay with a floor."""

    def __init__(self, params: SearchParams):
        self.value = params.epsilon0
        self._decay = params.epsilon_decay
        self._floor = params.epsilon_floor

    def step(self) -> None:
        self.value = max(self._floor, self.value * self._decay)


def _bin(x: float, n: int) -> int:
    return min(n - 1, max(0, math.floor(x * n)))


def encode_state(
    objectives: ObjectiveVector,
    fitness: float,
    epoch_time_s: float,
    layer_counts: Sequence[int],
    n_jobs: int,
    bounds: NormBounds,
    jobs_scale: int = 1100,
) -> StateKey:
    """Discretize a solution's context.

    Fitness and normalized objectives fall into 10 bins over [0, 1] (clamped,
    closed top edge); time of day into four 6-hour bins; per-layer job counts
    into 5 bins over [0, n_jobs]; the job count itself into 5 bins over
    [0, jobs_scale].
    """
    ns, nc = bounds.normalize(objectives)
    tod = (epoch_time_s % 86400.0) / 86400.0
    counts = [_bin(c / n_jobs, COUNT_BINS) if n_jobs else 0 for c in layer_counts]
    return StateKey(
        _bin(fitness, FITNESS_BINS),
        _bin(tod, TIME_BINS),
        _bin(ns, FITNESS_BINS),
        _bin(nc, FITNESS_BINS),
        *counts,
        _bin(n_jobs / jobs_scale, COUNT_BINS),
    )


def select_action(q: QTable, s: StateKey, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; greedy ties go to the lowest action index."""
    if rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(q.row(s))) if s in q else 0


def n_reassigned(fraction: float, n_jobs: int) -> int:
    return max(1, math.floor(fraction * n_jobs + 0.5))


def perturb(genes: np.ndarray, action: int, feasible: Sequence[np.ndarray], rng: np.random.Generator) -> np.ndarray:
    """Re-place ``max(1, round(fraction * n))`` distinct jobs on another feasible VM."""
    out = genes.copy()
    n = len(genes)
    if n == 0:
        return out
    k = min(n, n_reassigned(ACTION_FRACTIONS[action], n))
    for j in rng.choice(n, size=k, replace=False).tolist():
        f = feasible[j]
        if len(f) < 2:
            continue
        choice = int(f[rng.integers(len(f) - 1)])
        if choice == out[j]:
            choice = int(f[-1])  # skip the current VM
        out[j] = choice
    return out


def dominance_reward(obj_cur: ObjectiveVector, obj_new: ObjectiveVector) -> float:
    if dominates(obj_new, obj_cur):
        return 1.0
    if dominates(obj_cur, obj_new):
        return -0.5
    return 0.1


def reward(obj_cur: ObjectiveVector, obj_new: ObjectiveVector, fit_cur: float, fit_new: float) -> float:
    return 0.7 * math.tanh(fit_cur - fit_new) + 0.3 * dominance_reward(obj_cur, obj_new)


def update_qtable(q: QTable, traj: Trajectory, params: SearchParams, f_start: float, f_local_best: float) -> QTable:
    """Monte Carlo style update from discounted returns plus an episode improvement bonus."""
    if len(traj) == 0:
        raise EmptyTrajectory("cannot update from an empty trajectory")
    returns = [0.0] * len(traj)
    g = 0.0
    for t in range(len(traj) - 1, -1, -1):
        g = traj.steps[t][2] + params.gamma * g
        returns[t] = g
    bonus = math.tanh(f_start - f_local_best)
    for (s, a, _), g_t in zip(traj.steps, returns):
        row = q.row(s)
        row[a] += params.alpha * (g_t + bonus - row[a])
    return q


@dataclass
class SearchContext:
    """What local search needs from the epoch: evaluation, fitness and state features."""

    evaluate: Callable[[np.ndarray], ObjectiveVector]
    feasible: Sequence[np.ndarray]
    vm_layer: np.ndarray  # 0 edge, 1 fog, 2 cloud, per VM index
    bounds: NormBounds
    epoch_time_s: float
    jobs_scale: int = 1100
    evaluations: int = 0

    def fitness(self, obj: ObjectiveVector, w: WeightVector) -> float:
        return scalarize(obj, w, self.bounds)

    def state(self, genes: np.ndarray, obj: ObjectiveVector, fit: float) -> StateKey:
        counts = np.bincount(self.vm_layer[genes], minlength=3)
        return encode_state(obj, fit, self.epoch_time_s, counts.tolist(), len(genes), self.bounds, self.jobs_scale)

    def objectives(self, genes: np.ndarray) -> ObjectiveVector:
        self.evaluations += 1
        return self.evaluate(genes)


def local_search(
    genes: np.ndarray,
    w: WeightVector,
    q: QTable,
    params: SearchParams,
    ctx: SearchContext,
    rng: np.random.Generator,
    obj: ObjectiveVector | None = None,
    epsilon: EpsilonSchedule | None = None,
) -> tuple[np.ndarray, ObjectiveVector, float]:
    """Refine ``genes`` under weight ``w``; returns the best solution seen with its objectives and fitness.

    Each episode restarts from the best solution so far. Within an episode a
    perturbed candidate replaces the current solution when its fitness is not
    worse. ``q`` is updated in place after every episode.
    """
    if obj is None:
        obj = ctx.objectives(genes)
    eps = epsilon if epsilon is not None else EpsilonSchedule(params)
    best, best_obj = genes, obj
    best_fit = ctx.fitness(obj, w)
    for _ in range(params.episodes):
        cur, cur_obj, cur_fit = best, best_obj, best_fit
        f_start = cur_fit
        traj = Trajectory()
        for _ in range(params.steps_per_episode):
            s = ctx.state(cur, cur_obj, cur_fit)
            a = select_action(q, s, eps.value, rng)
            cand = perturb(cur, a, ctx.feasible, rng)
            cand_obj = ctx.objectives(cand)
            cand_fit = ctx.fitness(cand_obj, w)
            traj.append(s, a, reward(cur_obj, cand_obj, cur_fit, cand_fit))
            if cand_fit <= cur_fit:
                cur, cur_obj, cur_fit = cand, cand_obj, cand_fit
            if cur_fit < best_fit:
                best, best_obj, best_fit = cur, cur_obj, cur_fit
        update_qtable(q, traj, params, f_start, best_fit)
        eps.step()
    return best, best_obj, best_fit
