"""
Memetic multi-objective search over job-to-VM placements.

Each epoch runs a decomposition-style evolutionary loop: every individual
carries its own weight vector, the best fraction is refined by the RL-guided
local search, offspring come from uniform crossover plus per-gene mutation,
and an external archive keeps the non-dominated (SLA rate, gCO2) points.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import metrics
from .infra import Topology
from .objectives import NormBounds, ObjectiveVector, WeightVector, dominates, scalarize
from .rlsearch import EpsilonSchedule, QTable, SearchContext, SearchParams, local_search
from .simkernel import EpochOutcome, EpochProblem
from .workload import WorkloadTrace

logger = logging.getLogger(__name__)

__all__ = [
    "ObjectiveVector", "WeightVector", "NormBounds", "scalarize", "dominates",
    "Individual", "Archive", "MersemParams", "generate_weights", "init_population",
    "crossover", "mutate", "dominance_update", "run_mersem", "run_epoch",
]

LAYER_CODE = {"edge": 0, "fog": 1, "cloud": 2}
BALANCED = WeightVector(0.5, 0.5)


class PopulationTooSmall(ValueError):
    pass


class NoFeasibleVm(ValueError):
    pass


class JobSetMismatch(ValueError):
    pass


@dataclass
class Individual:
    genes: np.ndarray
    objectives: ObjectiveVector
    weight: WeightVector
    fitness: float


class Archive:
    """Mutually non-dominated (genes, objectives) pairs."""

    def __init__(self):
        self.members: list[tuple[np.ndarray, ObjectiveVector]] = []

    def offer(self, genes: np.ndarray, obj: ObjectiveVector) -> bool:
        """Insert unless dominated (or an exact objective duplicate); evict members it dominates."""
        for _, o in self.members:
            if dominates(o, obj) or tuple(o) == tuple(obj):
                return False
        self.members = [(g, o) for g, o in self.members if not dominates(obj, o)]
        self.members.append((genes.copy(), obj))
        return True

    @property
    def points(self) -> list[ObjectiveVector]:
        return [o for _, o in self.members]

    def __len__(self) -> int:
        return len(self.members)

    def is_nondominated(self) -> bool:
        pts = self.points
        return not any(dominates(a, b) for a in pts for b in pts)


@dataclass
class MersemParams:
    population: int = 20
    generations: int = 30
    wallclock_s: float | None = None  # when set, replaces the generation budget
    ls_fraction: float = 0.30
    genetic_rate: float = 1.0
    offspring: int | None = None  # defaults to the population size
    mutation_rate: float | None = None  # defaults to 1 / n_jobs
    search: SearchParams = field(default_factory=SearchParams)
    ref_point: tuple[float, float] = metrics.DEFAULT_REF

    def __post_init__(self):
        if not 0.0 <= self.ls_fraction <= 1.0:
            raise ValueError("ls_fraction must lie in [0, 1]")
        if not 0.0 <= self.genetic_rate <= 1.0:
            raise ValueError("genetic_rate must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: Mapping) -> "MersemParams":
        d = dict(d)
        search = SearchParams(**d.pop("search", {}))
        if "ref_point" in d:
            d["ref_point"] = tuple(d["ref_point"])
        known = set(cls.__dataclass_fields__) - {"search"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown optimizer parameter(s): {sorted(unknown)}")
        return cls(search=search, **d)


def generate_weights(n: int) -> list[WeightVector]:
    if n < 2:
        raise PopulationTooSmall(f"population size must be >= 2, got {n}")
    out = []
    for k in range(n):
        w_s = k / (n - 1)
        out.append(WeightVector(w_s, 1.0 - w_s))
    return out


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def random_genes(feasible: Sequence[np.ndarray], rng: np.random.Generator) -> np.ndarray:
    return np.array([f[rng.integers(len(f))] for f in feasible], dtype=np.int64)


def init_population(problem: EpochProblem, n: int, seed: int) -> list[np.ndarray]:
    """``n`` assignments drawn uniformly over each job's feasible VMs."""
    if n < 2:
        raise PopulationTooSmall(f"population size must be >= 2, got {n}")
    for k, f in enumerate(problem.feasible):
        if len(f) == 0:
            raise NoFeasibleVm(f"job {problem.job_ids[k]} has no feasible VM")
    rng = _rng(seed, problem.epoch, 1 << 20)
    return [random_genes(problem.feasible, rng) for _ in range(n)]


def crossover(p1, p2, rng: np.random.Generator):
    """Uniform crossover; accepts gene arrays or job-id -> VM mappings."""
    if isinstance(p1, Mapping):
        if set(p1) != set(p2):
            raise JobSetMismatch("parents cover different job sets")
        keys = sorted(p1)
        mask = rng.random(len(keys)) < 0.5
        return {k: (p1[k] if m else p2[k]) for k, m in zip(keys, mask)}
    if len(p1) != len(p2):
        raise JobSetMismatch(f"parents have {len(p1)} and {len(p2)} genes")
    mask = rng.random(len(p1)) < 0.5
    return np.where(mask, p1, p2)


def mutation_mask(n: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    return rng.random(n) < rate


def mutate(genes: np.ndarray, rate: float, feasible: Sequence[np.ndarray], rng: np.random.Generator) -> np.ndarray:
    """Redraw each gene with probability ``rate`` uniformly from its feasible set (may keep the same VM)."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("mutation rate must lie in [0, 1]")
    out = genes.copy()
    for k in np.nonzero(mutation_mask(len(genes), rate, rng))[0].tolist():
        f = feasible[k]
        out[k] = f[rng.integers(len(f))]
    return out


def dominance_update(
    population: list[Individual],
    offspring: Sequence[tuple[np.ndarray, ObjectiveVector]],
    archive: Archive,
    bounds: NormBounds,
) -> tuple[list[Individual], Archive]:
    """Offer each offspring to the archive and to the population slot whose weight suits it best.

    An offspring replaces that slot's incumbent only when strictly fitter
    under the slot's weight; the population size never changes.
    """
    for genes, obj in offspring:
        archive.offer(genes, obj)
        fits = [scalarize(obj, ind.weight, bounds) for ind in population]
        k = int(np.argmin(fits))
        if fits[k] < population[k].fitness:
            population[k] = Individual(genes, obj, population[k].weight, fits[k])
    return population, archive


def _tournament(population: list[Individual], w: WeightVector, bounds: NormBounds, rng) -> Individual:
    a, b = rng.integers(len(population), size=2)
    fa = scalarize(population[a].objectives, w, bounds)
    fb = scalarize(population[b].objectives, w, bounds)
    return population[a] if fa <= fb else population[b]


@dataclass
class NamedSolution:
    tag: str
    genes: np.ndarray
    objectives: ObjectiveVector
    outcome: EpochOutcome | None = None


@dataclass
class EpochResult:
    epoch: int
    archive: Archive
    bounds: NormBounds
    solutions: dict[str, NamedSolution]
    history: list[dict]
    evaluations: int


def named_solutions(archive: Archive, bounds: NormBounds) -> dict[str, NamedSolution]:
    """MERSEM-SLA / -Carbon argmins over the archive and the (0.5, 0.5) scalarized pick."""
    members = sorted(archive.members, key=lambda m: tuple(m[1]))
    sla = min(members, key=lambda m: (m[1].sla_rate, m[1].co2_g))
    carbon = min(members, key=lambda m: (m[1].co2_g, m[1].sla_rate))
    balanced = min(members, key=lambda m: (scalarize(m[1], BALANCED, bounds), tuple(m[1])))
    return {
        "sla": NamedSolution("sla", sla[0], sla[1]),
        "carbon": NamedSolution("carbon", carbon[0], carbon[1]),
        "balanced": NamedSolution("balanced", balanced[0], balanced[1]),
    }


def archive_hv(archive: Archive, bounds: NormBounds, ref=metrics.DEFAULT_REF) -> float:
    pts = [bounds.normalize(o) for o in archive.points]
    return metrics.hypervolume(pts, ref)


def run_epoch(
    problem: EpochProblem,
    params: MersemParams,
    seed: int,
    qtable: QTable | None = None,
    epsilon: EpsilonSchedule | None = None,
    on_generation: Callable[[int, Archive], None] | None = None,
) -> EpochResult:
    """Optimize one epoch's placement and return its archive and the three named solutions.

    ``on_generation(gen, archive)`` is called after every generation's dominance update.
    """
    q = qtable if qtable is not None else QTable()
    n = params.population
    weights = generate_weights(n)
    pop_genes = init_population(problem, n, seed)
    objs = [problem.objectives(g) for g in pop_genes]
    evaluations = n
    # frozen for the whole epoch so fitness values stay comparable across generations
    bounds = NormBounds.from_points(objs)
    population = [Individual(g, o, w, scalarize(o, w, bounds)) for g, o, w in zip(pop_genes, objs, weights)]
    archive = Archive()
    for ind in population:
        archive.offer(ind.genes, ind.objectives)

    vm_layer = np.array([LAYER_CODE[problem.topology.layer_of_vm(v)] for v in problem.vm_ids])
    ctx = SearchContext(problem.objectives, problem.feasible, vm_layer, bounds, problem.t0,
                        params.search.jobs_scale)
    n_ls = math.ceil(params.ls_fraction * n)
    n_off = params.offspring if params.offspring is not None else n
    mut_rate = params.mutation_rate if params.mutation_rate is not None else 1.0 / max(1, problem.n_jobs)
    history = [{"generation": 0, "archive_size": len(archive), "hv": archive_hv(archive, bounds, params.ref_point),
                "evaluations": evaluations, "best_fitness": min(i.fitness for i in population)}]

    deadline = time.monotonic() + params.wallclock_s if params.wallclock_s is not None else None
    gen = 0
    while True:
        if deadline is None:
            if gen >= params.generations:
                break
        elif gen > 0 and time.monotonic() >= deadline:
            break
        gen += 1
        ctx.evaluations = 0
        # refine the fittest individuals (own-weight fitness, ties by index)
        ranked = sorted(range(n), key=lambda i: (population[i].fitness, i))[:n_ls]
        for i in sorted(ranked):
            ind = population[i]
            rng = _rng(seed, problem.epoch, gen, 1, i)
            genes, obj, fit = local_search(ind.genes, ind.weight, q, params.search, ctx, rng,
                                           obj=ind.objectives, epsilon=epsilon)
            population[i] = Individual(genes, obj, ind.weight, fit)
            archive.offer(genes, obj)

        offspring = []
        gen_rng = _rng(seed, problem.epoch, gen, 0)
        if gen_rng.random() < params.genetic_rate:
            for k in range(n_off):
                rng = _rng(seed, problem.epoch, gen, 2, k)
                w = population[int(rng.integers(n))].weight
                p1 = _tournament(population, w, bounds, rng)
                p2 = _tournament(population, w, bounds, rng)
                child = mutate(crossover(p1.genes, p2.genes, rng), mut_rate, problem.feasible, rng)
                offspring.append((child, problem.objectives(child)))
        population, archive = dominance_update(population, offspring, archive, bounds)
        evaluations += ctx.evaluations + len(offspring)
        history.append({"generation": gen, "archive_size": len(archive),
                        "hv": archive_hv(archive, bounds, params.ref_point),
                        "evaluations": evaluations, "best_fitness": min(i.fitness for i in population)})
        if on_generation is not None:
            on_generation(gen, archive)

    solutions = named_solutions(archive, bounds)
    for sol in solutions.values():
        sol.outcome = problem.evaluate(sol.genes)
    logger.debug("epoch %d: %d generations, %d evaluations, archive %d",
                 problem.epoch, gen, evaluations, len(archive))
    return EpochResult(problem.epoch, archive, bounds, solutions, history, evaluations)


@dataclass
class MersemRun:
    epochs: list[EpochResult]
    qtable: QTable


def run_mersem(trace: WorkloadTrace, topology: Topology, params: MersemParams, seed: int,
               qtable: QTable | None = None) -> MersemRun:
    """Optimize every epoch of ``trace`` independently, sharing one Q-table across epochs.

    The job set of each epoch is known exactly in advance (oracle prediction).
    """
    q = qtable if qtable is not None else QTable()
    eps = EpsilonSchedule(params.search) if params.search.global_decay else None
    results = []
    for e in sorted(trace.epochs):
        jobs = trace.jobs(e)
        if not jobs:
            continue
        problem = EpochProblem(jobs, topology, e)
        results.append(run_epoch(problem, params, seed, q, eps))
    return MersemRun(results, q)


def with_overrides(params: MersemParams, **kw) -> MersemParams:
    return replace(params, **kw)
