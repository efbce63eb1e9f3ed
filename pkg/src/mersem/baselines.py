"""Reference placement policies: uniform random, latency-greedy and carbon-greedy."""

from __future__ import annotations

import numpy as np

from .simkernel import EpochProblem, J_PER_KWH

METHODS = ("random", "greedy_sla", "greedy_carbon")


def random_assignment(problem: EpochProblem, rng: np.random.Generator) -> np.ndarray:
    return np.array([f[rng.integers(len(f))] for f in problem.feasible], dtype=np.int64)


def _deadline_order(problem: EpochProblem) -> list[int]:
    return sorted(range(problem.n_jobs), key=lambda k: (problem.deadline[k], problem.job_ids[k]))


def greedy_sla(problem: EpochProblem) -> np.ndarray:
    """Jobs in deadline order, each to the VM giving it the earliest finish given earlier placements."""
    free_at = np.zeros(len(problem.vm_ids))
    genes = np.empty(problem.n_jobs, dtype=np.int64)
    for k in _deadline_order(problem):
        f = problem.feasible[k]
        finish = np.maximum(problem.comm[k, f], free_at[f]) + problem.exec[k, f]
        v = int(f[int(np.argmin(finish))])
        genes[k] = v
        free_at[v] = finish.min()
    return genes


def greedy_carbon(problem: EpochProblem) -> np.ndarray:
    """Jobs in deadline order, each to the lowest-intensity node whose VM can still finish within the epoch.

    Node intensity is the epoch-average of its trace. Ties go to the lower
    marginal energy, then the earlier finish. When no VM has spare capacity the
    earliest-finishing VM is used.
    """
    horizon = problem.T * problem.delta
    node_ci = problem.ci[:, : problem.T].mean(axis=1)[problem.node_trace]
    free_at = np.zeros(len(problem.vm_ids))
    genes = np.empty(problem.n_jobs, dtype=np.int64)
    for k in _deadline_order(problem):
        f = problem.feasible[k]
        finish = np.maximum(problem.comm[k, f], free_at[f]) + problem.exec[k, f]
        nodes = problem.vm_node[f]
        energy = problem.node_dyn[nodes] / problem.node_cores[nodes] * problem.rate[k, f] * problem.exec[k, f] / J_PER_KWH
        spare = finish <= horizon
        if spare.any():
            cand = np.nonzero(spare)[0]
            order = np.lexsort((f[cand], finish[cand], energy[cand], node_ci[nodes[cand]]))
            i = int(cand[order[0]])
        else:
            i = int(np.argmin(finish))
        v = int(f[i])
        genes[k] = v
        free_at[v] = finish[i]
    return genes


def run_baseline(problem: EpochProblem, method: str, rng: np.random.Generator) -> np.ndarray:
    if method == "random":
        return random_assignment(problem, rng)
    if method == "greedy_sla":
        return greedy_sla(problem)
    if method == "greedy_carbon":
        return greedy_carbon(problem)
    raise ValueError(f"unknown baseline '{method}' (choose from {', '.join(METHODS)})")
