"""
Epoch evaluation: latency (communication, FIFO queueing, DAG execution),
SLA violations, utilization timelines, energy and carbon emissions.

:func:`evaluate_assignment` is the reference evaluator. :class:`EpochProblem`
precomputes per-(job, VM) delays once per epoch and offers a fast
``objectives`` path for the optimizer that integrates carbon intensity
analytically instead of materializing timelines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .infra import LOCAL, ComputeNode, Topology, VirtualMachine, path_for
from .objectives import ObjectiveVector
from .workload import Job, JobId, critical_path_mi, dag_width, total_mi

J_PER_KWH = 3.6e6


class SimError(ValueError):
    pass


class InfeasibleAssignment(SimError):
    def __init__(self, message: str, job_id: JobId | None = None):
        super().__init__(message)
        self.job_id = job_id


class UtilizationOutOfRange(SimError):
    pass


class TimelineLengthMismatch(SimError):
    pass


class UnknownNode(SimError, KeyError):
    pass


# ---------------------------------------------------------------------------
# Per-job and per-node formulas


def comm_delay(job: Job, vm: VirtualMachine, topology: Topology) -> float:
    """Transmission plus propagation delay of the job's input; zero when run locally."""
    path = path_for(topology, job.origin_device, vm.vm_id)
    if path == LOCAL:
        return 0.0
    return job.input_size_bits / path.bandwidth_bps + path.prop_delay_s


def parallel_demand(job: Job) -> int:
    return min(job.max_parallel_tasks, dag_width(job))


def exec_time(job: Job, vm: VirtualMachine, host: ComputeNode) -> float:
    """Critical-path time if the VM has enough cores for the DAG's parallelism, else sequential."""
    if vm.cores >= parallel_demand(job):
        return critical_path_mi(job) / host.mips_per_core
    return total_mi(job) / host.mips_per_core


def node_power(node: ComputeNode, u: float) -> float:
    """Linear idle-to-peak power, divided by 3600 as in the energy model's units.

    Multiplying by an interval length in seconds and dividing by 1000 yields kWh.
    """
    if not 0.0 <= u <= 1.0:
        raise UtilizationOutOfRange(f"utilization {u} outside [0, 1]")
    return (node.p_idle_w + (node.p_max_w - node.p_idle_w) * u) / 3600.0


def interval_energy(node: ComputeNode, timeline: np.ndarray, delta: float) -> np.ndarray:
    u = np.asarray(timeline, dtype=float)
    if u.size and (u.min() < 0.0 or u.max() > 1.0):
        raise UtilizationOutOfRange(f"node {node.node_id}: utilization outside [0, 1]")
    return (node.p_idle_w + (node.p_max_w - node.p_idle_w) * u) / 3600.0 * delta / 1000.0


def epoch_energy(node: ComputeNode, timeline: Sequence[float], delta: float,
                 n_intervals: int | None = None) -> float:
    """Energy (kWh) of ``node`` over a utilization timeline sampled every ``delta`` seconds.

    When ``n_intervals`` is given the timeline must have exactly that many entries.
    """
    if n_intervals is not None and len(timeline) != n_intervals:
        raise TimelineLengthMismatch(
            f"node {node.node_id}: timeline has {len(timeline)} entries, expected {n_intervals}"
        )
    return float(interval_energy(node, np.asarray(timeline), delta).sum())


def epoch_emissions(
    topology: Topology, per_node_energy: Mapping[str, float | Sequence[float]], epoch: int
) -> tuple[dict[str, float], float]:
    """Per-node and total gCO2.

    Values may be per-interval energy arrays (kWh per sampling interval, from
    the epoch start) or scalars, which are spread evenly over the epoch's
    intervals. Each interval is charged at its midpoint carbon intensity.
    """
    delta = topology.sample_interval_s
    t0 = topology.epoch_start(epoch)
    per_node: dict[str, float] = {}
    for node_id, energy in per_node_energy.items():
        if node_id not in topology.nodes:
            raise UnknownNode(node_id)
        if np.ndim(energy) == 0:
            n = topology.n_intervals
            energy = np.full(n, float(energy) / n)
        energy = np.asarray(energy, dtype=float)
        trace = topology.traces[topology.nodes[node_id].carbon_trace_id]
        per_node[node_id] = float(np.dot(energy, trace.grid(t0, delta, len(energy))))
    return per_node, math.fsum(per_node.values())


def n_timeline_intervals(max_finish_s: float, delta: float, base: int) -> int:
    """Intervals needed to cover an epoch plus any work that overruns it."""
    return max(base, math.ceil(max_finish_s / delta - 1e-9))


# ---------------------------------------------------------------------------


@dataclass
class EpochOutcome:
    job_ids: list[JobId]
    vm_ids: list[str]
    comm_delay_s: np.ndarray
    queue_delay_s: np.ndarray
    exec_time_s: np.ndarray
    latency_s: np.ndarray
    sla_violated: np.ndarray
    utilization: dict[str, np.ndarray]
    energy_kwh: dict[str, float]
    co2_g: dict[str, float]
    co2_total_g: float
    sla_rate: float
    co2_by_layer: dict[str, float]

    def job(self, job_id: JobId) -> dict:
        k = self.job_ids.index(job_id)
        return {
            "vm_id": self.vm_ids[k],
            "comm_delay_s": float(self.comm_delay_s[k]),
            "queue_delay_s": float(self.queue_delay_s[k]),
            "exec_time_s": float(self.exec_time_s[k]),
            "latency_s": float(self.latency_s[k]),
            "sla_violated": bool(self.sla_violated[k]),
        }


def objective_vector(outcome: EpochOutcome) -> ObjectiveVector:
    return ObjectiveVector(outcome.sla_rate, outcome.co2_total_g)


@dataclass
class Schedule:
    comm: np.ndarray
    exec: np.ndarray
    start: np.ndarray
    finish: np.ndarray
    queue: np.ndarray
    latency: np.ndarray


class EpochProblem:
    """Precomputed evaluation context for one epoch's job set on a topology.

    Assignments are integer gene vectors: ``genes[k]`` is the index into
    :attr:`vm_ids` of the VM running ``jobs[k]``; jobs are ordered by job id.
    """

    def __init__(self, jobs: Sequence[Job], topology: Topology, epoch: int = 0):
        self.topology = topology
        self.epoch = epoch
        self.jobs = sorted(jobs, key=lambda j: j.job_id)
        self.job_ids = [j.job_id for j in self.jobs]
        if len(set(self.job_ids)) != len(self.job_ids):
            raise SimError("duplicate job ids in epoch")
        self.n_jobs = len(self.jobs)
        self.t0 = topology.epoch_start(epoch)
        self.delta = topology.sample_interval_s
        self.T = topology.n_intervals

        self.node_ids = list(topology.nodes)
        node_index = {n: k for k, n in enumerate(self.node_ids)}
        nodes = [topology.nodes[n] for n in self.node_ids]
        self.vm_ids = list(topology.vms)
        self.vm_index = {v: k for k, v in enumerate(self.vm_ids)}
        vms = [topology.vms[v] for v in self.vm_ids]
        self.vm_node = np.array([node_index[vm.host_node] for vm in vms])
        self.vm_cores = np.array([vm.cores for vm in vms], dtype=float)
        vm_mips = np.array([topology.nodes[vm.host_node].mips_per_core for vm in vms])
        self.node_layer = [n.layer for n in nodes]
        self.node_cores = np.array([n.cores for n in nodes], dtype=float)
        self.node_idle = np.array([n.p_idle_w for n in nodes])
        self.node_dyn = np.array([n.p_max_w - n.p_idle_w for n in nodes])
        trace_ids = sorted({n.carbon_trace_id for n in nodes})
        self.node_trace = np.array([trace_ids.index(n.carbon_trace_id) for n in nodes])

        crit = np.array([critical_path_mi(j) for j in self.jobs])
        tot = np.array([total_mi(j) for j in self.jobs])
        need = np.array([parallel_demand(j) for j in self.jobs])
        bits = np.array([j.input_size_bits for j in self.jobs])
        self.deadline = np.array([j.deadline_s for j in self.jobs])
        self.total_mi = tot

        # exec[k, v]: critical path when the VM has enough cores, total work otherwise
        parallel = self.vm_cores[None, :] >= need[:, None]
        self.exec = np.where(parallel, crit[:, None], tot[:, None]) / vm_mips[None, :]
        # busy cores while running: the job's CPU work spread over its run, capped by VM size
        with np.errstate(divide="ignore", invalid="ignore"):
            rate = (tot[:, None] / vm_mips[None, :]) / self.exec
        self.rate = np.minimum(np.nan_to_num(rate, nan=1.0), self.vm_cores[None, :])

        dc_of_vm = [topology.nodes[vm.host_node].datacenter_id for vm in vms]
        self.comm = np.full((self.n_jobs, len(vms)), np.nan)
        self.feasible: list[np.ndarray] = []
        shared = [k for k, dc in enumerate(dc_of_vm) if dc is not None]
        vm_mem = np.array([vm.mem_gb for vm in vms])
        for k, job in enumerate(self.jobs):
            dev = job.origin_device
            if dev not in topology.device_slot:
                raise InfeasibleAssignment(f"job {job.job_id}: origin '{dev}' is not an edge device", job.job_id)
            slot = self.vm_index[topology.device_slot[dev]]
            cand = [slot] + shared
            cand = [v for v in cand if vm_mem[v] >= job.mem_req_gb]
            self.feasible.append(np.array(cand, dtype=np.int64))
            self.comm[k, slot] = 0.0
            for v in shared:
                p = topology.paths[(dev, dc_of_vm[v])]
                self.comm[k, v] = bits[k] / p.bandwidth_bps + p.prop_delay_s
        self._feasible_sets = [frozenset(f.tolist()) for f in self.feasible]

        # carbon-intensity integrals over a horizon long enough for any schedule
        worst = np.nanmax(self.comm, initial=0.0) + sum(
            float(self.exec[k, f].max()) for k, f in enumerate(self.feasible)
        )
        self.horizon = n_timeline_intervals(worst, self.delta, self.T) + 1
        self.ci = np.stack([
            topology.traces[t].grid(self.t0, self.delta, self.horizon) for t in trace_ids
        ])
        self.ci_cum = np.concatenate(
            [np.zeros((len(trace_ids), 1)), np.cumsum(self.ci, axis=1) * self.delta], axis=1
        )
        t_end = self.T * self.delta
        self._idle_co2 = self.node_idle / J_PER_KWH * self._ci_integral(
            self.node_trace, np.full(len(nodes), t_end)
        )
        self.idle_co2_g = math.fsum(self._idle_co2)

    # -- helpers -------------------------------------------------------------

    def _ci_integral(self, trace: np.ndarray, tau: np.ndarray) -> np.ndarray:
        """Integral of the step intensity over [0, tau] (gCO2/kWh x s)."""
        k = np.minimum((tau / self.delta).astype(np.int64), self.horizon - 1)
        return self.ci_cum[trace, k] + (tau - k * self.delta) * self.ci[trace, k]

    def is_feasible(self, k: int, v: int) -> bool:
        return v in self._feasible_sets[k]

    def genes_from_mapping(self, assignment: Mapping[JobId, str]) -> np.ndarray:
        genes = np.empty(self.n_jobs, dtype=np.int64)
        extra = set(assignment) - set(self.job_ids)
        if extra:
            jid = sorted(extra)[0]
            raise InfeasibleAssignment(f"job {jid} is not in this epoch's job set", jid)
        for k, jid in enumerate(self.job_ids):
            if jid not in assignment:
                raise InfeasibleAssignment(f"job {jid} is not assigned to any VM", jid)
            vm = assignment[jid]
            if vm not in self.vm_index:
                raise InfeasibleAssignment(f"job {jid}: unknown VM '{vm}'", jid)
            v = self.vm_index[vm]
            if not self.is_feasible(k, v):
                raise InfeasibleAssignment(
                    f"job {jid} from {self.jobs[k].origin_device} cannot run on VM '{vm}'", jid
                )
            genes[k] = v
        return genes

    def mapping_from_genes(self, genes: np.ndarray) -> dict[JobId, str]:
        return {jid: self.vm_ids[int(v)] for jid, v in zip(self.job_ids, genes)}

    def check(self, genes: np.ndarray) -> None:
        for k, v in enumerate(genes.tolist()):
            if not self.is_feasible(k, v):
                raise InfeasibleAssignment(f"job {self.job_ids[k]}: VM index {v} infeasible", self.job_ids[k])

    # -- evaluation ----------------------------------------------------------

    def schedule(self, genes: np.ndarray) -> Schedule:
        """FIFO per VM by arrival time (ties by job id); a job never starts before it arrives."""
        idx = np.arange(self.n_jobs)
        comm = self.comm[idx, genes]
        ex = self.exec[idx, genes]
        order = np.lexsort((idx, comm, genes))
        start = np.empty(self.n_jobs)
        g, a, x = genes.tolist(), comm.tolist(), ex.tolist()
        prev_vm, free_at = -1, 0.0
        for k in order.tolist():
            if g[k] != prev_vm:
                prev_vm, free_at = g[k], 0.0
            s = a[k] if a[k] > free_at else free_at
            start[k] = s
            free_at = s + x[k]
        queue = start - comm
        latency = comm + queue + ex
        return Schedule(comm, ex, start, start + ex, queue, latency)

    def objectives(self, genes: np.ndarray) -> ObjectiveVector:
        """(SLA violation rate, total gCO2) without materializing timelines."""
        if self.n_jobs == 0:
            return ObjectiveVector(0.0, self.idle_co2_g)
        sch = self.schedule(genes)
        sla = float(np.count_nonzero(sch.latency > self.deadline)) / self.n_jobs
        node = self.vm_node[genes]
        trace = self.node_trace[node]
        rate = self.rate[np.arange(self.n_jobs), genes]
        dyn = self.node_dyn[node] / (self.node_cores[node] * J_PER_KWH) * rate * (
            self._ci_integral(trace, sch.finish) - self._ci_integral(trace, sch.start)
        )
        co2 = self.idle_co2_g + float(dyn.sum())
        # idle draw while a node finishes work past the epoch end
        node_end = np.zeros(len(self.node_ids))
        np.maximum.at(node_end, node, sch.finish)
        over = np.nonzero(node_end > self.T * self.delta + 1e-9)[0]
        for n in over.tolist():
            n_int = n_timeline_intervals(node_end[n], self.delta, self.T)
            tr = np.array([self.node_trace[n]])
            extra = self._ci_integral(tr, np.array([n_int * self.delta]))[0] - self._ci_integral(
                tr, np.array([self.T * self.delta])
            )[0]
            co2 += self.node_idle[n] / J_PER_KWH * extra
        return ObjectiveVector(sla, float(co2))

    def evaluate(self, genes: np.ndarray) -> EpochOutcome:
        """Full outcome, with utilization timelines, per-node energy and emissions."""
        genes = np.asarray(genes, dtype=np.int64)
        sch = self.schedule(genes)
        node = self.vm_node[genes]
        rate = self.rate[np.arange(self.n_jobs), genes]
        timelines: dict[str, np.ndarray] = {}
        busy: dict[int, list[int]] = {}
        for k, n in enumerate(node.tolist()):
            busy.setdefault(n, []).append(k)
        for n, node_id in enumerate(self.node_ids):
            ks = busy.get(n)
            if not ks:
                timelines[node_id] = np.zeros(self.T)
                continue
            ks = np.array(ks)
            n_int = n_timeline_intervals(float(sch.finish[ks].max()), self.delta, self.T)
            lo = np.arange(n_int) * self.delta
            overlap = np.clip(
                np.minimum(sch.finish[ks, None], lo[None, :] + self.delta)
                - np.maximum(sch.start[ks, None], lo[None, :]),
                0.0, None,
            )
            core_s = (rate[ks, None] * overlap).sum(axis=0)
            timelines[node_id] = np.clip(core_s / (self.node_cores[n] * self.delta), 0.0, 1.0)

        per_interval = {
            nid: interval_energy(self.topology.nodes[nid], u, self.delta) for nid, u in timelines.items()
        }
        energy = {nid: float(e.sum()) for nid, e in per_interval.items()}
        co2, co2_total = epoch_emissions(self.topology, per_interval, self.epoch)
        by_layer = {layer: 0.0 for layer in ("edge", "fog", "cloud")}
        for n, nid in enumerate(self.node_ids):
            by_layer[self.node_layer[n]] += co2[nid]
        violated = sch.latency > self.deadline
        return EpochOutcome(
            job_ids=list(self.job_ids),
            vm_ids=[self.vm_ids[v] for v in genes.tolist()],
            comm_delay_s=sch.comm,
            queue_delay_s=sch.queue,
            exec_time_s=sch.exec,
            latency_s=sch.latency,
            sla_violated=violated,
            utilization=timelines,
            energy_kwh=energy,
            co2_g=co2,
            co2_total_g=co2_total,
            sla_rate=float(violated.mean()) if self.n_jobs else 0.0,
            co2_by_layer=by_layer,
        )


def evaluate_assignment(
    assignment: Mapping[JobId, str], jobs: Sequence[Job], topology: Topology, epoch: int = 0
) -> EpochOutcome:
    """Evaluate a job-id -> VM-id mapping covering exactly ``jobs``."""
    problem = EpochProblem(jobs, topology, epoch)
    return problem.evaluate(problem.genes_from_mapping(assignment))
