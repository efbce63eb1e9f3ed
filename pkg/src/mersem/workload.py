"""
DAG-structured jobs, workload trace files and a synthetic workload generator.

A job is a DAG of tasks that executes wholly on one VM. Jobs are released in
discrete epochs; a :class:`WorkloadTrace` maps each epoch index to its job set.
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

VIRTUAL_ENTRY_ID = "__entry__"

JobId = tuple[int, int]


class WorkloadError(ValueError):
    """Base class for workload problems."""


class CyclicDag(WorkloadError):
    pass


class DanglingPredecessor(WorkloadError):
    pass


class NoEntryTask(WorkloadError):
    pass


class NonPositiveField(WorkloadError):
    pass


class ParseError(WorkloadError):
    pass


class SchemaError(WorkloadError):
    pass


class ValidationError(WorkloadError):
    """A job in a workload file failed validation; ``cause`` holds the original error."""

    def __init__(self, message: str, cause: WorkloadError):
        super().__init__(message)
        self.cause = cause


class InvalidProfile(WorkloadError):
    pass


@dataclass(frozen=True)
class Task:
    task_id: str
    mi: float
    input_size_bits: float = 0.0
    mem_req_gb: float = 0.0
    cpu_req_cores: int = 1
    predecessors: frozenset[str] = frozenset()
    virtual: bool = False  # zero-MI entry inserted for multi-entry DAGs


@dataclass(frozen=True)
class Job:
    job_id: JobId
    tasks: tuple[Task, ...]
    max_parallel_tasks: int
    deadline_s: float
    mem_req_gb: float
    origin_device: str
    release_epoch: int = 0
    job_class: str | None = None

    @property
    def entry_task(self) -> Task:
        return next(t for t in self.tasks if not t.predecessors)

    @property
    def input_size_bits(self) -> float:
        """Input payload of the job, carried by its entry task."""
        return self.entry_task.input_size_bits


@dataclass
class WorkloadTrace:
    epochs: dict[int, list[Job]] = field(default_factory=dict)

    def __post_init__(self):
        for e, jobs in self.epochs.items():
            for job in jobs:
                if job.release_epoch != e:
                    raise SchemaError(
                        f"job {job.job_id} has release_epoch {job.release_epoch} but sits in epoch {e}"
                    )

    def __len__(self) -> int:
        return len(self.epochs)

    def jobs(self, epoch: int) -> list[Job]:
        return self.epochs.get(epoch, [])

    @property
    def n_jobs(self) -> int:
        return sum(len(j) for j in self.epochs.values())


# ---------------------------------------------------------------------------
# DAG analysis


def _topological_order(job: Job) -> list[Task]:
    by_id = {t.task_id: t for t in job.tasks}
    indeg = {t.task_id: len(t.predecessors) for t in job.tasks}
    succ: dict[str, list[str]] = defaultdict(list)
    for t in job.tasks:
        for p in sorted(t.predecessors):
            succ[p].append(t.task_id)
    ready = sorted(tid for tid, d in indeg.items() if d == 0)
    order = []
    while ready:
        tid = ready.pop(0)
        order.append(by_id[tid])
        for s in succ[tid]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
    if len(order) != len(job.tasks):
        stuck = sorted(tid for tid, d in indeg.items() if d > 0)
        raise CyclicDag(f"job {job.job_id}: cycle among tasks {stuck}")
    return order


def validate_job(job: Job) -> None:
    """Raise the first violated job invariant, return None if the job is valid."""
    if not job.tasks:
        raise NoEntryTask(f"job {job.job_id} has no tasks")
    for name in ("deadline_s", "max_parallel_tasks"):
        if not getattr(job, name) > 0:
            raise NonPositiveField(f"job {job.job_id}: {name}={getattr(job, name)!r} must be > 0")
    if job.mem_req_gb < 0:
        raise NonPositiveField(f"job {job.job_id}: mem_req_gb must be >= 0")
    ids = [t.task_id for t in job.tasks]
    if len(set(ids)) != len(ids):
        raise WorkloadError(f"job {job.job_id}: duplicate task ids")
    known = set(ids)
    for t in job.tasks:
        if not (t.mi > 0 or (t.virtual and t.mi == 0)):
            raise NonPositiveField(f"job {job.job_id}, task {t.task_id}: mi={t.mi!r} must be > 0")
        if t.input_size_bits < 0:
            raise NonPositiveField(f"job {job.job_id}, task {t.task_id}: input_size_bits < 0")
        if t.cpu_req_cores < 1:
            raise NonPositiveField(f"job {job.job_id}, task {t.task_id}: cpu_req_cores < 1")
        missing = t.predecessors - known
        if missing:
            raise DanglingPredecessor(
                f"job {job.job_id}, task {t.task_id}: unknown predecessor(s) {sorted(missing)}"
            )
    _topological_order(job)
    entries = [t.task_id for t in job.tasks if not t.predecessors]
    if len(entries) != 1:
        raise NoEntryTask(f"job {job.job_id}: expected exactly one entry task, found {entries}")


def _levels(job: Job) -> dict[str, int]:
    level: dict[str, int] = {}
    for t in _topological_order(job):
        level[t.task_id] = max((level[p] + 1 for p in t.predecessors), default=0)
    return level


def critical_path_mi(job: Job) -> float:
    """Largest summed MI along any entry-to-exit precedence path."""
    best: dict[str, float] = {}
    for t in _topological_order(job):
        best[t.task_id] = t.mi + max((best[p] for p in t.predecessors), default=0.0)
    return max(best.values())


def total_mi(job: Job) -> float:
    return float(sum(t.mi for t in job.tasks))


def dag_width(job: Job) -> int:
    """Largest number of tasks sharing one level (longest distance from the entry)."""
    counts: dict[int, int] = defaultdict(int)
    for lv in _levels(job).values():
        counts[lv] += 1
    return max(counts.values())


def with_single_entry(job: Job) -> Job:
    """Prepend a zero-MI virtual entry task when a job has several entry tasks."""
    entries = [t for t in job.tasks if not t.predecessors]
    if len(entries) <= 1:
        return job
    entry_ids = {t.task_id for t in entries}
    virtual = Task(
        task_id=VIRTUAL_ENTRY_ID,
        mi=0.0,
        input_size_bits=float(sum(t.input_size_bits for t in entries)),
        virtual=True,
    )
    tasks = [virtual] + [
        Task(t.task_id, t.mi, 0.0, t.mem_req_gb, t.cpu_req_cores, frozenset({VIRTUAL_ENTRY_ID}))
        if t.task_id in entry_ids
        else t
        for t in job.tasks
    ]
    return _replace_tasks(job, tuple(tasks))


def _replace_tasks(job: Job, tasks: tuple[Task, ...]) -> Job:
    return Job(
        job.job_id, tasks, job.max_parallel_tasks, job.deadline_s, job.mem_req_gb,
        job.origin_device, job.release_epoch, job.job_class,
    )


# ---------------------------------------------------------------------------
# Trace files

_JOB_FIELDS = ("job_id", "origin_device", "deadline_s", "mem_req_gb", "tasks")
_TASK_FIELDS = ("task_id", "mi", "input_size_bits", "mem_req_gb", "cpu_req_cores", "predecessors")


def _job_from_dict(d: Mapping, epoch: int) -> Job:
    for key in _JOB_FIELDS:
        if key not in d:
            raise SchemaError(f"epoch {epoch}: job missing field '{key}'")
    try:
        i, j = d["job_id"]
        job_id = (int(i), int(j))
    except (TypeError, ValueError):
        raise SchemaError(f"epoch {epoch}: job_id must be a [device_index, job_index] pair") from None
    tasks = []
    for td in d["tasks"]:
        for key in _TASK_FIELDS:
            if key not in td:
                raise SchemaError(f"job {job_id}: task missing field '{key}'")
        tasks.append(
            Task(
                task_id=str(td["task_id"]),
                mi=float(td["mi"]),
                input_size_bits=float(td["input_size_bits"]),
                mem_req_gb=float(td["mem_req_gb"]),
                cpu_req_cores=int(td["cpu_req_cores"]),
                predecessors=frozenset(str(p) for p in td["predecessors"]),
                virtual=bool(td.get("virtual", False)),
            )
        )
    job = Job(
        job_id=job_id,
        tasks=tuple(tasks),
        max_parallel_tasks=int(d.get("max_parallel_tasks") or 1),
        deadline_s=float(d["deadline_s"]),
        mem_req_gb=float(d["mem_req_gb"]),
        origin_device=str(d["origin_device"]),
        release_epoch=epoch,
        job_class=d.get("job_class"),
    )
    try:
        job = with_single_entry(job)
        validate_job(job)
    except WorkloadError as err:
        raise ValidationError(f"invalid job {job_id} in epoch {epoch}: {err}", err) from err
    width = dag_width(job)
    if d.get("max_parallel_tasks") is None:
        job = Job(job.job_id, job.tasks, width, job.deadline_s, job.mem_req_gb,
                  job.origin_device, job.release_epoch, job.job_class)
    elif job.max_parallel_tasks != width:
        logger.debug("job %s: max_parallel_tasks=%d but DAG width=%d",
                     job_id, job.max_parallel_tasks, width)
    return job


def trace_from_dict(data: Mapping) -> WorkloadTrace:
    if not isinstance(data, Mapping) or "epochs" not in data:
        raise SchemaError("workload file must be an object with an 'epochs' key")
    epochs: dict[int, list[Job]] = {}
    for key in sorted(data["epochs"], key=int):
        e = int(key)
        epochs[e] = [_job_from_dict(jd, e) for jd in data["epochs"][key]]
    return WorkloadTrace(epochs)


def load_workload(path: str | Path) -> WorkloadTrace:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as err:
        raise ParseError(f"{path}: {err}") from err
    return trace_from_dict(data)


def job_to_dict(job: Job) -> dict:
    d = {
        "job_id": list(job.job_id),
        "origin_device": job.origin_device,
        "deadline_s": job.deadline_s,
        "mem_req_gb": job.mem_req_gb,
        "max_parallel_tasks": job.max_parallel_tasks,
        "tasks": [
            {
                "task_id": t.task_id,
                "mi": t.mi,
                "input_size_bits": t.input_size_bits,
                "mem_req_gb": t.mem_req_gb,
                "cpu_req_cores": t.cpu_req_cores,
                "predecessors": sorted(t.predecessors),
                **({"virtual": True} if t.virtual else {}),
            }
            for t in job.tasks
        ],
    }
    if job.job_class is not None:
        d["job_class"] = job.job_class
    return d


def trace_to_dict(trace: WorkloadTrace) -> dict:
    return {"epochs": {str(e): [job_to_dict(j) for j in jobs] for e, jobs in sorted(trace.epochs.items())}}


def write_workload(trace: WorkloadTrace, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(trace_to_dict(trace), fh, indent=1)


# ---------------------------------------------------------------------------
# Synthetic generation


@dataclass(frozen=True)
class JobClass:
    """Distributions for one class of synthetic job.

    Task MI is lognormal around ``mi_median``; DAGs are layered with a random
    depth and per-level fan-out; deadlines are uniform in ``deadline_s``.
    """

    name: str
    mi_median: float
    mi_sigma: float = 0.5
    depth: tuple[int, int] = (2, 5)
    fan_out: tuple[int, int] = (1, 3)
    input_mb: tuple[float, float] = (1.0, 20.0)
    mem_gb: tuple[float, float] = (0.25, 2.0)
    deadline_s: tuple[float, float] = (5.0, 30.0)

    @classmethod
    def from_dict(cls, name: str, d: Mapping) -> "JobClass":
        unknown = set(d) - {"mi_median", "mi_sigma", "depth", "fan_out", "input_mb", "mem_gb", "deadline_s"}
        if unknown:
            raise InvalidProfile(f"job class '{name}': unknown keys {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, (list, tuple)) else v for k, v in d.items()}
        jc = cls(name=name, **kw)
        if jc.mi_median <= 0 or jc.depth[0] < 1 or jc.fan_out[0] < 1 or jc.deadline_s[0] <= 0:
            raise InvalidProfile(f"job class '{name}': non-positive parameter")
        return jc


DEFAULT_JOB_CLASSES: dict[str, JobClass] = {
    "small": JobClass("small", mi_median=20000.0, deadline_s=(15.0, 60.0), input_mb=(0.5, 10.0)),
    "large": JobClass("large", mi_median=160000.0, depth=(3, 6), fan_out=(1, 4),
                      input_mb=(2.0, 30.0), mem_gb=(1.0, 6.0), deadline_s=(120.0, 400.0)),
}

# job class -> mixture weight
DEFAULT_PROFILES: dict[str, dict[str, float]] = {
    "small": {"small": 1.0},
    "large": {"large": 1.0},
    "mixed": {"small": 2.0 / 3.0, "large": 1.0 / 3.0},
}


def _synth_job(rng: np.random.Generator, jc: JobClass, job_id: JobId, device: str, epoch: int) -> Job:
    depth = int(rng.integers(jc.depth[0], jc.depth[1] + 1))
    levels: list[list[str]] = [["t0"]]
    n = 1
    for _ in range(1, depth):
        width = int(rng.integers(jc.fan_out[0], jc.fan_out[1] + 1))
        levels.append([f"t{n + k}" for k in range(width)])
        n += width
    tasks = []
    input_bits = float(rng.uniform(*jc.input_mb)) * 8e6
    for lv, ids in enumerate(levels):
        for tid in ids:
            if lv == 0:
                preds: frozenset[str] = frozenset()
            else:
                prev = levels[lv - 1]
                k = int(rng.integers(1, min(2, len(prev)) + 1))
                preds = frozenset(str(p) for p in rng.choice(prev, size=k, replace=False))
            mi = float(jc.mi_median * rng.lognormal(0.0, jc.mi_sigma))
            tasks.append(
                Task(
                    task_id=tid,
                    mi=mi,
                    input_size_bits=input_bits if lv == 0 else 0.0,
                    mem_req_gb=float(rng.uniform(*jc.mem_gb)) / 2,
                    cpu_req_cores=1,
                    predecessors=preds,
                )
            )
    job = Job(
        job_id=job_id,
        tasks=tuple(tasks),
        max_parallel_tasks=1,
        deadline_s=float(rng.uniform(*jc.deadline_s)),
        mem_req_gb=float(rng.uniform(*jc.mem_gb)),
        origin_device=device,
        release_epoch=epoch,
        job_class=jc.name,
    )
    return Job(job.job_id, job.tasks, dag_width(job), job.deadline_s, job.mem_req_gb,
               job.origin_device, job.release_epoch, job.job_class)


def generate_synthetic(
    profile: str | Mapping[str, float],
    n_jobs_per_epoch: int,
    n_epochs: int,
    seed: int,
    origin_devices: Sequence[str] | None = None,
    job_classes: Mapping[str, JobClass] | None = None,
) -> WorkloadTrace:
    """Draw a synthetic trace.

    ``profile`` is a preset name from :data:`DEFAULT_PROFILES` or an explicit
    mapping of job-class name to mixture weight. Jobs originate on devices
    drawn uniformly from ``origin_devices`` (default ``ed0`` .. ``ed499``);
    ``job_id`` is ``(device index, running job counter on that device)``.
    """
    classes = dict(DEFAULT_JOB_CLASSES if job_classes is None else job_classes)
    if isinstance(profile, str):
        if profile not in DEFAULT_PROFILES:
            raise InvalidProfile(f"unknown profile '{profile}' (known: {sorted(DEFAULT_PROFILES)})")
        mixture = DEFAULT_PROFILES[profile]
    else:
        mixture = dict(profile)
    if not mixture or any(w < 0 for w in mixture.values()) or sum(mixture.values()) <= 0:
        raise InvalidProfile(f"bad mixture weights {mixture}")
    missing = set(mixture) - set(classes)
    if missing:
        raise InvalidProfile(f"profile references unknown job classes {sorted(missing)}")
    if n_jobs_per_epoch < 1 or n_epochs < 0:
        raise InvalidProfile("n_jobs_per_epoch must be >= 1 and n_epochs >= 0")
    devices = list(origin_devices) if origin_devices is not None else [f"ed{k}" for k in range(500)]

    names = sorted(mixture)
    probs = np.array([mixture[k] for k in names], dtype=float)
    probs /= probs.sum()
    rng = np.random.default_rng(seed)
    counters = [0] * len(devices)
    epochs: dict[int, list[Job]] = {}
    for e in range(n_epochs):
        jobs = []
        for _ in range(n_jobs_per_epoch):
            d = int(rng.integers(len(devices)))
            jc = classes[names[int(rng.choice(len(names), p=probs))]]
            jobs.append(_synth_job(rng, jc, (d, counters[d]), devices[d], e))
            counters[d] += 1
        jobs.sort(key=lambda j: j.job_id)
        epochs[e] = jobs
    return WorkloadTrace(epochs)


def mean_job_mi(jobs: Iterable[Job]) -> float:
    values = [total_mi(j) for j in jobs]
    return float(np.mean(values)) if values else math.nan
