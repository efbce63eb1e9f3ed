# %% [markdown]
# # Workloads: DAG jobs and synthetic traces
#
# A job is a DAG of tasks that runs wholly on one VM. Its execution time
# depends on the critical path (enough cores) or the total work (too few).

# %%
from mersem.workload import (
    Job, Task, critical_path_mi, dag_width, generate_synthetic, mean_job_mi, total_mi, with_single_entry,
)

diamond = Job(
    job_id=(0, 0),
    tasks=(
        Task("A", 1000.0, input_size_bits=8e6),
        Task("B", 2000.0, predecessors=frozenset({"A"})),
        Task("C", 3000.0, predecessors=frozenset({"A"})),
        Task("D", 1000.0, predecessors=frozenset({"B", "C"})),
    ),
    max_parallel_tasks=2, deadline_s=10.0, mem_req_gb=0.5, origin_device="ed0",
)
print("critical path MI:", critical_path_mi(diamond))   # A-C-D
print("total MI:        ", total_mi(diamond))
print("width:           ", dag_width(diamond))

# %% [markdown]
# Jobs with several entry tasks get a zero-work virtual entry that carries
# the combined input.

# %%
two_roots = Job((0, 1), (Task("X", 10.0, input_size_bits=1e6), Task("Y", 20.0, input_size_bits=2e6)),
                2, 5.0, 0.0, "ed0")
fixed = with_single_entry(two_roots)
print([t.task_id for t in fixed.tasks], "input bits:", fixed.input_size_bits)

# %% [markdown]
# Synthetic traces mix job classes. Same seed, same trace.

# %%
for profile in ("small", "mixed", "large"):
    trace = generate_synthetic(profile, n_jobs_per_epoch=100, n_epochs=1, seed=3)
    jobs = trace.jobs(0)
    print(f"{profile:6s} mean MI {mean_job_mi(jobs):12.0f}  "
          f"mean deadline {sum(j.deadline_s for j in jobs) / len(jobs):6.1f} s")
