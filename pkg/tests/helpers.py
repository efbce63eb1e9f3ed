"""Small hand-built topologies and jobs shared by the test modules."""

from __future__ import annotations

from mersem.infra import build_topology
from mersem.workload import Job, Task


def diamond(job_id=(0, 0), device="ed0", deadline=10.0, input_bits=0.0, max_parallel=2, mem=0.0):
    """A(1000) -> {B(2000), C(3000)} -> D(1000)."""
    tasks = (
        Task("A", 1000.0, input_size_bits=input_bits),
        Task("B", 2000.0, predecessors=frozenset({"A"})),
        Task("C", 3000.0, predecessors=frozenset({"A"})),
        Task("D", 1000.0, predecessors=frozenset({"B", "C"})),
    )
    return Job(job_id, tasks, max_parallel, deadline, mem, device)


def chain(mis, job_id=(0, 0), device="ed0", deadline=10.0, input_bits=0.0):
    tasks = []
    for k, mi in enumerate(mis):
        preds = frozenset({f"t{k - 1}"}) if k else frozenset()
        tasks.append(Task(f"t{k}", float(mi), input_size_bits=input_bits if k == 0 else 0.0,
                          predecessors=preds))
    return Job(job_id, tuple(tasks), 1, deadline, 0.0, device)


def star(n_leaves=4, job_id=(0, 0), device="ed0"):
    tasks = [Task("A", 1000.0)]
    tasks += [Task(f"L{k}", 500.0, predecessors=frozenset({"A"})) for k in range(n_leaves)]
    return Job(job_id, tuple(tasks), n_leaves, 10.0, 0.0, device)


def flat_trace(tid, ci):
    return {"id": tid, "samples": [[0, ci]]}


def mini_config(
    n_devices=1,
    device_cores=1,
    device_mips=1000.0,
    device_power=(0.0, 0.0),
    fog_vms=(1,),
    fog_mips=1000.0,
    fog_power=(100.0, 200.0),
    fog_ci=400.0,
    cloud_vms=(),
    cloud_mips=1000.0,
    cloud_power=(100.0, 200.0),
    cloud_ci=400.0,
    device_ci=400.0,
    wifi=(40e6, 0.0),
    man=(150e6, 0.005),
    wan=(100e6, 0.0),
    epoch_length_s=900.0,
    sample_interval_s=6.0,
    start_time_s=0.0,
    vm_mem=16.0,
):
    """One fog server (and optionally one cloud server) with the given VM core counts."""
    dcs = []
    if fog_vms:
        dcs.append({"id": "f1", "layer": "fog", "carbon_trace": "fog", "servers": [{
            "cores": max(1, sum(fog_vms)), "mips_per_core": fog_mips, "mem_gb": 64.0,
            "p_idle_w": fog_power[0], "p_max_w": fog_power[1],
            "vms": [{"cores": c, "mem_gb": vm_mem} for c in fog_vms]}]})
    if cloud_vms:
        dcs.append({"id": "c1", "layer": "cloud", "carbon_trace": "cloud", "servers": [{
            "cores": max(1, sum(cloud_vms)), "mips_per_core": cloud_mips, "mem_gb": 64.0,
            "p_idle_w": cloud_power[0], "p_max_w": cloud_power[1],
            "vms": [{"cores": c, "mem_gb": vm_mem} for c in cloud_vms]}]})
    return {
        "carbon_traces": [flat_trace("fog", fog_ci), flat_trace("cloud", cloud_ci), flat_trace("grid", device_ci)],
        "datacenters": dcs,
        "edge_devices": {"regions": ["grid"], "classes": [{
            "name": "dev", "count": n_devices, "cores": device_cores, "mips_per_core": device_mips,
            "mem_gb": 4.0, "p_idle_w": device_power[0], "p_max_w": device_power[1]}]},
        "network": {"wifi": {"bandwidth_bps": wifi[0], "delay_s": wifi[1]},
                    "man": {"bandwidth_bps": man[0], "delay_s": man[1]},
                    "wan": {"bandwidth_bps": wan[0], "delay_s": wan[1]}},
        "epoch_length_s": epoch_length_s,
        "sample_interval_s": sample_interval_s,
        "start_time_s": start_time_s,
    }


def mini_topology(**kw):
    return build_topology(mini_config(**kw))
