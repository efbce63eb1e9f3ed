"""
Edge-fog-cloud infrastructure: compute nodes, VMs, network paths and
time-varying carbon intensity, built from a JSON-style configuration.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Mapping

import numpy as np

LAYERS = ("edge", "fog", "cloud")
DAY_S = 86400.0


class InfraError(ValueError):
    pass


class SchemaError(InfraError):
    pass


class InvariantViolation(InfraError):
    pass


class UnknownNode(InfraError, KeyError):
    pass


class UnknownDevice(InfraError, KeyError):
    pass


class UnknownVm(InfraError, KeyError):
    pass


class NoPath(InfraError):
    pass


@dataclass(frozen=True)
class ComputeNode:
    node_id: str
    layer: str
    cores: int
    mips_per_core: float
    mem_gb: float
    storage_gb: float
    p_idle_w: float
    p_max_w: float
    carbon_trace_id: str
    datacenter_id: str | None = None


@dataclass(frozen=True)
class VirtualMachine:
    vm_id: str
    host_node: str
    cores: int
    mem_gb: float


@dataclass(frozen=True)
class NetworkPath:
    from_device: str
    to_datacenter: str
    bandwidth_bps: float
    prop_delay_s: float


LOCAL = "local"


@dataclass(frozen=True)
class CarbonTrace:
    trace_id: str
    samples: tuple[tuple[float, float], ...]
    solar_window: tuple[float, float] | None = None

    def at(self, t: float) -> float:
        """Step lookup at absolute time ``t`` (seconds), wrapping daily."""
        tod = t % DAY_S
        if self.solar_window is not None and self.solar_window[0] <= tod < self.solar_window[1]:
            return 0.0
        times = [s[0] for s in self.samples]
        k = bisect.bisect_right(times, tod) - 1
        # before the first sample: previous day's last value
        return self.samples[k][1]

    def grid(self, t0: float, dt: float, n: int) -> np.ndarray:
        """Intensity at the midpoints of ``n`` consecutive intervals of width ``dt`` from ``t0``."""
        tod = (t0 + (np.arange(n) + 0.5) * dt) % DAY_S
        times = np.array([s[0] for s in self.samples])
        values = np.array([s[1] for s in self.samples])
        out = values[np.searchsorted(times, tod, side="right") - 1]
        if self.solar_window is not None:
            out[(tod >= self.solar_window[0]) & (tod < self.solar_window[1])] = 0.0
        return out

    @property
    def max_intensity(self) -> float:
        return max(s[1] for s in self.samples)


@dataclass(frozen=True)
class Topology:
    nodes: dict[str, ComputeNode]
    vms: dict[str, VirtualMachine]
    paths: dict[tuple[str, str], NetworkPath]
    traces: dict[str, CarbonTrace]
    epoch_length_s: float = 900.0
    sample_interval_s: float = 6.0
    start_time_s: float = 0.0
    device_slot: dict[str, str] = field(default_factory=dict)  # edge node -> its implicit VM

    @property
    def n_intervals(self) -> int:
        return int(round(self.epoch_length_s / self.sample_interval_s))

    def epoch_start(self, epoch: int) -> float:
        return self.start_time_s + epoch * self.epoch_length_s

    def host_of(self, vm_id: str) -> ComputeNode:
        return self.nodes[self.vms[vm_id].host_node]

    def layer_of_vm(self, vm_id: str) -> str:
        return self.host_of(vm_id).layer

    @property
    def edge_nodes(self) -> list[str]:
        return [n for n, node in self.nodes.items() if node.layer == "edge"]

    @property
    def shared_vms(self) -> list[str]:
        """Fog and cloud VMs, in build order."""
        return [v for v, vm in self.vms.items() if self.nodes[vm.host_node].layer != "edge"]

    def feasible_vms(self, device: str, mem_req_gb: float = 0.0) -> list[str]:
        """VMs a job from ``device`` may use: its own slot plus every fog/cloud VM with enough memory."""
        cand = [self.device_slot[device]] if device in self.device_slot else []
        cand += self.shared_vms
        return [v for v in cand if self.vms[v].mem_gb >= mem_req_gb]


# ---------------------------------------------------------------------------


def _req(d: Mapping, key: str, where: str) -> Any:
    if key not in d:
        raise SchemaError(f"{where}: missing field '{key}'")
    return d[key]


def _trace_from_dict(d: Mapping) -> CarbonTrace:
    tid = str(_req(d, "id", "carbon_traces[]"))
    samples = tuple((float(t), float(ci)) for t, ci in _req(d, "samples", f"carbon trace {tid}"))
    window = d.get("solar_window")
    trace = CarbonTrace(tid, samples, tuple(map(float, window)) if window else None)
    _check_trace(trace)
    return trace


def _check_trace(trace: CarbonTrace) -> None:
    if not trace.samples:
        raise InvariantViolation(f"carbon trace {trace.trace_id} has no samples")
    times = [s[0] for s in trace.samples]
    if times != sorted(times):
        raise InvariantViolation(f"carbon trace {trace.trace_id}: samples not sorted by time")
    if any(s[1] < 0 for s in trace.samples):
        raise InvariantViolation(f"carbon trace {trace.trace_id}: negative intensity")


def _hop(network: Mapping, name: str) -> tuple[float, float]:
    h = _req(network, name, "network")
    bw, delay = float(_req(h, "bandwidth_bps", f"network.{name}")), float(h.get("delay_s", 0.0))
    if bw <= 0 or delay < 0:
        raise InvariantViolation(f"network.{name}: bandwidth must be > 0 and delay >= 0")
    return bw, delay


def build_topology(config: Mapping) -> Topology:
    """Build an immutable :class:`Topology` from a configuration mapping.

    Device-to-datacenter paths aggregate their hops: bandwidth is the minimum
    hop bandwidth and propagation delay the sum of hop delays (WiFi+MAN to fog,
    WiFi+MAN+WAN to cloud).
    """
    traces = {t.trace_id: t for t in map(_trace_from_dict, _req(config, "carbon_traces", "topology"))}
    nodes: dict[str, ComputeNode] = {}
    vms: dict[str, VirtualMachine] = {}

    datacenters = _req(config, "datacenters", "topology")
    for dc in datacenters:
        dc_id = str(_req(dc, "id", "datacenters[]"))
        layer = _req(dc, "layer", f"datacenter {dc_id}")
        if layer not in ("fog", "cloud"):
            raise SchemaError(f"datacenter {dc_id}: layer must be 'fog' or 'cloud', got {layer!r}")
        trace_id = str(_req(dc, "carbon_trace", f"datacenter {dc_id}"))
        for k, srv in enumerate(_req(dc, "servers", f"datacenter {dc_id}")):
            where = f"datacenter {dc_id} server {k}"
            node = ComputeNode(
                node_id=str(srv.get("id", f"{dc_id}-s{k}")),
                layer=layer,
                cores=int(_req(srv, "cores", where)),
                mips_per_core=float(_req(srv, "mips_per_core", where)),
                mem_gb=float(_req(srv, "mem_gb", where)),
                storage_gb=float(srv.get("storage_gb", 0.0)),
                p_idle_w=float(_req(srv, "p_idle_w", where)),
                p_max_w=float(_req(srv, "p_max_w", where)),
                carbon_trace_id=trace_id,
                datacenter_id=dc_id,
            )
            nodes[node.node_id] = node
            for m, vd in enumerate(srv.get("vms", [])):
                vm = VirtualMachine(
                    vm_id=str(vd.get("id", f"{node.node_id}-v{m}")),
                    host_node=str(vd.get("host", node.node_id)),
                    cores=int(_req(vd, "cores", f"{where} vm {m}")),
                    mem_gb=float(vd.get("mem_gb", node.mem_gb)),
                )
                vms[vm.vm_id] = vm

    device_slot: dict[str, str] = {}
    edge = config.get("edge_devices", {"classes": []})
    regions = list(edge.get("regions", []))
    k = 0
    for cls in _req(edge, "classes", "edge_devices"):
        name = str(_req(cls, "name", "edge_devices.classes[]"))
        window = cls.get("solar_window")
        for _ in range(int(_req(cls, "count", f"edge class {name}"))):
            node_id = f"ed{k}"
            grid = regions[k % len(regions)] if regions else str(_req(cls, "carbon_trace", f"edge class {name}"))
            if grid not in traces:
                raise InvariantViolation(f"edge device {node_id}: unknown carbon trace '{grid}'")
            trace_id = grid
            if cls.get("zero_carbon", False):
                trace_id = "zero"
                traces.setdefault("zero", CarbonTrace("zero", ((0.0, 0.0),)))
            elif window:
                trace_id = f"{grid}+solar"
                if trace_id not in traces:
                    traces[trace_id] = CarbonTrace(trace_id, traces[grid].samples, (float(window[0]), float(window[1])))
            where = f"edge class {name}"
            nodes[node_id] = ComputeNode(
                node_id=node_id,
                layer="edge",
                cores=int(_req(cls, "cores", where)),
                mips_per_core=float(_req(cls, "mips_per_core", where)),
                mem_gb=float(cls.get("mem_gb", 4.0)),
                storage_gb=float(cls.get("storage_gb", 0.0)),
                p_idle_w=float(_req(cls, "p_idle_w", where)),
                p_max_w=float(_req(cls, "p_max_w", where)),
                carbon_trace_id=trace_id,
            )
            slot = f"{node_id}-slot"
            vms[slot] = VirtualMachine(slot, node_id, nodes[node_id].cores, nodes[node_id].mem_gb)
            device_slot[node_id] = slot
            k += 1

    network = config.get("network", {})
    paths: dict[tuple[str, str], NetworkPath] = {}
    if device_slot:
        hops = {"fog": ["wifi", "man"], "cloud": ["wifi", "man", "wan"]}
        for dc in datacenters:
            chain = [_hop(network, h) for h in hops[dc["layer"]]]
            bw = min(c[0] for c in chain)
            delay = sum(c[1] for c in chain)
            for dev in device_slot:
                paths[(dev, str(dc["id"]))] = NetworkPath(dev, str(dc["id"]), bw, delay)

    topo = Topology(
        nodes=nodes,
        vms=vms,
        paths=paths,
        traces=traces,
        epoch_length_s=float(config.get("epoch_length_s", 900.0)),
        sample_interval_s=float(config.get("sample_interval_s", 6.0)),
        start_time_s=float(config.get("start_time_s", 0.0)),
        device_slot=device_slot,
    )
    _check_topology(topo)
    return topo


def _check_topology(topo: Topology) -> None:
    if topo.epoch_length_s <= 0 or topo.sample_interval_s <= 0:
        raise InvariantViolation("epoch_length_s and sample_interval_s must be > 0")
    ratio = topo.epoch_length_s / topo.sample_interval_s
    if abs(ratio - round(ratio)) > 1e-9:
        raise InvariantViolation("epoch_length_s must be a multiple of sample_interval_s")
    for node in topo.nodes.values():
        if node.cores < 1 or node.mips_per_core <= 0:
            raise InvariantViolation(f"node {node.node_id}: cores >= 1 and mips_per_core > 0 required")
        if not 0 <= node.p_idle_w <= node.p_max_w:
            raise InvariantViolation(f"node {node.node_id}: need 0 <= p_idle_w <= p_max_w")
        if node.carbon_trace_id not in topo.traces:
            raise InvariantViolation(f"node {node.node_id}: unknown carbon trace '{node.carbon_trace_id}'")
    used: dict[str, int] = {}
    for vm in topo.vms.values():
        if vm.host_node not in topo.nodes:
            raise InvariantViolation(f"VM {vm.vm_id} references missing host '{vm.host_node}'")
        if vm.cores < 1:
            raise InvariantViolation(f"VM {vm.vm_id}: cores must be >= 1")
        used[vm.host_node] = used.get(vm.host_node, 0) + vm.cores
    for host, cores in used.items():
        if cores > topo.nodes[host].cores:
            raise InvariantViolation(
                f"VMs on {host} use {cores} cores but the host has {topo.nodes[host].cores}"
            )


def carbon_intensity(topology: Topology, node: str, t: float) -> float:
    """Carbon intensity (gCO2/kWh) at ``node`` for absolute time ``t`` seconds."""
    if node not in topology.nodes:
        raise UnknownNode(node)
    return topology.traces[topology.nodes[node].carbon_trace_id].at(t)


def path_for(topology: Topology, device: str, target_vm: str) -> NetworkPath | str:
    """Network path from an edge device to the datacenter hosting ``target_vm``, or ``LOCAL``."""
    node = topology.nodes.get(device)
    if node is None or node.layer != "edge":
        raise UnknownDevice(device)
    if target_vm not in topology.vms:
        raise UnknownVm(target_vm)
    host = topology.host_of(target_vm)
    if host.node_id == device:
        return LOCAL
    if host.datacenter_id is None:
        raise NoPath(f"{device} cannot reach VM {target_vm} on another edge device")
    try:
        return topology.paths[(device, host.datacenter_id)]
    except KeyError:
        raise NoPath(f"no path from {device} to datacenter {host.datacenter_id}") from None


# ---------------------------------------------------------------------------
# Configuration generation

# (cores, mips_per_core, p_idle_w, p_max_w, mem_gb) for dual-socket cloud
# servers and single-socket fog servers.
CLOUD_SKUS = {
    "xeon-platinum-8470": (104, 12160.0, 230.0, 800.0, 1024.0),
    "xeon-gold-6430": (64, 10500.0, 170.0, 600.0, 512.0),
    "xeon-silver-4410y": (24, 9000.0, 90.0, 300.0, 256.0),
}
FOG_SKUS = {
    "core-ultra-7": (16, 11000.0, 25.0, 120.0, 64.0),
    "xeon-d-1746ter": (10, 9500.0, 35.0, 110.0, 128.0),
    "xeon-gold-6430": (32, 10500.0, 90.0, 320.0, 256.0),
}

_FOG_BASE_CI = (180.0, 520.0, 300.0, 650.0, 240.0, 450.0, 350.0, 600.0)


def diurnal_trace(trace_id: str, base: float, solar_dip: float, evening_peak: float = 0.15) -> dict:
    """Hourly trace: grid base with a midday renewable dip and an evening peak."""
    samples = []
    for h in range(24):
        solar = max(0.0, math.sin(math.pi * (h - 6) / 12)) if 6 <= h <= 18 else 0.0
        peak = math.exp(-((h - 19) ** 2) / 8.0)
        samples.append([h * 3600, round(base * (1 - solar_dip * solar) * (1 + evening_peak * peak), 2)])
    return {"id": trace_id, "samples": samples}


def _split_vm_cores(rng: np.random.Generator, host_cores: int, n_vms: int) -> list[int]:
    if n_vms * 2 > host_cores:
        raise InvariantViolation(f"cannot fit {n_vms} VMs of >= 2 cores on a {host_cores}-core host")
    out = []
    remaining = host_cores
    for k in range(n_vms):
        left = n_vms - k - 1
        hi = min(12, remaining - 2 * left)
        c = int(rng.integers(2, hi + 1))
        out.append(c)
        remaining -= c
    return out


def _datacenter(rng, dc_id, layer, trace, skus, n_servers, n_vms) -> dict:
    names = list(skus)
    per_server = [n_vms // n_servers + (1 if s < n_vms % n_servers else 0) for s in range(n_servers)]
    servers = []
    for s in range(n_servers):
        cores, mips, p_idle, p_max, mem = skus[names[s % len(names)]]
        vm_cores = _split_vm_cores(rng, cores, per_server[s])
        vm_mem = mem / max(1, per_server[s])
        servers.append({
            "sku": names[s % len(names)],
            "cores": cores, "mips_per_core": mips, "p_idle_w": p_idle, "p_max_w": p_max,
            "mem_gb": mem, "storage_gb": 4 * mem,
            "vms": [{"cores": c, "mem_gb": round(vm_mem, 2)} for c in vm_cores],
        })
    return {"id": dc_id, "layer": layer, "carbon_trace": trace, "servers": servers}


def make_topology_config(
    n_edge: int = 500,
    n_fog: int = 4,
    fog_servers: int = 5,
    fog_vms: int = 20,
    cloud_servers: int = 20,
    cloud_vms: int = 88,
    seed: int = 0,
    start_time_s: float = 36000.0,
) -> dict:
    """Topology configuration with the default hardware/network mix at a chosen scale.

    Half the edge devices are phones (4 cores @ 2000 MIPS), half cameras
    (6 cores @ 2400 MIPS, solar from 06:00 to 18:00); both 3 W idle, 12 W peak.
    ``fog_vms`` and ``cloud_vms`` are per datacenter.
    """
    rng = np.random.default_rng(seed)
    traces = [diurnal_trace("grid-cloud", 380.0, 0.10)]
    traces += [diurnal_trace(f"grid-fog{k}", _FOG_BASE_CI[k % len(_FOG_BASE_CI)], 0.35) for k in range(n_fog)]
    dcs = [_datacenter(rng, "cdc0", "cloud", "grid-cloud", CLOUD_SKUS, cloud_servers, cloud_vms)]
    dcs += [_datacenter(rng, f"fdc{k}", "fog", f"grid-fog{k}", FOG_SKUS, fog_servers, fog_vms) for k in range(n_fog)]
    n_phone = n_edge // 2
    return {
        "epoch_length_s": 900,
        "sample_interval_s": 6,
        "start_time_s": start_time_s,
        "network": {
            "wifi": {"bandwidth_bps": 40e6, "delay_s": 0.002},
            "man": {"bandwidth_bps": 150e6, "delay_s": 0.005},
            "wan": {"bandwidth_bps": 100e6, "delay_s": 0.040},
        },
        "carbon_traces": traces,
        "datacenters": dcs,
        "edge_devices": {
            "regions": [f"grid-fog{k}" for k in range(max(1, n_fog))] if n_fog else ["grid-cloud"],
            "classes": [
                {"name": "phone", "count": n_phone, "cores": 4, "mips_per_core": 2000,
                 "p_idle_w": 3, "p_max_w": 12, "mem_gb": 6},
                {"name": "camera", "count": n_edge - n_phone, "cores": 6, "mips_per_core": 2400,
                 "p_idle_w": 3, "p_max_w": 12, "mem_gb": 4, "solar_window": [21600, 64800]},
            ],
        },
    }


def desk_topology_config(n_edge: int = 20, seed: int = 0) -> dict:
    """Small topology: 1 fog DC (2 servers / 4 VMs) and 1 cloud DC (2 servers / 8 VMs)."""
    return make_topology_config(n_edge=n_edge, n_fog=1, fog_servers=2, fog_vms=4,
                                cloud_servers=2, cloud_vms=8, seed=seed)


def default_topology_config() -> dict:
    """The bundled default configuration (1 CDC, 4 FDCs, 500 edge devices)."""
    text = resources.files("mersem.data").joinpath("default_topology.json").read_text()
    return json.loads(text)
