import copy

import pytest
from hypothesis import given, settings, strategies as st

from mersem.infra import (
    LOCAL, CarbonTrace, InvariantViolation, NoPath, SchemaError, UnknownDevice, UnknownNode, UnknownVm,
    build_topology, carbon_intensity, default_topology_config, desk_topology_config,
    make_topology_config, path_for,
)

from helpers import mini_config


@pytest.fixture(scope="module")
def default_topo():
    return build_topology(default_topology_config())


def test_default_topology_shape(default_topo):
    t = default_topo
    assert len(t.edge_nodes) == 500
    cloud_vms = [v for v in t.vms if t.layer_of_vm(v) == "cloud"]
    fog_vms = [v for v in t.vms if t.layer_of_vm(v) == "fog"]
    assert len(cloud_vms) == 88
    assert len(fog_vms) == 80
    assert len([n for n in t.nodes.values() if n.layer == "cloud"]) == 20
    assert len([n for n in t.nodes.values() if n.layer == "fog"]) == 20
    phones = [n for n in t.nodes.values() if n.layer == "edge" and n.cores == 4]
    cams = [n for n in t.nodes.values() if n.layer == "edge" and n.cores == 6]
    assert len(phones) == len(cams) == 250
    assert all(n.mips_per_core == 2000 for n in phones) and all(n.mips_per_core == 2400 for n in cams)
    assert all((n.p_idle_w, n.p_max_w) == (3, 12) for n in phones + cams)
    assert t.epoch_length_s == 900 and t.sample_interval_s == 6 and t.n_intervals == 150


def test_bundled_file_matches_generator():
    assert default_topology_config() == make_topology_config()


def test_paths_aggregate_hops(default_topo):
    t = default_topo
    cloud_vm = next(v for v in t.vms if t.layer_of_vm(v) == "cloud")
    fog_vm = next(v for v in t.vms if t.layer_of_vm(v) == "fog")
    pc = path_for(t, "ed1", cloud_vm)
    pf = path_for(t, "ed1", fog_vm)
    assert pc.bandwidth_bps == 40e6
    assert pc.prop_delay_s == pytest.approx(0.002 + 0.005 + 0.040)
    assert pf.bandwidth_bps == 40e6 and pf.prop_delay_s == pytest.approx(0.007)
    assert path_for(t, "ed1", "ed1-slot") == LOCAL


def test_path_errors(default_topo):
    t = default_topo
    with pytest.raises(UnknownDevice):
        path_for(t, "nope", "ed1-slot")
    with pytest.raises(UnknownVm):
        path_for(t, "ed1", "nope")
    with pytest.raises(NoPath):
        path_for(t, "ed1", "ed2-slot")


def test_path_total_over_feasible_pairs():
    t = build_topology(desk_topology_config())
    for dev in t.edge_nodes:
        for vm in t.feasible_vms(dev):
            path_for(t, dev, vm)


def test_carbon_intensity_examples():
    tr = CarbonTrace("flat", ((0.0, 400.0),))
    assert tr.at(0) == tr.at(12345.6) == tr.at(10 * 86400 + 7) == 400.0
    samples = ((0.0, 300.0), (36000.0, 200.0), (72000.0, 500.0))
    cam = CarbonTrace("cam", samples, (21600.0, 64800.0))
    assert cam.at(43200) == 0.0
    assert cam.at(80000) == 500.0  # last step starts at 72000
    assert cam.at(70000) == 200.0
    assert cam.at(3600) == 300.0


def test_camera_uses_solar_window(default_topo):
    t = default_topo
    cam = next(n for n, node in t.nodes.items() if node.layer == "edge" and node.cores == 6)
    phone = next(n for n, node in t.nodes.items() if node.layer == "edge" and node.cores == 4)
    assert carbon_intensity(t, cam, 43200) == 0.0
    assert carbon_intensity(t, phone, 43200) > 0.0
    with pytest.raises(UnknownNode):
        carbon_intensity(t, "nope", 0.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 10 * 86400, allow_nan=False))
def test_intensity_bounded(t):
    topo = build_topology(desk_topology_config())
    for node in list(topo.nodes)[:30]:
        ci = carbon_intensity(topo, node, t)
        assert 0.0 <= ci <= topo.traces[topo.nodes[node].carbon_trace_id].max_intensity


def test_grid_matches_pointwise_lookup():
    t = build_topology(desk_topology_config())
    for tid, tr in t.traces.items():
        g = tr.grid(80000.0, 6.0, 2000)
        for k in range(0, 2000, 37):
            assert g[k] == tr.at(80000.0 + (k + 0.5) * 6.0)


def test_minimal_config():
    cfg = mini_config()
    t = build_topology(cfg)
    assert len(t.nodes) == 2
    assert len(t.shared_vms) == 1
    assert set(t.vms) == {"f1-s0-v0", "ed0-slot"}


def test_invariant_violations():
    cfg = mini_config(fog_vms=(1,))
    cfg["datacenters"][0]["servers"][0]["vms"][0]["host"] = "ghost"
    with pytest.raises(InvariantViolation):
        build_topology(cfg)
    cfg = mini_config(fog_vms=(2, 2))
    cfg["datacenters"][0]["servers"][0]["cores"] = 3
    with pytest.raises(InvariantViolation):
        build_topology(cfg)
    cfg = mini_config()
    cfg["datacenters"][0]["servers"][0]["p_idle_w"] = 500.0
    with pytest.raises(InvariantViolation):
        build_topology(cfg)
    cfg = mini_config()
    del cfg["carbon_traces"]
    with pytest.raises(SchemaError):
        build_topology(cfg)
    cfg = mini_config()
    cfg["sample_interval_s"] = 7
    with pytest.raises(InvariantViolation):
        build_topology(cfg)


def test_build_deterministic():
    cfg = desk_topology_config(seed=4)
    a, b = build_topology(cfg), build_topology(copy.deepcopy(cfg))
    assert a == b
    assert list(a.nodes) == list(b.nodes) and list(a.vms) == list(b.vms)
