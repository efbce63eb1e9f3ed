# %% [markdown]
# # Infrastructure and carbon intensity
#
# The bundled topology has 500 edge devices, four fog datacenters and one
# cloud datacenter. Every fog/cloud datacenter follows a diurnal grid
# trace; cameras drop to zero while their solar window is open.

# %%
import numpy as np

from mersem.infra import LOCAL, build_topology, carbon_intensity, default_topology_config, path_for

topo = build_topology(default_topology_config())
layers = {}
for node in topo.nodes.values():
    layers[node.layer] = layers.get(node.layer, 0) + 1
print("nodes per layer:", layers)
print("VMs per layer:  ", {l: sum(topo.layer_of_vm(v) == l for v in topo.vms) for l in ("edge", "fog", "cloud")})

# %% [markdown]
# Paths aggregate hops: the slowest link sets the bandwidth, delays add up.

# %%
fog_vm = next(v for v in topo.vms if topo.layer_of_vm(v) == "fog")
cloud_vm = next(v for v in topo.vms if topo.layer_of_vm(v) == "cloud")
for vm in ("ed0-slot", fog_vm, cloud_vm):
    p = path_for(topo, "ed0", vm)
    print(f"ed0 -> {vm:12s}", "local" if p == LOCAL else f"{p.bandwidth_bps / 1e6:.0f} Mbps, {p.prop_delay_s * 1e3:.0f} ms")

# %% [markdown]
# Intensity over one day for a fog site, the cloud, a phone and a camera.

# %%
phone, camera = "ed0", "ed250"
fog_host = topo.host_of(fog_vm).node_id
cloud_host = topo.host_of(cloud_vm).node_id
print(" hour   fog  cloud  phone camera")
for h in range(0, 24, 3):
    t = h * 3600.0
    row = [carbon_intensity(topo, n, t) for n in (fog_host, cloud_host, phone, camera)]
    print(f"{h:5d} " + " ".join(f"{v:6.0f}" for v in row))
print("daily mean (cloud):", np.mean([carbon_intensity(topo, cloud_host, t) for t in range(0, 86400, 600)]))
