# %% [markdown]
# # Memetic search with RL-guided local search
#
# Each individual carries a weight vector over (SLA rate, CO2). Every
# generation refines the fittest individuals with a Q-learning agent that
# picks how many jobs to re-place, then breeds offspring. A Pareto archive
# collects the trade-off front.

# %%
from mersem.infra import build_topology, desk_topology_config
from mersem.optimizer import MersemParams, run_epoch
from mersem.rlsearch import QTable
from mersem.simkernel import EpochProblem
from mersem.workload import generate_synthetic

topo = build_topology(desk_topology_config())
trace = generate_synthetic("mixed", 100, 1, seed=0, origin_devices=topo.edge_nodes)
problem = EpochProblem(trace.jobs(0), topo, 0)

q = QTable()
result = run_epoch(problem, MersemParams(population=20, generations=30), seed=0, qtable=q)
for h in result.history[::5]:
    print(f"gen {h['generation']:2d}  archive {h['archive_size']:2d}  HV {h['hv']:.3f}  evals {h['evaluations']}")

# %% [markdown]
# The front and the three named picks.

# %%
for p in sorted(result.archive.points):
    print(f"  SLA {p.sla_rate:.2f}  CO2 {p.co2_g:.2f} g")
for name, sol in result.solutions.items():
    print(f"MERSEM-{name:8s}", sol.objectives)

# %% [markdown]
# What the agent learned: the greedy action per visited state.

# %%
from mersem.rlsearch import ACTION_FRACTIONS

picks = [ACTION_FRACTIONS[int(row.argmax())] for _, row in q.items()]
print(len(q), "states visited; greedy re-placement fractions:",
      {f: picks.count(f) for f in ACTION_FRACTIONS})
