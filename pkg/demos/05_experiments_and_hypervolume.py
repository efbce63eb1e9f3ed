# %% [markdown]
# # Seeds, summaries and hypervolume
#
# The experiment layer runs scenarios across seeds and writes CSV reports;
# the same thing is available as `mersem run` / `mersem sweep`.

# %%
from mersem import experiment as ex
from mersem.metrics import confidence_interval, hypervolume

print(hypervolume([(0.5, 0.5)], (1, 1)), hypervolume([(0.2, 0.8), (0.8, 0.2)], (1, 1)))
print("mean, 95% half-width:", confidence_interval([1, 2, 3]))

# %%
config, base = ex.load_config(preset="desk")
ex.set_path(config, "optimizer.generations", 10)
seeds = [0, 1, 2]
outputs = ex.run_seeds(config, base, seeds)
tables = ex.run_results(outputs, config, ex.VARIANTS)
for row in tables["summary"]:
    print(f"{row['variant']:9s} SLA {row['sla_rate_mean']:.3f} ± {row['sla_rate_ci']:.3f}  "
          f"CO2 {row['co2_g_mean']:.2f} ± {row['co2_g_ci']:.2f}  PHV {row['phv_mean']:.3f}")
