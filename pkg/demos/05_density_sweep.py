"""
How traffic density moves mean delay
====================================

A zone with more than 20 vehicles nearby pays a logarithmic processing
penalty. We hold the placement fixed and raise the arrival rate.
"""

from v2xplace.config import ExperimentConfig
from v2xplace.evaluation import density_sweep
from v2xplace.mobility import TrafficScenario

cfg = ExperimentConfig.from_dict({})
inst = cfg.instance()
rates = [1200, 1500, 1800, 2100]
scenarios = [TrafficScenario(f"{r}vph", r, seed=cfg.seed, runs=3) for r in rates]

rep = density_sweep(scenarios, inst, "rdp", cfg.latency_model(), cfg.mobility(), cfg.bins)
print(f"{'app':4s}" + "".join(f"{n:>9s}" for n in rep.scenarios))
for app in rep.summaries[0].apps:
    print(f"{app:4s}" + "".join(f"{s[app].cross_run_mean:9.3f}" for s in rep.summaries))

print()
for (a, b), ch, top in zip(zip(rep.scenarios, rep.scenarios[1:]), rep.changes, rep.largest):
    pretty = ", ".join(f"{k} {100 * v:+.2f}%" for k, v in ch.items())
    print(f"{a} -> {b}: {pretty}  (largest: {top})")

# %%
# The penalty is additive and shared by every application of a vehicle,
# so applications with small means see the largest relative change.
