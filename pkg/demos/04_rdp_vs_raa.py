"""
Delay-aware placement against a utilization baseline
====================================================

Both strategies see the same traffic and the same latency draws, so the
difference in violation rates is down to placement alone.
"""

from v2xplace.config import ExperimentConfig
from v2xplace.evaluation import compare_strategies

cfg = ExperimentConfig.from_dict({})
inst = cfg.instance()

for sc in cfg.scenarios():
    rep = compare_strategies(["rdp", "raa"], sc, inst, cfg.latency_model(), cfg.mobility(), cfg.bins)
    mean, viol = rep.table("cross_run_mean"), rep.table("violation_rate")
    print(f"\n{sc.name} ({sc.arrival_rate:g} veh/h)")
    print(f"{'app':4s} {'rdp mean':>9s} {'raa mean':>9s} {'rdp viol':>9s} {'raa viol':>9s}")
    for app in mean:
        print(f"{app:4s} {mean[app]['rdp']:9.2f} {mean[app]['raa']:9.2f}"
              f" {viol[app]['rdp']:9.3f} {viol[app]['raa']:9.3f}")
    for name, o in rep.outcomes.items():
        print(f"  {name}: {o.result.placement.labels()}")
