"""
Highway traffic
===============

Vehicles arrive as a Poisson stream, are dealt to two lanes in turn and
follow their leader with a gap-keeping rule. Here we look at one run.
"""

import numpy as np

from v2xplace.mobility import HEAVY, MODERATE, MobilityParams, generate_arrivals, neighbor_counts, simulate, zone_of
from v2xplace.model import highway_servers

mob = MobilityParams()
servers = highway_servers()

for sc in (MODERATE, HEAVY):
    counts = [len(generate_arrivals(sc, run)) for run in range(sc.runs)]
    print(f"{sc.name:8s} {sc.arrival_rate:g} veh/h: arrivals per run {counts}"
          f" (expected {sc.arrival_rate * sc.duration / 3600:g})")

# %%
# Snapshots every 10 s. After the road fills, the vehicle count settles.
frames = list(simulate(HEAVY, mob, run=0))
print("\nsnapshots:", len(frames))
for fr in frames[::25]:
    print(f"  t={fr.time:6.0f}s vehicles={len(fr):4d} mean speed={fr.speed.mean() if len(fr) else 0:5.1f} m/s")

# %%
# Smallest same-lane gap across the whole run.
gaps = [np.diff(np.sort(fr.position[fr.lane == ln])).min()
        for fr in frames for ln in range(mob.lane_count) if (fr.lane == ln).sum() > 1]
print(f"\nsmallest same-lane gap: {min(gaps):.3f} m (minimum allowed {mob.min_gap} m)")

# %%
# Vehicles per zone in the last snapshot, and the neighbour count over a
# zone and its two adjacent zones.
last = frames[-1]
zones = zone_of(last.position, servers)
print("vehicles per zone:", np.bincount(zones, minlength=len(servers)).tolist())
print("max neighbours (zone +-1):", int(neighbor_counts(zones, len(servers), 1).max()))
