"""
Placing V2X services on a highway
=================================

Ten edge servers sit 400 m apart. Each hosts exactly one basic service
(CA, DEN or Media) next to its local dynamic map. We solve the placement
exactly, check it, and compare it with the utilization-driven baseline.
"""

from v2xplace.model import check_constraints, effective_capacity
from v2xplace.solver import brute_force_oracle, default_instance, solve_exact, solve_raa, solve_rdp

inst = default_instance()
print("servers:", inst.n_servers, "effective capacity:", effective_capacity(inst.servers[0]).as_tuple())
for app in inst.applications:
    kinds = "+".join(sorted(k.label for k in app.required_services))
    print(f"  {app.name:4s} needs {kinds:14s} within {app.delay_threshold:g} ms")

# %%
# The exact solver is a depth-first branch-and-bound. On the default
# instance it visits a few tens of thousands of nodes.
rdp = solve_rdp(inst)
print("\nRDP :", rdp.placement.labels(), "objective", rdp.objective,
      "nodes", rdp.nodes_explored)
print("thresholds relaxed:", rdp.relaxation_applied != inst.thresholds())
rep = check_constraints(rdp.placement, inst)
print("constraints ok:", rep.ok)

# %%
# The baseline only looks at how full each server gets, so it fills the
# road with Media and pays for it in delay.
raa = solve_raa(inst)
print("RAA :", raa.placement.labels(), "objective", raa.objective)
print("RAA delay violations:", len(check_constraints(raa.placement, inst).delay_violations))

# %%
# On a smaller road every assignment can be enumerated, which is how the
# exact solver is tested.
small = default_instance(n_servers=6)
ex, orc = solve_exact(small), brute_force_oracle(small)
print("\n6 servers: exact", ex.objective, "oracle", orc.objective,
      "same placement:", ex.placement == orc.placement)
