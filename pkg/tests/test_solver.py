import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import random_instance
from v2xplace.model import (
    DEFAULT_APPLICATIONS,
    DEFAULT_SERVICES,
    ApplicationSpec,
    DelayParameters,
    LatencyMatrix,
    NoHostError,
    Placement,
    ServiceKind,
    application_delay,
    check_constraints,
    highway_servers,
)
from v2xplace.solver import (
    PlacementInstance,
    SearchBudgetExceeded,
    brute_force_oracle,
    default_instance,
    objective,
    solve_exact,
    solve_raa,
    solve_rdp,
    utilization,
)

CA, DEN, MEDIA = ServiceKind.CA, ServiceKind.DEN, ServiceKind.MEDIA
APPS = {a.name: a for a in DEFAULT_APPLICATIONS}


def make(n, apps, c=None, params=None, **kw):
    return PlacementInstance(highway_servers(n, **kw), dict(DEFAULT_SERVICES), tuple(apps),
                             c or LatencyMatrix.expected(n), params or DelayParameters())


def test_objective_two_servers_es():
    inst = make(2, [APPS["ES"]])
    # zone 0 reaches DEN on server 1: 1 + 7 + 1; zone 1 is local: 1 + 4 + 1
    assert objective(Placement((CA, DEN)), inst) == 9 + 6


def test_objective_service_everywhere():
    app = ApplicationSpec("X", frozenset({CA}), 50, 90)
    inst = make(4, [app])
    assert objective(Placement((CA,) * 4), inst) == 4 * (1 + 4 + 1)


def test_objective_symmetry():
    c = LatencyMatrix(np.array([[4, 7, 7], [7, 4, 7], [7, 7, 4.0]]))
    inst = make(3, DEFAULT_APPLICATIONS, c)
    assert objective(Placement((CA, DEN, MEDIA)), inst) == objective(Placement((DEN, CA, MEDIA)), inst)


def test_objective_requires_coverage():
    with pytest.raises(NoHostError):
        objective(Placement((CA, CA, DEN)), make(3, DEFAULT_APPLICATIONS))


def test_objective_matches_scalar_path(rng):
    inst = random_instance(rng, 5)
    pl = Placement((CA, DEN, MEDIA, CA, DEN))
    expected = math.fsum(application_delay(pl, inst.latency, z, a, inst.params)
                         for z in inst.evaluation_positions for a in inst.applications)
    assert objective(pl, inst) == pytest.approx(expected, rel=1e-15)


def test_exact_two_servers_hand_enumeration():
    # C[i][j]: row 0 = (4, 6), row 1 = (8, 3)
    c = LatencyMatrix(np.array([[4.0, 6.0], [8.0, 3.0]]))
    inst = make(2, [APPS["PSW"], APPS["PL"]], c)
    # only (CA, DEN) and (DEN, CA) cover PSW:
    #   (CA, DEN): PSW 8 + 10, PL 6 + 10 -> 34
    #   (DEN, CA): PSW 8 + 10, PL 8 + 5  -> 31
    res = solve_exact(inst)
    assert res.placement == Placement((DEN, CA))
    assert res.objective == 31


def test_exact_infinite_thresholds_never_infeasible(rng):
    for _ in range(10):
        inst = random_instance(rng, 4)
        inf = {a.name: math.inf for a in inst.applications}
        if solve_raa(inst).feasible:
            assert solve_exact(inst, inf).feasible


def test_exact_matches_oracle_on_default_instance():
    inst = default_instance()
    ex, orc = solve_exact(inst), brute_force_oracle(inst)
    assert ex.objective == orc.objective
    assert ex.placement == orc.placement


def test_exact_matches_oracle_per_hop_instance():
    inst = default_instance(per_hop=True)
    ex, orc = solve_exact(inst), brute_force_oracle(inst)
    assert (ex.objective, ex.placement) == (orc.objective, orc.placement)


def test_exact_matches_oracle_randomized(rng):
    for _ in range(100):
        inst = random_instance(rng, int(rng.integers(2, 7)))
        ex, orc = solve_exact(inst), brute_force_oracle(inst)
        assert ex.feasible == orc.feasible
        if ex.feasible:
            assert ex.objective == orc.objective
            assert ex.placement == orc.placement


def test_returned_placements_satisfy_constraints(rng):
    for _ in range(30):
        inst = random_instance(rng, 4)
        res = solve_rdp(inst)
        if res.feasible:
            assert check_constraints(res.placement, inst, res.relaxation_applied).ok
            assert res.objective == objective(res.placement, inst)


def test_exact_impossible_thresholds():
    inst = default_instance()
    res = solve_exact(inst, {a.name: 1e-6 for a in inst.applications})
    assert not res.feasible and res.objective == math.inf


def test_exact_budget_guard():
    with pytest.raises(SearchBudgetExceeded):
        solve_exact(default_instance(), max_nodes=50)


def test_rdp_equals_exact_when_feasible():
    inst = default_instance()
    rdp, ex = solve_rdp(inst), solve_exact(inst)
    assert rdp.placement == ex.placement and rdp.objective == ex.objective
    assert rdp.relaxation_applied == inst.thresholds()
    assert rdp.solver_tag == "RDP"


def test_rdp_relaxes_by_reliability():
    es = APPS["ES"]
    # best case ES delay is 1 + 8.3 + 1 = 10.3 ms: above 10, below 10 / 0.95
    c = LatencyMatrix(np.array([[8.3, 9.0], [9.0, 8.3]]))
    inst = make(2, [es], c)
    assert not solve_exact(inst).feasible
    res = solve_rdp(inst)
    assert res.feasible
    assert res.relaxation_applied["ES"] == pytest.approx(10 / 0.95)
    assert res.relaxation_applied["ES"] == pytest.approx(10.526315789, abs=1e-9)
    assert res.placement == Placement((DEN, DEN))


def test_rdp_infeasible_both_passes():
    c = LatencyMatrix(np.array([[20.0, 21.0], [21.0, 20.0]]))
    res = solve_rdp(make(2, [APPS["ES"]], c))
    assert not res.feasible and res.solver_tag == "RDP"


def test_rdp_thresholds_never_tighter(rng):
    for _ in range(20):
        inst = random_instance(rng, 3)
        res = solve_rdp(inst)
        for a in inst.applications:
            assert res.relaxation_applied[a.name] >= a.delay_threshold


def _raa_by_enumeration(inst):
    """Max utilization over coverage- and capacity-feasible assignments."""
    from v2xplace.model import required_kinds
    need = required_kinds(inst.applications)
    fits = inst.fits()
    best, arg = None, None
    for combo in itertools.product(list(ServiceKind), repeat=inst.n_servers):
        if not all(fits[n, k] for n, k in enumerate(combo)) or not need <= set(combo):
            continue
        u = utilization(Placement(combo), inst)
        if best is None or u > best:
            best, arg = u, combo
    return best, arg


def test_raa_three_servers():
    inst = make(3, DEFAULT_APPLICATIONS)
    res = solve_raa(inst)
    assert res.placement == Placement((CA, DEN, MEDIA))
    # (2/4 + 2/6)/2 + (2/4 + 4/6)/2 + (4/4 + 6/6)/2
    assert utilization(res.placement, inst) == Fraction(5, 12) + Fraction(7, 12) + 1


def test_raa_default_is_media_heavy():
    res = solve_raa(default_instance())
    assert res.placement.assignment == (CA, DEN) + (MEDIA,) * 8


def test_raa_single_server_forced():
    app = ApplicationSpec("X", frozenset({CA}), 10, 90)
    res = solve_raa(make(1, [app]))
    assert res.placement == Placement((CA,))


def test_raa_matches_enumeration(rng):
    for _ in range(30):
        inst = random_instance(rng, int(rng.integers(1, 6)))
        res = solve_raa(inst)
        best, arg = _raa_by_enumeration(inst)
        assert res.feasible == (best is not None)
        if best is not None:
            assert utilization(res.placement, inst) == best
            assert res.placement == Placement(arg)


def test_raa_dominated_by_exact(rng):
    for _ in range(30):
        inst = random_instance(rng, 4, thresholds=False)
        raa, ex = solve_raa(inst), solve_exact(inst)
        if raa.feasible:
            assert raa.objective >= ex.objective
            assert utilization(raa.placement, inst) >= utilization(ex.placement, inst)


def test_oracle_empty_applications():
    inst = make(3, [])
    res = brute_force_oracle(inst)
    assert res.objective == 0 and res.placement == Placement((CA, CA, CA))
    assert solve_exact(inst).placement == res.placement


def test_oracle_small_count():
    res = brute_force_oracle(make(6, DEFAULT_APPLICATIONS))
    assert res.nodes_explored == 3 ** 6


def test_oracle_size_cap():
    with pytest.raises(SearchBudgetExceeded):
        brute_force_oracle(default_instance(), cap=1000)


def test_deterministic_results():
    a, b = solve_rdp(default_instance()), solve_rdp(default_instance())
    assert a == b
