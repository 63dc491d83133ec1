import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from v2xplace.model import (
    DEFAULT_APPLICATIONS,
    DEFAULT_SERVICES,
    ApplicationSpec,
    DelayParameters,
    EdgeServer,
    LatencyMatrix,
    NoHostError,
    Placement,
    ResourceVector,
    ServiceKind,
    application_delay,
    check_constraints,
    density_adjusted_processing,
    effective_capacity,
    highway_servers,
    service_delay,
)
from v2xplace.solver import PlacementInstance

CA, DEN, MEDIA = ServiceKind.CA, ServiceKind.DEN, ServiceKind.MEDIA
APPS = {a.name: a for a in DEFAULT_APPLICATIONS}
P = DelayParameters()


def test_service_kinds_dense():
    assert [int(k) for k in ServiceKind] == [0, 1, 2]
    assert ServiceKind.parse("media") is MEDIA
    assert MEDIA.label == "Media"


def test_default_catalogs():
    assert {k: s.demand.as_tuple() for k, s in DEFAULT_SERVICES.items()} == {
        CA: (2, 2), DEN: (2, 4), MEDIA: (4, 6)}
    table = {a.name: (set(a.required_services), a.delay_threshold, a.reliability)
             for a in DEFAULT_APPLICATIONS}
    assert table == {
        "PL": ({CA}, 50, 90), "SSM": ({CA, DEN, MEDIA}, 20, 90), "ES": ({DEN}, 10, 95),
        "PSW": ({CA, DEN}, 20, 95), "FCW": ({CA, DEN}, 10, 95)}


@pytest.mark.parametrize("ldm, reserve, expected", [
    ((4, 2), (0, 0), (4, 6)),
    ((0, 0), (0, 0), (8, 8)),
    ((4, 2), (2, 2), (2, 4)),
])
def test_effective_capacity(ldm, reserve, expected):
    srv = EdgeServer(0, 0.0, ResourceVector(8, 8), ResourceVector(*ldm), ResourceVector(*reserve))
    assert effective_capacity(srv).as_tuple() == expected


def test_media_does_not_fit_with_reserve():
    srv = EdgeServer(0, 0.0, ResourceVector(8, 8), ResourceVector(4, 2), ResourceVector(2, 2))
    assert not DEFAULT_SERVICES[MEDIA].demand.fits_in(effective_capacity(srv))


def test_negative_effective_capacity_rejected():
    with pytest.raises(ValueError):
        EdgeServer(0, 0.0, ResourceVector(4, 4), ResourceVector(4, 2), ResourceVector(1, 0))


def test_servers_uniform():
    srv = highway_servers()
    assert len(srv) == 10
    assert np.allclose(np.diff([s.position for s in srv]), 400.0)


@pytest.mark.parametrize("nc, expected", [
    (20, 4.0),
    (5, 4.0),
    (200, 4.0 + math.log(10.0)),
])
def test_density_adjusted_processing(nc, expected):
    assert density_adjusted_processing(4.0, nc, P) == pytest.approx(expected, abs=1e-12)


def test_density_penalty_base_configurable():
    p10 = DelayParameters(density_penalty_base=10.0)
    assert density_adjusted_processing(4.0, 200, p10) == pytest.approx(5.0)


@given(st.floats(0.1, 50), st.integers(0, 20))
def test_no_penalty_below_reference(base, nc):
    assert density_adjusted_processing(base, nc, P) == base


@given(st.floats(0.1, 50), st.integers(21, 500))
def test_penalty_strictly_increasing_beyond_reference(base, nc):
    assert density_adjusted_processing(base, nc + 1, P) > density_adjusted_processing(base, nc, P)


def _c(values):
    return LatencyMatrix(np.array(values, dtype=float))


def test_latency_matrix_invariants():
    c = LatencyMatrix.expected(3)
    assert np.array_equal(c.values, [[4, 7, 7], [7, 4, 7], [7, 7, 4]])
    with pytest.raises(ValueError):
        _c([[4, 3], [7, 4]])
    with pytest.raises(ValueError):
        _c([[0, 3], [7, 4]])


def test_latency_per_hop():
    c = LatencyMatrix.expected(4, per_hop=True)
    assert c[0, 3] == 4 + 3 * 3
    assert c[2, 1] == 7


def test_service_delay_local():
    c = LatencyMatrix.expected(3)
    pl = Placement((DEN, CA, DEN))
    assert service_delay(pl, c, 1, CA) == 4


def test_service_delay_remote():
    c = LatencyMatrix.expected(3)
    pl = Placement((MEDIA, CA, DEN))
    assert service_delay(pl, c, 1, DEN) == 7


def test_service_delay_min_over_hosts():
    c = _c([[4, 7, 7, 7], [6, 4, 8, 9], [7, 7, 4, 7], [7, 7, 7, 4]])
    pl = Placement((DEN, CA, CA, DEN))
    assert service_delay(pl, c, 1, DEN) == 6


def test_service_delay_no_host():
    with pytest.raises(NoHostError):
        service_delay(Placement((CA, CA)), LatencyMatrix.expected(2), 0, DEN)


def test_application_delay_psw():
    c = LatencyMatrix.expected(3)
    pl = Placement((MEDIA, CA, DEN))
    assert application_delay(pl, c, 1, APPS["PSW"], P) == 1 + 7 + 1


def test_application_delay_single_service():
    app = ApplicationSpec("X", frozenset({CA}), 10, 90)
    assert application_delay(Placement((CA, DEN)), LatencyMatrix.expected(2), 0, app, P) == 6


def test_application_delay_gamma_scales_latency():
    c = LatencyMatrix.expected(2)
    p = DelayParameters(density_factor=2.0)
    assert application_delay(Placement((CA, DEN)), c, 0, APPS["ES"], p) == 1 + 14 + 1


def test_psw_fcw_identical():
    c = LatencyMatrix.expected(4)
    pl = Placement((CA, MEDIA, DEN, CA))
    for z in range(4):
        assert (application_delay(pl, c, z, APPS["PSW"], P)
                == application_delay(pl, c, z, APPS["FCW"], P))


def _instance(placement_len=3, apps=DEFAULT_APPLICATIONS, latency=None, reserve=(0, 0)):
    servers = highway_servers(placement_len, migration_reserve=ResourceVector(*reserve))
    return PlacementInstance(servers, dict(DEFAULT_SERVICES), tuple(apps),
                             latency or LatencyMatrix.expected(placement_len))


def test_check_constraints_media_fits_exactly():
    inst = _instance()
    rep = check_constraints(Placement((CA, DEN, MEDIA)), inst)
    assert rep.resources_ok and rep.coverage_ok and rep.one_service_per_server


def test_check_constraints_capacity_violation():
    inst = _instance(reserve=(2, 4))
    rep = check_constraints(Placement((CA, DEN, MEDIA)), inst)
    assert (1, DEN) in rep.capacity_violations
    assert (0, CA) not in rep.capacity_violations


@pytest.mark.parametrize("c_remote, ok", [(7.5, True), (8.5, False)])
def test_check_constraints_delay(c_remote, ok):
    es = APPS["ES"]
    c = _c([[4, c_remote], [c_remote, 4]])
    inst = _instance(2, [es], c)
    rep = check_constraints(Placement((CA, DEN)), inst)
    # zone 0 needs DEN from server 1: 1 + c_remote + 1, i.e. 9.5 or 10.5 ms
    assert rep.delays_ok is ok
    if not ok:
        assert rep.delay_violations[0].delay == pytest.approx(10.5)


def test_check_constraints_reports_missing_coverage():
    rep = check_constraints(Placement((CA, CA, CA)), _instance())
    assert rep.missing_services == {DEN, MEDIA}
    assert not rep.ok


def test_relaxed_thresholds_override():
    es = APPS["ES"]
    inst = _instance(2, [es], _c([[4, 8.5], [8.5, 4]]))
    rep = check_constraints(Placement((CA, DEN)), inst, {"ES": 10.6})
    assert rep.delays_ok


# -- properties ------------------------------------------------------------

placements = st.lists(st.sampled_from(list(ServiceKind)), min_size=3, max_size=6)


@st.composite
def latency_matrices(draw, n):
    proc = draw(st.lists(st.floats(1, 10), min_size=n, max_size=n))
    trans = draw(st.lists(st.lists(st.floats(0, 10), min_size=n, max_size=n),
                          min_size=n, max_size=n))
    return LatencyMatrix.from_components(proc, trans)


@settings(max_examples=60)
@given(st.data())
def test_superset_apps_are_slower(data):
    kinds = data.draw(placements)
    pl = Placement(tuple(kinds))
    c = data.draw(latency_matrices(len(kinds)))
    present = sorted(set(kinds))
    sub = frozenset(data.draw(st.lists(st.sampled_from(present), min_size=1, unique=True)))
    extra = frozenset(data.draw(st.lists(st.sampled_from(present), unique=True)))
    small = ApplicationSpec("a", sub, 10, 90)
    big = ApplicationSpec("b", sub | extra, 10, 90)
    z = data.draw(st.integers(0, len(kinds) - 1))
    assert application_delay(pl, c, z, big, P) >= application_delay(pl, c, z, small, P)


@settings(max_examples=60)
@given(st.data())
def test_extra_replica_never_slower(data):
    kinds = data.draw(placements)
    c = data.draw(latency_matrices(len(kinds) + 1))
    kind = data.draw(st.sampled_from(sorted(set(kinds))))
    before = Placement(tuple(kinds) + (MEDIA if kind != MEDIA else CA,))
    after = Placement(tuple(kinds) + (kind,))
    for z in range(len(after)):
        assert service_delay(after, c, z, kind) <= service_delay(before, c, z, kind)


def test_removing_every_replica_raises():
    app = APPS["FCW"]
    c = LatencyMatrix.expected(3)
    assert math.isfinite(application_delay(Placement((CA, DEN, CA)), c, 2, app, P))
    with pytest.raises(NoHostError):
        application_delay(Placement((CA, MEDIA, CA)), c, 2, app, P)
