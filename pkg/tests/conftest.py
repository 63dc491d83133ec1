import numpy as np
import pytest

from v2xplace.model import (
    DEFAULT_SERVICES,
    ApplicationSpec,
    DelayParameters,
    EdgeServer,
    LatencyMatrix,
    ResourceVector,
    ServiceKind,
)
from v2xplace.solver import PlacementInstance


def random_instance(rng: np.random.Generator, n: int, n_apps: int | None = None,
                    thresholds: bool = True) -> PlacementInstance:
    """Small instance with random latencies, capacities, apps and thresholds."""
    n_apps = n_apps if n_apps is not None else int(rng.integers(1, 5))
    pool = rng.choice(3, size=min(3, n), replace=False)
    apps = []
    for a in range(n_apps):
        k = int(rng.integers(1, len(pool) + 1))
        req = frozenset(ServiceKind(int(u)) for u in rng.choice(pool, size=k, replace=False))
        apps.append(ApplicationSpec(f"A{a}", req, 1.0, float(rng.choice([90, 95, 99]))))
    proc = rng.uniform(1, 6, n)
    trans = rng.uniform(0, 8, (n, n))
    c = LatencyMatrix.from_components(proc, trans)
    params = DelayParameters(float(rng.uniform(0.5, 2)), float(rng.uniform(0.5, 2)))
    lo = params.d_com + params.d_dl + c.values.min()
    hi = params.d_com + params.d_dl + c.values.max()
    apps = [ApplicationSpec(a.name, a.required_services,
                            float(rng.uniform(lo, hi + 1)) if thresholds else 1e9,
                            a.reliability) for a in apps]
    servers = [EdgeServer(i, 400.0 * i,
                          ResourceVector(float(rng.integers(2, 9)), float(rng.integers(2, 9))))
               for i in range(n)]
    return PlacementInstance(servers, dict(DEFAULT_SERVICES), tuple(apps), c, params)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting --------------------------------------------------

_criteria: dict[int, list[tuple[str, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call" and not (call.when == "setup" and call.excinfo):
        return
    outcome = "FAIL" if call.excinfo is not None else "PASS"
    _criteria.setdefault(mark.args[0], []).append((item.name, outcome))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        parts = _criteria[n]
        ok = all(o == "PASS" for _, o in parts)
        failed = [name for name, o in parts if o != "PASS"]
        extra = f"  (failed: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"ACCEPTANCE criterion {n}: {'PASS' if ok else 'FAIL'}{extra}")
