"""Placement solvers: exact branch-and-bound, RDP, RAA and a brute-force oracle."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .model import (
    DEFAULT_APPLICATIONS,
    DEFAULT_SERVICES,
    ApplicationSpec,
    DelayParameters,
    EdgeServer,
    LatencyMatrix,
    NoHostError,
    Placement,
    ServiceKind,
    ServiceSpec,
    check_constraints,
    effective_capacity,
    highway_servers,
    required_kinds,
    thresholds_of,
)

KINDS = tuple(ServiceKind)


class SearchBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class PlacementInstance:
    servers: tuple[EdgeServer, ...]
    services: Mapping[ServiceKind, ServiceSpec]
    applications: tuple[ApplicationSpec, ...]
    latency: LatencyMatrix
    params: DelayParameters = field(default_factory=DelayParameters)
    evaluation_positions: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "servers", tuple(self.servers))
        object.__setattr__(self, "applications", tuple(self.applications))
        n = len(self.servers)
        if self.latency.size != n:
            raise ValueError(f"latency matrix is {self.latency.size}x{self.latency.size} "
                             f"but there are {n} servers")
        if [s.id for s in self.servers] != list(range(n)):
            raise ValueError("server ids must be 0..N-1 in order")
        need = required_kinds(self.applications)
        if n < len(need):
            raise ValueError(f"{n} servers cannot cover {len(need)} required services")
        absent = [k.label for k in need if k not in self.services]
        if absent:
            raise ValueError(f"service catalog lacks {absent}")
        names = [a.name for a in self.applications]
        if len(set(names)) != len(names):
            raise ValueError("application names must be unique")
        if self.evaluation_positions is None:
            object.__setattr__(self, "evaluation_positions", tuple(range(n)))
        else:
            pos = tuple(int(z) for z in self.evaluation_positions)
            if any(not 0 <= z < n for z in pos):
                raise ValueError("evaluation positions must be server ids")
            object.__setattr__(self, "evaluation_positions", pos)

    @property
    def n_servers(self) -> int:
        return len(self.servers)

    def thresholds(self) -> dict[str, float]:
        return thresholds_of(self.applications)

    def fits(self) -> np.ndarray:
        """``fits[n, u]``: service kind ``u`` fits on server ``n``."""
        out = np.zeros((self.n_servers, len(KINDS)), dtype=bool)
        for s in self.servers:
            cap = effective_capacity(s)
            for u in KINDS:
                if u in self.services:
                    out[s.id, u] = self.services[u].demand.fits_in(cap)
        return out

    def app_mask(self) -> np.ndarray:
        """``mask[a, u]``: application ``a`` needs kind ``u``."""
        mask = np.zeros((len(self.applications), len(KINDS)), dtype=bool)
        for a, app in enumerate(self.applications):
            for u in app.required_services:
                mask[a, u] = True
        return mask

    def zone_rows(self) -> np.ndarray:
        """Density-scaled latency rows of the reference zones, ``Z x N``."""
        rows = self.params.density_factor * self.latency.values
        return rows[list(self.evaluation_positions)]


def default_instance(n_servers: int = 10, spacing: float = 400.0,
                     applications: Sequence[ApplicationSpec] = DEFAULT_APPLICATIONS,
                     params: DelayParameters | None = None,
                     per_hop: bool = False, **server_kw) -> PlacementInstance:
    """The reference highway: default catalogs and expected latencies."""
    servers = highway_servers(n_servers, spacing, **server_kw)
    return PlacementInstance(
        servers, dict(DEFAULT_SERVICES), tuple(applications),
        LatencyMatrix.expected(n_servers, per_hop=per_hop),
        params or DelayParameters())


@dataclass(frozen=True)
class SolveResult:
    placement: Placement | None
    objective: float
    solver_tag: str
    relaxation_applied: dict[str, float]
    nodes_explored: int = 0

    @property
    def feasible(self) -> bool:
        return self.placement is not None


def _term_table(assign: np.ndarray, rows: np.ndarray, mask: np.ndarray,
                params: DelayParameters) -> np.ndarray:
    """Per (zone, application) delays for one complete assignment."""
    serv = np.empty((rows.shape[0], len(KINDS)))
    for u in KINDS:
        hosted = assign == u
        serv[:, u] = rows[:, hosted].min(axis=1) if hosted.any() else np.inf
    slowest = np.where(mask[None, :, :], serv[:, None, :], -np.inf).max(axis=2)
    return params.d_com + slowest + params.d_dl


def objective(placement: Placement, instance: PlacementInstance) -> float:
    """Summed application delay over reference zones and applications."""
    missing = placement.missing(required_kinds(instance.applications))
    if missing:
        raise NoHostError(f"no server hosts {sorted(k.label for k in missing)}")
    if not instance.applications:
        return 0.0
    terms = _term_table(placement.as_array(), instance.zone_rows(),
                        instance.app_mask(), instance.params)
    return math.fsum(terms.ravel().tolist())


def _threshold_vector(instance: PlacementInstance, thresholds) -> np.ndarray:
    thresholds = instance.thresholds() if thresholds is None else thresholds
    return np.array([float(thresholds[a.name]) for a in instance.applications])


def _infeasible(tag: str, thresholds: Mapping[str, float], nodes: int = 0) -> SolveResult:
    return SolveResult(None, math.inf, tag, dict(thresholds), nodes)


def solve_exact(instance: PlacementInstance, thresholds: Mapping[str, float] | None = None,
                max_nodes: int = 5_000_000, tag: str = "Exact") -> SolveResult:
    """Global minimiser of the summed delay under delay, resource, one-per-server
    and coverage constraints.

    Depth-first branch-and-bound over servers in index order, children in
    kind order, so the first optimum found is the lexicographically smallest.
    The bound replaces every unassigned server by "hosts whatever helps this
    zone most", which can only lower each min-over-hosts term.
    """
    thresholds = dict(instance.thresholds() if thresholds is None else thresholds)
    thr = _threshold_vector(instance, thresholds)
    n = instance.n_servers
    fits = instance.fits()
    mask = instance.app_mask()
    rows = instance.zone_rows()
    params = instance.params
    need = sorted(required_kinds(instance.applications))

    # suffix[d][z, u]: best latency from zone z to any server >= d able to host u
    suffix = np.full((n + 1, rows.shape[0], len(KINDS)), np.inf)
    for d in range(n - 1, -1, -1):
        cand = np.where(fits[d][None, :], rows[:, d][:, None], np.inf)
        suffix[d] = np.minimum(suffix[d + 1], cand)
    # can_host_later[d, u]: some server >= d can host u
    can_host_later = np.zeros((n + 1, len(KINDS)), dtype=bool)
    for d in range(n - 1, -1, -1):
        can_host_later[d] = can_host_later[d + 1] | fits[d]

    assign = np.zeros(n, dtype=np.int64)
    best_obj = math.inf
    best_assign: np.ndarray | None = None
    nodes = 0

    def recurse(depth: int, best_here: np.ndarray, counts: np.ndarray):
        nonlocal best_obj, best_assign, nodes
        nodes += 1
        if nodes > max_nodes:
            raise SearchBudgetExceeded(f"exceeded {max_nodes} search nodes")
        missing = [u for u in need if counts[u] == 0]
        if len(missing) > n - depth or any(not can_host_later[depth, u] for u in missing):
            return
        if mask.size and rows.shape[0]:
            lb_serv = np.minimum(best_here, suffix[depth])
            lb = params.d_com + np.where(mask[None], lb_serv[:, None, :], -np.inf).max(axis=2) \
                + params.d_dl
            if np.any(lb > thr[None, :]):
                return
            # ties cannot displace the incumbent, which is lexicographically earlier
            if math.fsum(lb.ravel().tolist()) >= best_obj:
                return
        if depth == n:
            if mask.size:
                terms = _term_table(assign, rows, mask, params)
                if np.any(terms > thr[None, :]):
                    return
                obj = math.fsum(terms.ravel().tolist())
            else:
                obj = 0.0
            if obj < best_obj:
                best_obj, best_assign = obj, assign.copy()
            return
        col = rows[:, depth]
        for u in KINDS:
            if not fits[depth, u]:
                continue
            assign[depth] = u
            nxt = best_here.copy()
            nxt[:, u] = np.minimum(nxt[:, u], col)
            counts[u] += 1
            recurse(depth + 1, nxt, counts)
            counts[u] -= 1

    recurse(0, np.full((rows.shape[0], len(KINDS)), np.inf), np.zeros(len(KINDS), dtype=int))
    if best_assign is None:
        return _infeasible(tag, thresholds, nodes)
    placement = Placement(tuple(ServiceKind(int(u)) for u in best_assign))
    return SolveResult(placement, objective(placement, instance), tag, thresholds, nodes)


def reliability_relaxation(app: ApplicationSpec) -> float:
    """Threshold scaled by the inverse of the application's reliability."""
    return app.delay_threshold / (app.reliability / 100.0)


def solve_rdp(instance: PlacementInstance,
              relax: Callable[[ApplicationSpec], float] = reliability_relaxation,
              max_nodes: int = 5_000_000) -> SolveResult:
    """Exact solve; on infeasibility retry once with reliability-relaxed thresholds."""
    first = solve_exact(instance, instance.thresholds(), max_nodes=max_nodes, tag="RDP")
    if first.feasible:
        return first
    relaxed = {a.name: max(a.delay_threshold, relax(a)) for a in instance.applications}
    second = solve_exact(instance, relaxed, max_nodes=max_nodes, tag="RDP")
    return SolveResult(second.placement, second.objective, "RDP", relaxed,
                       first.nodes_explored + second.nodes_explored)


def utilization_scores(instance: PlacementInstance) -> list[dict[ServiceKind, Fraction]]:
    """Per server, the mean of demand/capacity ratios for every kind that fits.

    Exact rationals so that ties are real ties.
    """
    fits = instance.fits()
    scores = []
    for s in instance.servers:
        cap = effective_capacity(s)
        row = {}
        for u in KINDS:
            if not fits[s.id, u]:
                continue
            dem = instance.services[u].demand
            ratios = [Fraction(d) / Fraction(c) if c > 0 else Fraction(0)
                      for d, c in zip(dem.as_tuple(), cap.as_tuple())]
            row[u] = sum(ratios, Fraction(0)) / len(ratios)
        scores.append(row)
    return scores


def utilization(placement: Placement, instance: PlacementInstance) -> Fraction:
    scores = utilization_scores(instance)
    return sum((scores[n][k] for n, k in enumerate(placement.assignment)), Fraction(0))


def solve_raa(instance: PlacementInstance) -> SolveResult:
    """Resource-aware baseline: maximise total utilization, ignore delays.

    Dynamic programme over servers with the set of already covered kinds as
    state; reconstruction prefers the smallest kind on the lowest server.
    """
    n = instance.n_servers
    scores = utilization_scores(instance)
    need = 0
    for u in required_kinds(instance.applications):
        need |= 1 << int(u)
    unbounded = {a.name: math.inf for a in instance.applications}
    full = (1 << len(KINDS)) - 1
    # value[d][mask]: best utilization of servers d.. given covered mask, None if coverage impossible
    value: list[list[Fraction | None]] = [[None] * (full + 1) for _ in range(n + 1)]
    for m in range(full + 1):
        value[n][m] = Fraction(0) if (m & need) == need else None
    for d in range(n - 1, -1, -1):
        for m in range(full + 1):
            best = None
            for u, sc in scores[d].items():
                rest = value[d + 1][m | (1 << int(u))]
                if rest is not None and (best is None or sc + rest > best):
                    best = sc + rest
            value[d][m] = best
    if value[0][0] is None:
        return _infeasible("RAA", unbounded)
    assign, m = [], 0
    for d in range(n):
        for u in sorted(scores[d]):
            rest = value[d + 1][m | (1 << int(u))]
            if rest is not None and scores[d][u] + rest == value[d][m]:
                assign.append(u)
                m |= 1 << int(u)
                break
    placement = Placement(tuple(assign))
    return SolveResult(placement, objective(placement, instance), "RAA", unbounded, n)


def brute_force_oracle(instance: PlacementInstance,
                       thresholds: Mapping[str, float] | None = None,
                       cap: int = 10**7, chunk: int = 20_000) -> SolveResult:
    """Enumerate every assignment in lexicographic order; keep the first minimum."""
    thresholds = dict(instance.thresholds() if thresholds is None else thresholds)
    n = instance.n_servers
    total = len(KINDS) ** n
    if total > cap:
        raise SearchBudgetExceeded(f"{total} assignments exceed oracle cap {cap}")
    thr = np.array([float(thresholds[a.name]) for a in instance.applications])
    mask = instance.app_mask()
    params = instance.params
    rows = instance.zone_rows()
    fits = instance.fits()
    need = sorted(required_kinds(instance.applications))
    z = rows.shape[0]

    best_obj, best = math.inf, None
    combos = itertools.product(range(len(KINDS)), repeat=n)
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=np.int64).reshape(-1, n)
        if block.shape[0] == 0:
            break
        ok = fits[np.arange(n)[None, :], block].all(axis=1)
        for u in need:
            ok &= (block == u).any(axis=1)
        if mask.size and z:
            serv = np.empty((block.shape[0], z, len(KINDS)))
            for u in KINDS:
                hosted = (block == u)[:, None, :]
                serv[:, :, u] = np.where(hosted, rows[None, :, :], np.inf).min(axis=2)
            slowest = np.where(mask[None, None], serv[:, :, None, :], -np.inf).max(axis=3)
            terms = params.d_com + slowest + params.d_dl
            ok &= (terms <= thr[None, None, :]).all(axis=(1, 2))
        for i in np.flatnonzero(ok):
            obj = math.fsum(terms[i].ravel().tolist()) if (mask.size and z) else 0.0
            if obj < best_obj:
                best_obj, best = obj, block[i].copy()
    nodes = total
    if best is None:
        return _infeasible("Oracle", thresholds, nodes)
    placement = Placement(tuple(ServiceKind(int(u)) for u in best))
    return SolveResult(placement, best_obj, "Oracle", thresholds, nodes)


SOLVERS = {
    "exact": lambda inst: solve_exact(inst),
    "rdp": solve_rdp,
    "raa": solve_raa,
    "oracle": lambda inst: brute_force_oracle(inst),
}


def solve(instance: PlacementInstance, name: str) -> SolveResult:
    try:
        fn = SOLVERS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}") from None
    return fn(instance)
