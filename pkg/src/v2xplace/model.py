"""Domain types and delay arithmetic for V2X basic-service placement.

A vehicle talks to the RSU of the coverage zone it is in (its serving
server). Every basic service it needs is answered through the LDM of that
serving server and, when the service runs elsewhere, one extra
server-to-server transmission. The application delay is the uplink delay,
plus the slowest of its (parallel) basic services, plus the downlink delay.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

if TYPE_CHECKING:
    from .solver import PlacementInstance


class NoHostError(LookupError):
    """Raised when a required service kind is not placed on any server."""


class ServiceKind(IntEnum):
    CA = 0
    DEN = 1
    MEDIA = 2

    @property
    def label(self) -> str:
        return "Media" if self is ServiceKind.MEDIA else self.name

    @classmethod
    def parse(cls, name: str | int | "ServiceKind") -> "ServiceKind":
        if isinstance(name, cls):
            return name
        if isinstance(name, int):
            return cls(name)
        try:
            return cls[str(name).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown service kind {name!r}") from None


@dataclass(frozen=True)
class ResourceVector:
    cores: float
    ram: float

    def __post_init__(self):
        if not (self.cores >= 0 and self.ram >= 0):
            raise ValueError(f"resource components must be >= 0, got {self}")

    def __add__(self, other: ResourceVector) -> ResourceVector:
        return ResourceVector(self.cores + other.cores, self.ram + other.ram)

    def __sub__(self, other: ResourceVector) -> ResourceVector:
        return ResourceVector(self.cores - other.cores, self.ram - other.ram)

    def fits_in(self, other: ResourceVector) -> bool:
        """Componentwise ``self <= other``."""
        return self.cores <= other.cores and self.ram <= other.ram

    def as_tuple(self) -> tuple[float, float]:
        return (self.cores, self.ram)


ZERO = ResourceVector(0, 0)


@dataclass(frozen=True)
class ServiceSpec:
    kind: ServiceKind
    demand: ResourceVector


@dataclass(frozen=True)
class ApplicationSpec:
    """A V2X application: the basic services it needs and its QoS targets.

    ``delay_threshold`` is in milliseconds, ``reliability`` in percent.
    """

    name: str
    required_services: frozenset[ServiceKind]
    delay_threshold: float
    reliability: float

    def __post_init__(self):
        object.__setattr__(
            self, "required_services",
            frozenset(ServiceKind.parse(k) for k in self.required_services))
        if not self.required_services:
            raise ValueError(f"{self.name}: required_services must be nonempty")
        if not self.delay_threshold > 0:
            raise ValueError(f"{self.name}: delay_threshold must be > 0")
        if not 0 < self.reliability <= 100:
            raise ValueError(f"{self.name}: reliability must be in (0, 100]")


@dataclass(frozen=True)
class EdgeServer:
    id: int
    position: float
    capacity: ResourceVector
    ldm_demand: ResourceVector = ZERO
    migration_reserve: ResourceVector = ZERO

    def __post_init__(self):
        effective_capacity(self)


def effective_capacity(server: EdgeServer) -> ResourceVector:
    """Capacity left for a basic service once the LDM and the reserve are
    carved out."""
    cores = server.capacity.cores - server.ldm_demand.cores - server.migration_reserve.cores
    ram = server.capacity.ram - server.ldm_demand.ram - server.migration_reserve.ram
    if cores < 0 or ram < 0:
        raise ValueError(
            f"server {server.id}: LDM demand and migration reserve exceed capacity "
            f"({cores} cores, {ram} GB left)")
    return ResourceVector(cores, ram)


# Per-server capacity, LDM footprint and per-service demand (cores, GB RAM).
SERVER_CAPACITY = ResourceVector(8, 8)
LDM_DEMAND = ResourceVector(4, 2)

DEFAULT_SERVICES: dict[ServiceKind, ServiceSpec] = {
    ServiceKind.CA: ServiceSpec(ServiceKind.CA, ResourceVector(2, 2)),
    ServiceKind.DEN: ServiceSpec(ServiceKind.DEN, ResourceVector(2, 4)),
    ServiceKind.MEDIA: ServiceSpec(ServiceKind.MEDIA, ResourceVector(4, 6)),
}

_CA, _DEN, _MEDIA = ServiceKind.CA, ServiceKind.DEN, ServiceKind.MEDIA

# Required services, latency threshold (ms), reliability (%).
DEFAULT_APPLICATIONS: tuple[ApplicationSpec, ...] = (
    ApplicationSpec("PL", frozenset({_CA}), 50.0, 90.0),
    ApplicationSpec("SSM", frozenset({_CA, _DEN, _MEDIA}), 20.0, 90.0),
    ApplicationSpec("ES", frozenset({_DEN}), 10.0, 95.0),
    ApplicationSpec("PSW", frozenset({_CA, _DEN}), 20.0, 95.0),
    ApplicationSpec("FCW", frozenset({_CA, _DEN}), 10.0, 95.0),
)


def highway_servers(count: int = 10, spacing: float = 400.0,
                    capacity: ResourceVector = SERVER_CAPACITY,
                    ldm_demand: ResourceVector = LDM_DEMAND,
                    migration_reserve: ResourceVector = ZERO) -> list[EdgeServer]:
    """Uniformly spaced servers; server ``i`` sits at the start of zone ``i``."""
    if count < 1 or spacing <= 0:
        raise ValueError("need count >= 1 and spacing > 0")
    return [EdgeServer(i, i * spacing, capacity, ldm_demand, migration_reserve)
            for i in range(count)]


@dataclass(frozen=True, eq=False)
class LatencyMatrix:
    """Server-to-server latency ``C[i][j]`` in ms.

    ``C[i][i]`` is LDM processing on ``i``; off-diagonal entries add the
    transmission from ``i`` to ``j``.
    """

    values: np.ndarray

    def __post_init__(self):
        c = np.array(self.values, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"latency matrix must be square, got shape {c.shape}")
        if not np.all(np.isfinite(c)) or np.any(c <= 0):
            raise ValueError("latency entries must be finite and > 0")
        if np.any(c < np.diag(c)[:, None]):
            raise ValueError("C[i][j] must be >= C[i][i] (transmission is nonnegative)")
        c.setflags(write=False)
        object.__setattr__(self, "values", c)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, ij):
        return self.values[ij]

    def __eq__(self, other):
        return isinstance(other, LatencyMatrix) and np.array_equal(self.values, other.values)

    __hash__ = None

    @classmethod
    def from_components(cls, processing, transmission) -> LatencyMatrix:
        """``C[i][j] = processing[i] + (transmission[i][j] if i != j else 0)``."""
        proc = np.asarray(processing, dtype=float)
        trans = np.array(transmission, dtype=float)
        np.fill_diagonal(trans, 0.0)
        return cls(proc[:, None] + trans)

    @classmethod
    def expected(cls, n: int, processing: float = 4.0, transmission: float = 3.0,
                 per_hop: bool = False) -> LatencyMatrix:
        """Latency built from expected component values.

        With ``per_hop`` the transmission grows with the number of
        server-to-server links between ``i`` and ``j``.
        """
        idx = np.arange(n)
        hops = np.abs(idx[:, None] - idx[None, :]).astype(float)
        trans = transmission * (hops if per_hop else (hops > 0))
        return cls.from_components(np.full(n, processing), trans)


@dataclass(frozen=True)
class Placement:
    """One basic service per edge server (``assignment[n]`` is the kind on ``n``)."""

    assignment: tuple[ServiceKind, ...]

    def __post_init__(self):
        object.__setattr__(self, "assignment",
                           tuple(ServiceKind.parse(k) for k in self.assignment))
        if not self.assignment:
            raise ValueError("placement needs at least one server")

    def __len__(self):
        return len(self.assignment)

    def __getitem__(self, n: int) -> ServiceKind:
        return self.assignment[n]

    def hosts(self, kind: ServiceKind) -> list[int]:
        return [n for n, k in enumerate(self.assignment) if k == kind]

    def covers(self, kinds: Iterable[ServiceKind]) -> bool:
        present = set(self.assignment)
        return all(k in present for k in kinds)

    def missing(self, kinds: Iterable[ServiceKind]) -> set[ServiceKind]:
        return set(kinds) - set(self.assignment)

    def as_array(self) -> np.ndarray:
        return np.fromiter((int(k) for k in self.assignment), dtype=np.int64)

    def labels(self) -> list[str]:
        return [k.label for k in self.assignment]


@dataclass(frozen=True)
class DelayParameters:
    d_com: float = 1.0
    d_dl: float = 1.0
    density_factor: float = 1.0
    density_penalty_base: float = math.e
    nc_reference: float = 20.0

    def __post_init__(self):
        if not (self.d_com > 0 and self.d_dl > 0):
            raise ValueError("d_com and d_dl must be > 0")
        if not self.density_factor >= 1:
            raise ValueError("density_factor must be >= 1")
        if not self.nc_reference >= 1:
            raise ValueError("nc_reference must be >= 1")
        if not (self.density_penalty_base > 0 and self.density_penalty_base != 1):
            raise ValueError("density_penalty_base must be positive and != 1")


def density_penalty(nc, params: DelayParameters):
    """``max(0, log_b(nc / nc_reference))``; works on scalars and arrays."""
    ratio = np.maximum(np.asarray(nc, dtype=float) / params.nc_reference, 1.0)
    pen = np.log(ratio) / math.log(params.density_penalty_base)
    return float(pen) if pen.ndim == 0 else pen


def density_adjusted_processing(base: float, nc: float, params: DelayParameters) -> float:
    """LDM processing time once the query has to cover ``nc`` nearby vehicles."""
    return base + density_penalty(nc, params)


def service_delay(placement: Placement, c: LatencyMatrix, serving: int,
                  kind: ServiceKind, gamma: float = 1.0) -> float:
    hosts = placement.hosts(kind)
    if not hosts:
        raise NoHostError(f"no server hosts {kind.label}")
    return min(gamma * float(c.values[serving, j]) for j in hosts)


def application_delay(placement: Placement, c: LatencyMatrix, serving: int,
                      app: ApplicationSpec, params: DelayParameters) -> float:
    slowest = max(service_delay(placement, c, serving, kind, params.density_factor)
                  for kind in sorted(app.required_services))
    return params.d_com + slowest + params.d_dl


def required_kinds(apps: Iterable[ApplicationSpec]) -> frozenset[ServiceKind]:
    kinds: set[ServiceKind] = set()
    for app in apps:
        kinds |= app.required_services
    return frozenset(kinds)


@dataclass(frozen=True)
class DelayViolation:
    application: str
    zone: int
    delay: float
    threshold: float


@dataclass(frozen=True)
class ConstraintReport:
    one_service_per_server: bool
    capacity_violations: tuple[tuple[int, ServiceKind], ...] = ()
    delay_violations: tuple[DelayViolation, ...] = ()
    missing_services: frozenset[ServiceKind] = field(default_factory=frozenset)

    @property
    def resources_ok(self) -> bool:
        return not self.capacity_violations

    @property
    def delays_ok(self) -> bool:
        return not self.delay_violations

    @property
    def coverage_ok(self) -> bool:
        return not self.missing_services

    @property
    def ok(self) -> bool:
        return (self.one_service_per_server and self.resources_ok
                and self.delays_ok and self.coverage_ok)


def check_constraints(placement: Placement, instance: "PlacementInstance",
                      thresholds: Mapping[str, float] | None = None) -> ConstraintReport:
    """Evaluate the one-per-server, resource, delay and coverage constraints.

    ``thresholds`` overrides the applications' own delay thresholds (used
    for relaxed passes). Missing coverage is reported and the delay check is
    skipped for applications that cannot be served.
    """
    one_per_server = len(placement) == len(instance.servers)
    cap_bad = []
    for server, kind in zip(instance.servers, placement.assignment):
        demand = instance.services[kind].demand
        if not demand.fits_in(effective_capacity(server)):
            cap_bad.append((server.id, kind))

    missing = frozenset(placement.missing(required_kinds(instance.applications)))
    delay_bad = []
    for app in instance.applications:
        if app.required_services & missing:
            continue
        limit = app.delay_threshold if thresholds is None else thresholds[app.name]
        for zone in instance.evaluation_positions:
            d = application_delay(placement, instance.latency, zone, app, instance.params)
            if d > limit:
                delay_bad.append(DelayViolation(app.name, zone, d, limit))
    return ConstraintReport(one_per_server, tuple(cap_bad), tuple(delay_bad), missing)


def thresholds_of(apps: Sequence[ApplicationSpec]) -> dict[str, float]:
    return {a.name: a.delay_threshold for a in apps}
