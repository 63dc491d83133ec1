"""Experiment configuration: one JSON file, merged over complete defaults."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .evaluation import StochasticLatencyModel
from .mobility import MobilityParams, TrafficScenario
from .model import (
    ApplicationSpec,
    DelayParameters,
    LatencyMatrix,
    ResourceVector,
    ServiceKind,
    ServiceSpec,
    highway_servers,
)
from .solver import SOLVERS, PlacementInstance


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "topology": {
        "servers": 10,
        "spacing": 400.0,
        "capacity": {"cores": 8, "ram": 8},
        "ldm_demand": {"cores": 4, "ram": 2},
        "migration_reserve": {"cores": 0, "ram": 0},
    },
    "services": {
        "CA": {"cores": 2, "ram": 2},
        "DEN": {"cores": 2, "ram": 4},
        "Media": {"cores": 4, "ram": 6},
    },
    "applications": [
        {"name": "PL", "services": ["CA"], "delay_threshold": 50, "reliability": 90},
        {"name": "SSM", "services": ["CA", "DEN", "Media"], "delay_threshold": 20, "reliability": 90},
        {"name": "ES", "services": ["DEN"], "delay_threshold": 10, "reliability": 95},
        {"name": "PSW", "services": ["CA", "DEN"], "delay_threshold": 20, "reliability": 95},
        {"name": "FCW", "services": ["CA", "DEN"], "delay_threshold": 10, "reliability": 95},
    ],
    "delay": {
        "d_com": 1.0,
        "d_dl": 1.0,
        "density_factor": 1.0,
        "density_penalty_base": "e",
        "nc_reference": 20,
    },
    "latency": {
        "processing": [3.0, 5.0],
        "transmission": [1.0, 5.0],
        "expected_processing": 4.0,
        "expected_transmission": 3.0,
        "per_hop": False,
        "nc_radius": 1,
        "penalize_transmission": False,
    },
    "mobility": {
        "max_speed": 27.7,
        "max_accel": 2.6,
        "max_decel": 4.5,
        "min_gap": 2.5,
        "lane_count": 2,
        "depart_speed": 0.0,
        "dt": 0.5,
    },
    "scenarios": [
        {"name": "moderate", "arrival_rate": 1500},
        {"name": "heavy", "arrival_rate": 1800},
    ],
    "simulation": {"duration": 1500.0, "snapshot_interval": 10.0, "runs": 5, "bins": 50},
    "solver": {"name": "rdp", "strategies": ["rdp", "raa"], "max_nodes": 5_000_000},
    "output": {"dir": "results"},
}


def merge(base: dict, override: dict, path: str = "") -> dict:
    """Recursive dict merge; lists and scalars in ``override`` replace."""
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"{where}: unknown field")
        if isinstance(base[key], dict) and key not in ("services",):
            if not isinstance(val, dict):
                raise ConfigError(f"{where}: expected an object")
            out[key] = merge(base[key], val, where)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _num(d: dict, key: str, path: str, positive: bool = False, integer: bool = False):
    val = d.get(key)
    where = f"{path}.{key}"
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {val!r}")
    if integer and int(val) != val:
        raise ConfigError(f"{where}: expected an integer, got {val!r}")
    if positive and not val > 0:
        raise ConfigError(f"{where}: must be > 0")
    return int(val) if integer else float(val)


def _resources(d: Any, path: str) -> ResourceVector:
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected {{'cores': ..., 'ram': ...}}")
    try:
        return ResourceVector(_num(d, "cores", path), _num(d, "ram", path))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


@dataclass
class ExperimentConfig:
    raw: dict

    # --- construction -------------------------------------------------
    @classmethod
    def from_dict(cls, override: dict | None = None) -> ExperimentConfig:
        cfg = cls(merge(DEFAULTS, override or {}))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path | None) -> ExperimentConfig:
        if path is None:
            return cls.from_dict({})
        text = Path(path).read_text()
        if not text.strip():
            return cls.from_dict({})
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def validate(self) -> None:
        # building every component surfaces all field errors with their path
        self.instance()
        self.scenarios()
        self.mobility()
        self.latency_model()
        if self.solver_name not in SOLVERS:
            raise ConfigError(f"solver.name: unknown solver {self.solver_name!r}")
        for s in self.strategies:
            if s not in SOLVERS:
                raise ConfigError(f"solver.strategies: unknown solver {s!r}")
        _num(self.raw["simulation"], "bins", "simulation", positive=True, integer=True)
        _num(self.raw, "seed", "config", integer=True)

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2)

    # --- accessors ----------------------------------------------------
    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def solver_name(self) -> str:
        return str(self.raw["solver"]["name"]).lower()

    @property
    def strategies(self) -> list[str]:
        return [str(s).lower() for s in self.raw["solver"]["strategies"]]

    @property
    def bins(self) -> int:
        return int(self.raw["simulation"]["bins"])

    @property
    def out_dir(self) -> Path:
        return Path(self.raw["output"]["dir"])

    def params(self) -> DelayParameters:
        d = self.raw["delay"]
        base = d["density_penalty_base"]
        if base == "e":
            base = math.e
        elif isinstance(base, str):
            raise ConfigError("delay.density_penalty_base: expected a number or \"e\"")
        try:
            return DelayParameters(
                _num(d, "d_com", "delay"), _num(d, "d_dl", "delay"),
                _num(d, "density_factor", "delay"), float(base),
                _num(d, "nc_reference", "delay"))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"delay: {exc}") from None

    def instance(self) -> PlacementInstance:
        t = self.raw["topology"]
        n = _num(t, "servers", "topology", positive=True, integer=True)
        spacing = _num(t, "spacing", "topology", positive=True)
        try:
            servers = highway_servers(
                n, spacing, _resources(t["capacity"], "topology.capacity"),
                _resources(t["ldm_demand"], "topology.ldm_demand"),
                _resources(t["migration_reserve"], "topology.migration_reserve"))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"topology: {exc}") from None

        services = {}
        for name, dem in self.raw["services"].items():
            try:
                kind = ServiceKind.parse(name)
            except ValueError as exc:
                raise ConfigError(f"services.{name}: {exc}") from None
            services[kind] = ServiceSpec(kind, _resources(dem, f"services.{name}"))

        apps = []
        if not isinstance(self.raw["applications"], list):
            raise ConfigError("applications: expected a list")
        for i, a in enumerate(self.raw["applications"]):
            where = f"applications[{i}]"
            if not isinstance(a, dict) or "name" not in a:
                raise ConfigError(f"{where}: expected an object with a name")
            try:
                kinds = frozenset(ServiceKind.parse(k) for k in a.get("services", []))
                apps.append(ApplicationSpec(
                    str(a["name"]), kinds, _num(a, "delay_threshold", where),
                    _num(a, "reliability", where)))
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"{where}: {exc}") from None

        lat = self.raw["latency"]
        matrix = LatencyMatrix.expected(
            n, _num(lat, "expected_processing", "latency", positive=True),
            _num(lat, "expected_transmission", "latency"), bool(lat["per_hop"]))
        try:
            return PlacementInstance(servers, services, tuple(apps), matrix, self.params())
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"instance: {exc}") from None

    def latency_model(self, seed: int | None = None) -> StochasticLatencyModel:
        lat = self.raw["latency"]
        try:
            return StochasticLatencyModel(
                tuple(lat["processing"]), tuple(lat["transmission"]),
                self.seed if seed is None else seed, bool(lat["per_hop"]),
                int(lat["nc_radius"]), bool(lat["penalize_transmission"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"latency: {exc}") from None

    def mobility(self) -> MobilityParams:
        m = self.raw["mobility"]
        where = "mobility"
        try:
            return MobilityParams(
                _num(m, "max_speed", where), _num(m, "max_accel", where),
                _num(m, "max_decel", where), _num(m, "min_gap", where),
                self.raw["topology"]["servers"] * self.raw["topology"]["spacing"],
                _num(m, "lane_count", where, integer=True),
                _num(m, "depart_speed", where), _num(m, "dt", where))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"mobility: {exc}") from None

    def scenarios(self, names: list[str] | None = None,
                  runs: int | None = None) -> list[TrafficScenario]:
        sim = self.raw["simulation"]
        out = []
        for i, s in enumerate(self.raw["scenarios"]):
            where = f"scenarios[{i}]"
            if not isinstance(s, dict) or "name" not in s:
                raise ConfigError(f"{where}: expected an object with a name")
            try:
                out.append(TrafficScenario(
                    str(s["name"]), _num(s, "arrival_rate", where),
                    _num(sim, "duration", "simulation", positive=True),
                    _num(sim, "snapshot_interval", "simulation", positive=True),
                    self.seed,
                    runs if runs is not None else _num(sim, "runs", "simulation", integer=True)))
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"{where}: {exc}") from None
        if names:
            known = {s.name for s in out}
            for nm in names:
                if nm not in known:
                    raise ConfigError(f"scenario {nm!r} not in config (have {sorted(known)})")
            out = [s for s in out if s.name in names]
        return out
