"""Traffic-driven delay sampling, summaries and strategy comparisons."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .mobility import Frame, MobilityParams, TrafficScenario, neighbor_counts, simulate, zone_of
from .model import ApplicationSpec, NoHostError, Placement, density_penalty, required_kinds
from .solver import KINDS, PlacementInstance, SolveResult, solve

SAMPLE_HEADER = ("run", "timestamp", "vehicle", "app", "delay_ms", "server", "nc")


@dataclass(frozen=True)
class StochasticLatencyModel:
    """Per-query latency draws.

    Processing is one draw per (vehicle, snapshot) at the serving LDM;
    transmission is one draw per server pair touching the serving server,
    or per link when ``per_hop`` is set. Every draw is reused by all
    applications of the same vehicle and snapshot.
    """

    processing: tuple[float, float] = (3.0, 5.0)
    transmission: tuple[float, float] = (1.0, 5.0)
    seed: int = 0
    per_hop: bool = False
    nc_radius: int = 1
    penalize_transmission: bool = False

    def __post_init__(self):
        for name in ("processing", "transmission"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} range must satisfy 0 <= low <= high")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.processing[0] <= 0:
            raise ValueError("processing draws must be > 0")
        if self.nc_radius < 0:
            raise ValueError("nc_radius must be >= 0")

    def rng(self, run: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([int(self.seed), int(run), 7]))


@dataclass(frozen=True)
class DelaySample:
    run: int
    timestamp: float
    vehicle: int
    application: str
    delay: float
    serving_server: int
    nc: int


@dataclass(eq=False)
class SampleSet:
    """Columnar delay samples; ``app`` indexes ``applications``."""

    applications: tuple[str, ...]
    run: np.ndarray
    timestamp: np.ndarray
    vehicle: np.ndarray
    app: np.ndarray
    delay: np.ndarray
    server: np.ndarray
    nc: np.ndarray

    def __len__(self):
        return len(self.delay)

    def __iter__(self) -> Iterator[DelaySample]:
        for r, t, v, a, d, s, c in zip(self.run, self.timestamp, self.vehicle, self.app,
                                       self.delay, self.server, self.nc):
            yield DelaySample(int(r), float(t), int(v), self.applications[a], float(d),
                              int(s), int(c))

    def of(self, name: str) -> np.ndarray:
        return self.delay[self.app == self.applications.index(name)]

    def select(self, keep: np.ndarray) -> SampleSet:
        return SampleSet(self.applications, *(getattr(self, c)[keep] for c in
                                              ("run", "timestamp", "vehicle", "app",
                                               "delay", "server", "nc")))

    @classmethod
    def concat(cls, parts: Sequence[SampleSet], applications: Sequence[str]) -> SampleSet:
        cols = ("run", "timestamp", "vehicle", "app", "delay", "server", "nc")
        if not parts:
            empty = {c: np.empty(0, dtype=float if c in ("timestamp", "delay") else np.int64)
                     for c in cols}
            return cls(tuple(applications), **empty)
        return cls(tuple(applications), *(np.concatenate([getattr(p, c) for p in parts])
                                          for c in cols))


def frame_delays(placement: Placement, instance: PlacementInstance,
                 model: StochasticLatencyModel, frame: Frame,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Delays of every application for every vehicle on the road.

    Returns ``(delays[V, A], serving[V], nc[V])``. Always consumes the same
    number of draws per vehicle, whatever the placement, so two placements
    evaluated with equal seeds see equal latencies.
    """
    n = instance.n_servers
    v = len(frame)
    zones = zone_of(frame.position, instance.servers)
    nc = neighbor_counts(zones, n, model.nc_radius) if v else np.empty(0, dtype=np.int64)
    proc = rng.uniform(*model.processing, size=v)
    if model.per_hop:
        links = rng.uniform(*model.transmission, size=(v, max(n - 1, 0)))
        cum = np.concatenate([np.zeros((v, 1)), np.cumsum(links, axis=1)], axis=1)
        trans = np.abs(cum - cum[np.arange(v), zones][:, None])
        hops = np.abs(np.arange(n)[None, :] - zones[:, None]).astype(float)
    else:
        trans = rng.uniform(*model.transmission, size=(v, n))
        hops = (np.arange(n)[None, :] != zones[:, None]).astype(float)
    if v == 0:
        return np.empty((0, len(instance.applications))), zones, nc

    pen = density_penalty(nc, instance.params)
    pen = np.atleast_1d(pen)
    row = (proc + pen)[:, None] + trans * hops.astype(bool)
    if model.penalize_transmission:
        row = row + pen[:, None] * hops
    row = instance.params.density_factor * row

    assign = placement.as_array()
    serv = np.full((v, len(KINDS)), np.inf)
    for u in KINDS:
        hosted = assign == u
        if hosted.any():
            serv[:, u] = row[:, hosted].min(axis=1)
    mask = instance.app_mask()
    for a, app in enumerate(instance.applications):
        if not np.isfinite(serv[:, mask[a]]).all():
            missing = [k.label for k in app.required_services if not (assign == k).any()]
            raise NoHostError(f"{app.name}: no server hosts {missing}")
    slowest = np.where(mask[None], serv[:, None, :], -np.inf).max(axis=2)
    p = instance.params
    return p.d_com + slowest + p.d_dl, zones, nc


def traffic_frames(scenario: TrafficScenario, mobility: MobilityParams,
                   run: int) -> list[Frame]:
    return list(simulate(scenario, mobility, run))


def run_simulation(placement: Placement, scenario: TrafficScenario,
                   model: StochasticLatencyModel, instance: PlacementInstance,
                   mobility: MobilityParams = MobilityParams(),
                   frames: Mapping[int, Sequence[Frame]] | None = None) -> SampleSet:
    """Sample every application's delay for every vehicle at every snapshot of
    every run. ``frames`` may supply pre-computed traffic per run."""
    missing = placement.missing(required_kinds(instance.applications))
    if missing:
        raise NoHostError(f"placement lacks {sorted(k.label for k in missing)}")
    if len(placement) != instance.n_servers:
        raise ValueError("placement and topology disagree on the number of servers")
    names = tuple(a.name for a in instance.applications)
    n_apps = len(names)
    parts = []
    for run in range(scenario.runs):
        rng = model.rng(run)
        run_frames = frames[run] if frames is not None else simulate(scenario, mobility, run)
        for fr in run_frames:
            if len(fr) == 0:
                continue
            order = np.argsort(fr.ids, kind="stable")
            fr = Frame(fr.time, fr.ids[order], fr.position[order], fr.speed[order],
                       fr.lane[order])
            delays, zones, nc = frame_delays(placement, instance, model, fr, rng)
            v = len(fr)
            parts.append(SampleSet(
                names,
                np.full(v * n_apps, run, dtype=np.int64),
                np.full(v * n_apps, fr.time, dtype=float),
                np.repeat(fr.ids, n_apps),
                np.tile(np.arange(n_apps, dtype=np.int64), v),
                delays.ravel(),
                np.repeat(zones, n_apps),
                np.repeat(nc, n_apps)))
    return SampleSet.concat(parts, names)


@dataclass
class AppSummary:
    application: str
    threshold: float
    count: int
    mean: float
    run_means: list[float]
    cross_run_mean: float
    violation_rate: float
    minimum: float
    maximum: float
    bin_edges: list[float] = field(default_factory=list)
    density: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SummaryReport:
    apps: dict[str, AppSummary]
    empty: list[str] = field(default_factory=list)

    def __getitem__(self, name: str) -> AppSummary:
        return self.apps[name]

    def to_dict(self) -> dict:
        return {"applications": {k: v.to_dict() for k, v in self.apps.items()},
                "empty": list(self.empty)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def histogram(values: np.ndarray, bins: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Normalised histogram over the observed range; a constant sample
    becomes one unit-width bin centred on the value."""
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return np.array([lo - 0.5, lo + 0.5]), np.array([1.0])
    dens, edges = np.histogram(values, bins=bins, range=(lo, hi), density=True)
    return edges, dens


def summarize(samples: SampleSet, apps: Sequence[ApplicationSpec], bins: int = 50) -> SummaryReport:
    """Per-application means, violation rates and delay densities.

    Sums go through ``math.fsum`` so the result does not depend on sample
    order; runs are weighted equally in the cross-run mean.
    """
    out, empty = {}, []
    runs = np.unique(samples.run)
    for app in apps:
        if app.name not in samples.applications:
            empty.append(app.name)
            continue
        sel = samples.app == samples.applications.index(app.name)
        d = samples.delay[sel]
        if d.size == 0:
            empty.append(app.name)
            continue
        r = samples.run[sel]
        run_means = [math.fsum(d[r == k].tolist()) / int((r == k).sum())
                     for k in runs if (r == k).any()]
        edges, dens = histogram(d, bins)
        out[app.name] = AppSummary(
            application=app.name,
            threshold=app.delay_threshold,
            count=int(d.size),
            mean=math.fsum(d.tolist()) / d.size,
            run_means=run_means,
            cross_run_mean=math.fsum(run_means) / len(run_means),
            violation_rate=int((d > app.delay_threshold).sum()) / d.size,
            minimum=float(d.min()),
            maximum=float(d.max()),
            bin_edges=edges.tolist(),
            density=dens.tolist())
    return SummaryReport(out, empty)


@dataclass
class StrategyOutcome:
    result: SolveResult
    summary: SummaryReport | None
    samples: SampleSet | None = None


@dataclass
class ComparisonReport:
    scenario: str
    outcomes: dict[str, StrategyOutcome]

    @property
    def infeasible(self) -> list[str]:
        return [k for k, o in self.outcomes.items() if o.summary is None]

    def table(self, metric: str = "cross_run_mean") -> dict[str, dict[str, float]]:
        """``{app: {strategy: value}}`` for the feasible strategies."""
        rows: dict[str, dict[str, float]] = {}
        for strat, o in self.outcomes.items():
            if o.summary is None:
                continue
            for app, s in o.summary.apps.items():
                rows.setdefault(app, {})[strat] = getattr(s, metric)
        return rows

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "strategies": {
                k: {"feasible": o.result.feasible,
                    "placement": o.result.placement.labels() if o.result.feasible else None,
                    "objective": o.result.objective if o.result.feasible else None,
                    "summary": o.summary.to_dict() if o.summary else None}
                for k, o in self.outcomes.items()},
        }


def compare_strategies(strategies: Iterable[str] | Mapping[str, SolveResult],
                       scenario: TrafficScenario, instance: PlacementInstance,
                       model: StochasticLatencyModel = StochasticLatencyModel(),
                       mobility: MobilityParams = MobilityParams(), bins: int = 50,
                       keep_samples: bool = False) -> ComparisonReport:
    """Paired comparison: every strategy sees the same traffic and draws."""
    if isinstance(strategies, Mapping):
        results = dict(strategies)
    else:
        results = {s: solve(instance, s) for s in strategies}
    frames = {r: traffic_frames(scenario, mobility, r) for r in range(scenario.runs)}
    outcomes = {}
    for name, res in results.items():
        if not res.feasible:
            outcomes[name] = StrategyOutcome(res, None)
            continue
        samples = run_simulation(res.placement, scenario, model, instance, mobility, frames)
        outcomes[name] = StrategyOutcome(res, summarize(samples, instance.applications, bins),
                                         samples if keep_samples else None)
    return ComparisonReport(scenario.name, outcomes)


@dataclass
class SweepReport:
    scenarios: list[str]
    summaries: list[SummaryReport]
    changes: list[dict[str, float]]
    largest: list[str]

    def to_dict(self) -> dict:
        return {"scenarios": self.scenarios,
                "summaries": [s.to_dict() for s in self.summaries],
                "relative_change": self.changes,
                "largest_change": self.largest}


def density_sweep(scenarios: Sequence[TrafficScenario], instance: PlacementInstance,
                  strategy: str | SolveResult = "rdp",
                  model: StochasticLatencyModel = StochasticLatencyModel(),
                  mobility: MobilityParams = MobilityParams(), bins: int = 50) -> SweepReport:
    """Relative change of each application's mean delay between consecutive
    scenarios, for one placement."""
    if len(scenarios) < 2:
        raise ValueError("a sweep needs at least two scenarios")
    res = solve(instance, strategy) if isinstance(strategy, str) else strategy
    if not res.feasible:
        raise ValueError(f"strategy {res.solver_tag} found no feasible placement")
    summaries = [summarize(run_simulation(res.placement, sc, model, instance, mobility),
                           instance.applications, bins) for sc in scenarios]
    changes, largest = [], []
    for before, after in zip(summaries, summaries[1:]):
        ch = {a: after[a].cross_run_mean / before[a].cross_run_mean - 1.0
              for a in before.apps if a in after.apps}
        changes.append(ch)
        largest.append(max(ch, key=lambda a: ch[a]))
    return SweepReport([s.name for s in scenarios], summaries, changes, largest)


def write_samples_csv(path, samples: SampleSet) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_HEADER)
        names = samples.applications
        for r, t, v, a, d, s, c in zip(samples.run.tolist(), samples.timestamp.tolist(),
                                       samples.vehicle.tolist(), samples.app.tolist(),
                                       samples.delay.tolist(), samples.server.tolist(),
                                       samples.nc.tolist()):
            w.writerow((r, repr(t), v, names[a], repr(d), s, c))


def read_samples_csv(path) -> SampleSet:
    cols = {c: [] for c in SAMPLE_HEADER}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SAMPLE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(SAMPLE_HEADER)}")
        for row in reader:
            for c in SAMPLE_HEADER:
                cols[c].append(row[c])
    names = tuple(dict.fromkeys(cols["app"]))
    return SampleSet(
        names,
        np.array(cols["run"], dtype=np.int64),
        np.array(cols["timestamp"], dtype=float),
        np.array(cols["vehicle"], dtype=np.int64),
        np.array([names.index(a) for a in cols["app"]], dtype=np.int64),
        np.array(cols["delay_ms"], dtype=float),
        np.array(cols["server"], dtype=np.int64),
        np.array(cols["nc"], dtype=np.int64))


def write_histogram_csv(path, summary: AppSummary) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("bin_left", "bin_right", "density"))
        e = summary.bin_edges
        for left, right, d in zip(e[:-1], e[1:], summary.density):
            w.writerow((repr(left), repr(right), repr(d)))
