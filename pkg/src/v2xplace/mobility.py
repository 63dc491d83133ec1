"""Highway traffic generator.

Poisson arrivals enter at the start of the highway and follow a
gap-keeping rule bounded by the configured kinematics. Every vehicle keeps its
stopping point at least ``min_gap`` behind the stopping point of its lane
leader, so any leader may brake at ``max_decel`` without a collision.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .model import EdgeServer


@dataclass(frozen=True)
class MobilityParams:
    max_speed: float = 27.7
    max_accel: float = 2.6
    max_decel: float = 4.5
    min_gap: float = 2.5
    highway_length: float = 4000.0
    lane_count: int = 2
    depart_speed: float = 0.0
    dt: float = 0.5

    def __post_init__(self):
        for name in ("max_speed", "max_accel", "max_decel", "min_gap", "highway_length", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.lane_count < 1:
            raise ValueError("lane_count must be >= 1")
        if not 0 <= self.depart_speed <= self.max_speed:
            raise ValueError("depart_speed must lie in [0, max_speed]")


@dataclass(frozen=True)
class TrafficScenario:
    name: str = "moderate"
    arrival_rate: float = 1500.0  # vehicles per hour
    duration: float = 1500.0
    snapshot_interval: float = 10.0
    seed: int = 0
    runs: int = 5

    def __post_init__(self):
        if self.arrival_rate < 0 or self.duration <= 0 or self.snapshot_interval <= 0:
            raise ValueError("arrival_rate >= 0, duration > 0 and snapshot_interval > 0 required")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")

    @property
    def n_snapshots(self) -> int:
        return int(math.floor(self.duration / self.snapshot_interval + 1e-9))


MODERATE = TrafficScenario("moderate", 1500.0)
HEAVY = TrafficScenario("heavy", 1800.0)


@dataclass(frozen=True)
class VehicleState:
    id: int
    position: float
    speed: float
    lane: int


@dataclass(frozen=True)
class VehicleSnapshot:
    vehicle: int
    position: float
    serving_server: int
    neighbor_count: int
    timestamp: float
    lane: int = 0
    speed: float = 0.0


@dataclass(frozen=True, eq=False)
class Frame:
    """Columnar road state at one instant."""

    time: float
    ids: np.ndarray
    position: np.ndarray
    speed: np.ndarray
    lane: np.ndarray

    def __len__(self):
        return len(self.ids)

    def states(self) -> list[VehicleState]:
        return [VehicleState(int(i), float(x), float(v), int(l))
                for i, x, v, l in zip(self.ids, self.position, self.speed, self.lane)]


@dataclass(frozen=True, eq=False)
class ArrivalSchedule:
    times: np.ndarray
    lanes: np.ndarray

    def __len__(self):
        return len(self.times)


def run_seed(seed: int, run: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(run)])


def generate_arrivals(scenario: TrafficScenario, run: int = 0,
                      lane_count: int = 2) -> ArrivalSchedule:
    """Poisson arrival times on ``[0, duration]``; lanes are dealt round-robin."""
    rng = np.random.default_rng(run_seed(scenario.seed, run))
    rate = scenario.arrival_rate / 3600.0
    if rate <= 0:
        return ArrivalSchedule(np.empty(0), np.empty(0, dtype=np.int64))
    # unit-rate gaps rescaled, so scenarios sharing a seed share the gap sequence
    expected = rate * scenario.duration
    chunk = int(expected + 10 * math.sqrt(expected) + 16)
    times = np.cumsum(rng.exponential(1.0, chunk)) / rate
    while times[-1] <= scenario.duration:
        more = np.cumsum(rng.exponential(1.0, chunk)) / rate + times[-1]
        times = np.concatenate([times, more])
    times = times[times <= scenario.duration]
    return ArrivalSchedule(times, np.arange(len(times), dtype=np.int64) % lane_count)


def _advance(x, v, v_next, params: MobilityParams):
    b, dt = params.max_decel, params.dt
    trapezoid = x + 0.5 * dt * (v + v_next)
    # a vehicle slower than b*dt that stops mid-step travels v^2/2b
    stopped = (v_next <= 0) & (v < b * dt)
    return np.where(stopped, x + v * v / (2 * b), trapezoid)


def _step_arrays(pos, speed, lane, params: MobilityParams):
    """One update; returns next (pos, speed). Arrays are per vehicle."""
    b, a, dt, g = params.max_decel, params.max_accel, params.dt, params.min_gap
    n = len(pos)
    if n == 0:
        return pos.copy(), speed.copy()
    limit = np.minimum(speed + a * dt, params.max_speed)

    # leader of each vehicle: next vehicle ahead in the same lane
    order = np.lexsort((pos, lane))
    lead = np.full(n, -1)
    same = lane[order[1:]] == lane[order[:-1]]
    lead[order[:-1][same]] = order[1:][same]
    has = lead >= 0
    if has.any():
        f, l = np.flatnonzero(has), lead[has]
        x, v = pos[f], speed[f]
        xl, vl = pos[l], speed[l]
        # the leader cannot stop earlier, nor end the step further back, than this
        leader_stop = xl + vl * vl / (2 * b)
        leader_next_min = np.where(vl >= b * dt, xl + vl * dt - 0.5 * b * dt * dt,
                                   xl + vl * vl / (2 * b))
        room = leader_stop - g - x - 0.5 * dt * v
        v_stop = b * (-0.5 * dt + np.sqrt(np.maximum(0.25 * dt * dt + 2 * room / b, 0.0)))
        v_stop = np.where(room >= 0, v_stop, -np.inf)
        v_gap = 2 * (leader_next_min - g - x) / dt - v
        limit[f] = np.minimum(limit[f], np.minimum(v_stop, v_gap))
    v_next = np.clip(limit, np.maximum(speed - b * dt, 0.0), None)
    return _advance(pos, speed, v_next, params), v_next


def step(world: Sequence[VehicleState], dt: float | None = None,
         params: MobilityParams = MobilityParams()) -> list[VehicleState]:
    """Advance every vehicle by one time step and drop those past the end."""
    if dt is not None and dt != params.dt:
        params = MobilityParams(**{**params.__dict__, "dt": dt})
    if not world:
        return []
    ids = np.array([w.id for w in world])
    pos = np.array([w.position for w in world], dtype=float)
    spd = np.array([w.speed for w in world], dtype=float)
    lane = np.array([w.lane for w in world], dtype=np.int64)
    npos, nspd = _step_arrays(pos, spd, lane, params)
    keep = npos <= params.highway_length
    return [VehicleState(int(i), float(x), float(v), int(l))
            for i, x, v, l in zip(ids[keep], npos[keep], nspd[keep], lane[keep])]


def _entry_speed(lane_pos, lane_spd, params: MobilityParams) -> float | None:
    """Largest safe speed at position 0 behind the last vehicle of a lane,
    capped by ``depart_speed``; ``None`` if the entry is blocked."""
    if lane_pos.size == 0:
        return params.depart_speed
    k = np.argmin(lane_pos)
    xl, vl = lane_pos[k], lane_spd[k]
    if xl < params.min_gap:
        return None
    room = xl + vl * vl / (2 * params.max_decel) - params.min_gap
    return min(params.depart_speed, math.sqrt(2 * params.max_decel * room))


def simulate(scenario: TrafficScenario, params: MobilityParams = MobilityParams(),
             run: int = 0) -> Iterator[Frame]:
    """Yield the road state at every snapshot instant ``k * snapshot_interval``."""
    arrivals = generate_arrivals(scenario, run, params.lane_count)
    steps_per_snap = scenario.snapshot_interval / params.dt
    if abs(steps_per_snap - round(steps_per_snap)) > 1e-9:
        raise ValueError("snapshot_interval must be a multiple of dt")
    steps_per_snap = int(round(steps_per_snap))
    total_steps = scenario.n_snapshots * steps_per_snap

    ids = np.empty(0, dtype=np.int64)
    pos = np.empty(0)
    spd = np.empty(0)
    lane = np.empty(0, dtype=np.int64)
    waiting = [deque() for _ in range(params.lane_count)]
    nxt = 0
    for k in range(1, total_steps + 1):
        pos, spd = _step_arrays(pos, spd, lane, params)
        keep = pos <= params.highway_length
        ids, pos, spd, lane = ids[keep], pos[keep], spd[keep], lane[keep]
        t = k * params.dt
        while nxt < len(arrivals) and arrivals.times[nxt] <= t:
            waiting[arrivals.lanes[nxt]].append(nxt)
            nxt += 1
        for ln, queue in enumerate(waiting):
            if not queue:
                continue
            on = lane == ln
            v0 = _entry_speed(pos[on], spd[on], params)
            if v0 is None:
                continue
            vid = queue.popleft()
            ids = np.append(ids, vid)
            pos = np.append(pos, 0.0)
            spd = np.append(spd, v0)
            lane = np.append(lane, ln)
        if k % steps_per_snap == 0:
            yield Frame(k // steps_per_snap * scenario.snapshot_interval,
                        ids.copy(), pos.copy(), spd.copy(), lane.copy())


def zone_of(positions, servers: Sequence[EdgeServer]) -> np.ndarray:
    """Serving server per position: the zone ``floor(x / spacing)``, clamped."""
    positions = np.asarray(positions, dtype=float)
    if len(servers) == 1:
        return np.zeros(positions.shape, dtype=np.int64)
    spacing = servers[1].position - servers[0].position
    z = np.floor((positions - servers[0].position) / spacing).astype(np.int64)
    return np.clip(z, 0, len(servers) - 1)


def neighbor_counts(zones: np.ndarray, n_zones: int, radius: int = 0) -> np.ndarray:
    """Vehicles other than the requester within ``radius`` zones of its own."""
    per_zone = np.bincount(zones, minlength=n_zones)
    if radius:
        window = np.convolve(per_zone, np.ones(2 * radius + 1, dtype=np.int64), mode="same")
    else:
        window = per_zone
    return window[zones] - 1


def snapshot(world: Sequence[VehicleState] | Frame, t: float,
             servers: Sequence[EdgeServer], radius: int = 0) -> list[VehicleSnapshot]:
    """Annotate vehicles with their serving server and neighbour count."""
    frame = world if isinstance(world, Frame) else Frame(
        t, np.array([w.id for w in world], dtype=np.int64),
        np.array([w.position for w in world], dtype=float),
        np.array([w.speed for w in world], dtype=float),
        np.array([w.lane for w in world], dtype=np.int64))
    if len(frame) == 0:
        return []
    zones = zone_of(frame.position, servers)
    nc = neighbor_counts(zones, len(servers), radius)
    return [VehicleSnapshot(int(i), float(x), int(z), int(c), float(t), int(l), float(v))
            for i, x, z, c, l, v in zip(frame.ids, frame.position, zones, nc,
                                        frame.lane, frame.speed)]


def write_trajectories(path, frames: Sequence[Frame], servers: Sequence[EdgeServer]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "id", "position", "speed", "lane", "zone"])
        for fr in frames:
            zones = zone_of(fr.position, servers)
            for i, x, v, l, z in zip(fr.ids, fr.position, fr.speed, fr.lane, zones):
                w.writerow([repr(fr.time), int(i), repr(float(x)), repr(float(v)), int(l), int(z)])
