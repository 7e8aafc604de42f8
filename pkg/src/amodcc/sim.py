"""Discrete-time fleet simulation.

The clock advances in dispatch ticks (30 s by default).  Each tick
completes travel legs, admits newly arrived requests, matches idle
vehicles to waiting requests, and, on its own coarser cadence, lets the
active controller plan rebalancing.  Only the plan's first step is
executed; everything downstream of that decision (pickup legs, customer
legs, rebalancing legs) plays out in continuous time against the
network's travel matrices.

Controllers:

* ``ccmpc``  - forecast-driven optimizer with a tunable risk level.
* ``fixed``  - same optimizer fed the previous interval's realized counts.
* ``oracle`` - same optimizer fed the true future counts.
* ``gbm``    - no rebalancing; global nearest matching every tick.

The first three dispatch per station (the optimizer owns cross-station
movement); ``gbm`` matches any vehicle to any request.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .dispatch import assign_pickups
from .errors import InvalidInputError
from .forecast import ForecastBank, bank_train_config, forecast_demand, train_bank
from .gp import TrainConfig
from .ilp import SolverConfig
from .mpc import CostWeights, quantile_demand, solve_rebalance
from .network import (
    FleetState,
    StationNetwork,
    assign_stations,
    outstanding_matrix,
)
from .demand import DAY, DemandFlow, TripTable, synth_demand

CONTROLLERS = ("ccmpc", "fixed", "oracle", "gbm")


@dataclass
class Scenario:
    """A network, a trip stream, and the window to simulate.

    Trips before ``sim_start`` are history (GP training data); trips in
    ``[sim_start, sim_end)`` are the live workload.
    """

    network: StationNetwork
    trips: TripTable
    sim_start: float
    sim_end: float
    fleet_size: int
    initial_positions: np.ndarray | None = None    # (fleet,) station ids

    def __post_init__(self):
        if self.sim_end <= self.sim_start:
            raise InvalidInputError("sim_end must be after sim_start")
        if self.fleet_size < 1:
            raise InvalidInputError("fleet_size must be >= 1")
        if self.initial_positions is not None:
            pos = np.asarray(self.initial_positions, dtype=int)
            if pos.shape != (self.fleet_size,):
                raise InvalidInputError("initial_positions must list every vehicle")
            if np.any((pos < 0) | (pos >= self.network.n_stations)):
                raise InvalidInputError("initial_positions station out of range")
            self.initial_positions = pos


class DemandGrid:
    """Realized per-interval origin-destination counts over a time range."""

    def __init__(self, trips: TripTable, network: StationNetwork,
                 origin_epoch: float, interval_seconds: float, n_intervals: int):
        self.origin = float(origin_epoch)
        self.interval_seconds = float(interval_seconds)
        self.n_intervals = int(n_intervals)
        n = network.n_stations
        self.counts = np.zeros((n, n, self.n_intervals), dtype=np.int64)
        if len(trips) == 0:
            return
        m = np.floor((trips.times - self.origin) / self.interval_seconds).astype(int)
        keep = (m >= 0) & (m < self.n_intervals)
        if not np.any(keep):
            return
        o_st = assign_stations(network.centroids, trips.origins[keep])
        d_st = assign_stations(network.centroids, trips.dests[keep])
        np.add.at(self.counts, (o_st, d_st, m[keep]), 1)

    def midpoint_hours(self, ref_epoch: float) -> np.ndarray:
        """Interval midpoints as hours relative to ``ref_epoch``."""
        mids = self.origin + (np.arange(self.n_intervals) + 0.5) * self.interval_seconds
        return (mids - ref_epoch) / 3600.0


@dataclass
class RunConfig:
    """Knobs for one simulation run."""

    controller: str = "ccmpc"
    epsilon: float = 0.35
    horizon: int = 12
    dispatch_seconds: float = 30.0
    mpc_seconds: float | None = None       # default: one model step
    gp_seconds: float = 86_400.0
    train_window_days: float = 5.0
    backlog_cost: float = 10.0
    pickup_delay_slope: float = 0.1
    solver: SolverConfig = field(default_factory=SolverConfig)
    gp_train: TrainConfig | None = None
    gp_jobs: int = 1
    check_invariants: bool = True

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise InvalidInputError(
                f"unknown controller {self.controller!r}; pick one of {CONTROLLERS}")
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidInputError("epsilon must lie in (0, 1)")
        if self.horizon < 1:
            raise InvalidInputError("horizon must be >= 1")
        if self.dispatch_seconds <= 0:
            raise InvalidInputError("dispatch_seconds must be positive")


@dataclass
class Vehicle:
    vid: int
    station: int
    xy: np.ndarray
    leg: str = "idle"                # idle | pickup | customer | rebalance
    busy_until: float = 0.0
    request: int = -1
    dest_station: int = -1
    dest_xy: np.ndarray | None = None
    arrives_at: float = 0.0          # when the whole task chain ends
    leg_m: float = 0.0               # distance credited at leg completion


@dataclass
class SimMetrics:
    """Outcome of one run; derived rates are properties."""

    controller: str
    epsilon: float | None
    fleet: int
    requests: int
    served: int
    assigned_end: int
    waiting_end: int
    waits: np.ndarray                # seconds, one per completed pickup
    vehicle_m: np.ndarray            # (fleet, 3): customer, rebalance, pickup
    solver_wall: list[float] = field(default_factory=list)
    solver_nodes: list[int] = field(default_factory=list)
    clamped: int = 0
    seed: int | None = None

    @property
    def served_fraction(self) -> float:
        return self.served / self.requests if self.requests else 0.0

    @property
    def customer_m(self) -> float:
        return float(np.sum(self.vehicle_m[:, 0]))

    @property
    def rebalance_m(self) -> float:
        return float(np.sum(self.vehicle_m[:, 1]))

    @property
    def pickup_m(self) -> float:
        return float(np.sum(self.vehicle_m[:, 2]))

    @property
    def mean_wait_s(self) -> float:
        return float(np.mean(self.waits)) if len(self.waits) else 0.0

    @property
    def median_wait_s(self) -> float:
        return float(np.median(self.waits)) if len(self.waits) else 0.0

    @property
    def total_m(self) -> float:
        return self.customer_m + self.rebalance_m + self.pickup_m


@dataclass(frozen=True)
class TickSnapshot:
    """Loop state right after one tick's phases, for outside observers.

    ``status_counts`` buckets requests by lifecycle stage: not yet
    arrived, waiting, assigned, on board, served.
    """

    tick: int
    now: float
    leg_counts: dict[str, int]       # idle / pickup / customer / rebalance
    admitted: int
    status_counts: np.ndarray        # (5,)
    vehicle_m: np.ndarray            # (fleet, 3): customer, rebalance, pickup


def _whole_ticks(value: float, tick: float, what: str) -> int:
    ratio = value / tick
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise InvalidInputError(
            f"{what} ({value} s) must be a positive whole number of "
            f"{tick} s dispatch ticks")
    return int(round(ratio))


def initial_placement(network: StationNetwork, fleet_size: int,
                      history: DemandGrid | None) -> np.ndarray:
    """Spread the fleet over stations by historical origin share.

    Largest-remainder rounding keeps the total exact; with no history the
    split is uniform.  Ties go to the lower station index.
    """
    n = network.n_stations
    if history is not None and history.counts.sum() > 0:
        share = history.counts.sum(axis=(1, 2)).astype(float)
        share /= share.sum()
    else:
        share = np.full(n, 1.0 / n)
    quota = fleet_size * share
    base = np.floor(quota).astype(int)
    short = fleet_size - int(base.sum())
    if short > 0:
        order = np.argsort(-(quota - base), kind="stable")
        base[order[:short]] += 1
    return np.repeat(np.arange(n), base)


def _euclid(a: np.ndarray, b: np.ndarray) -> float:
    return float(math.hypot(a[0] - b[0], a[1] - b[1]))


class _Run:
    """Mutable state for one simulation; `execute` drives it to the end."""

    def __init__(self, scenario: Scenario, cfg: RunConfig,
                 bank: ForecastBank | None = None):
        self.sc = scenario
        self.cfg = cfg
        net = scenario.network
        self.net = net
        tick = cfg.dispatch_seconds
        self.tick = tick
        self.n_ticks = _whole_ticks(scenario.sim_end - scenario.sim_start,
                                    tick, "simulation window")
        self.step_ticks = _whole_ticks(net.step_seconds, tick, "model step")
        mpc_seconds = cfg.mpc_seconds if cfg.mpc_seconds is not None else net.step_seconds
        self.mpc_ticks = _whole_ticks(mpc_seconds, tick, "controller cadence")
        self.gp_ticks = _whole_ticks(cfg.gp_seconds, tick, "retraining cadence")
        self.window_intervals = _whole_ticks(
            cfg.train_window_days * DAY, net.step_seconds, "training window")

        sim_intervals = -(-self.n_ticks // self.step_ticks)
        grid_origin = scenario.sim_start - cfg.train_window_days * DAY
        self.grid = DemandGrid(
            scenario.trips, net, grid_origin, net.step_seconds,
            self.window_intervals + sim_intervals + cfg.horizon + 1)
        self.t_hours = self.grid.midpoint_hours(scenario.sim_start)

        live = scenario.trips.window(scenario.sim_start, scenario.sim_end)
        self.req_times = live.times
        self.req_o_xy = live.origins
        self.req_d_xy = live.dests
        self.req_o_st = (assign_stations(net.centroids, live.origins)
                         if len(live) else np.zeros(0, dtype=int))
        self.req_d_st = (assign_stations(net.centroids, live.dests)
                         if len(live) else np.zeros(0, dtype=int))
        self.n_requests = len(live)
        # 0 pending, 1 waiting, 2 assigned, 3 aboard, 4 served
        self.req_status = np.zeros(self.n_requests, dtype=np.int8)
        self.next_request = 0
        self.waiting: list[int] = []

        positions = (scenario.initial_positions
                     if scenario.initial_positions is not None
                     else initial_placement(
                         net, scenario.fleet_size,
                         self._history_grid_or_none()))
        self.vehicles = [Vehicle(vid=v, station=int(s),
                                 xy=net.centroids[int(s)].copy())
                         for v, s in enumerate(positions)]

        self.weights = CostWeights.defaults(
            net, cfg.horizon, backlog_cost=cfg.backlog_cost,
            pickup_delay_slope=cfg.pickup_delay_slope)
        self.bank = bank
        self.waits: list[float] = []
        self.served = 0
        self.vehicle_m = np.zeros((scenario.fleet_size, 3))
        self.solver_wall: list[float] = []
        self.solver_nodes: list[int] = []
        self.clamped = 0

    def _history_grid_or_none(self) -> DemandGrid | None:
        if self.grid.counts[:, :, :self.window_intervals].sum() == 0:
            return None
        hist = DemandGrid.__new__(DemandGrid)
        hist.origin = self.grid.origin
        hist.interval_seconds = self.grid.interval_seconds
        hist.n_intervals = self.window_intervals
        hist.counts = self.grid.counts[:, :, :self.window_intervals]
        return hist

    # --- per-tick phases ---------------------------------------------------

    def _complete_legs(self, now: float) -> None:
        due = [v for v in self.vehicles
               if v.leg != "idle" and v.busy_until <= now]
        due.sort(key=lambda v: (v.busy_until, v.vid))
        for v in due:
            if v.leg == "pickup":
                self.vehicle_m[v.vid, 2] += v.leg_m
                rid = v.request
                self.waits.append(v.busy_until - self.req_times[rid])
                self.req_status[rid] = 3
                o_xy = self.req_o_xy[rid]
                d_xy = self.req_d_xy[rid]
                i, j = int(self.req_o_st[rid]), int(self.req_d_st[rid])
                v.xy = o_xy.copy()
                v.leg = "customer"
                v.busy_until = v.arrives_at
                v.leg_m = (self.net.travel_distance[i, j] if i != j
                           else _euclid(o_xy, d_xy))
            elif v.leg == "customer":
                self.vehicle_m[v.vid, 0] += v.leg_m
                rid = v.request
                self.req_status[rid] = 4
                self.served += 1
                v.xy = self.req_d_xy[rid].copy()
                v.station = int(self.req_d_st[rid])
                v.leg = "idle"
                v.request = -1
            elif v.leg == "rebalance":
                self.vehicle_m[v.vid, 1] += v.leg_m
                v.xy = self.net.centroids[v.dest_station].copy()
                v.station = v.dest_station
                v.leg = "idle"

    def _admit(self, now: float) -> None:
        while (self.next_request < self.n_requests
               and self.req_times[self.next_request] <= now):
            self.req_status[self.next_request] = 1
            self.waiting.append(self.next_request)
            self.next_request += 1

    def _start_pickup(self, v: Vehicle, rid: int, now: float) -> None:
        o_xy = self.req_o_xy[rid]
        d_xy = self.req_d_xy[rid]
        i, j = int(self.req_o_st[rid]), int(self.req_d_st[rid])
        approach = _euclid(v.xy, o_xy)
        pickup_end = now + approach / self.net.speed_mps
        ride = (self.net.travel_time[i, j] if i != j
                else _euclid(o_xy, d_xy) / self.net.speed_mps)
        v.leg = "pickup"
        v.request = rid
        v.busy_until = pickup_end
        v.arrives_at = pickup_end + ride
        v.dest_station = j
        v.dest_xy = d_xy
        v.leg_m = approach
        self.req_status[rid] = 2

    def _dispatch(self, now: float) -> None:
        if not self.waiting:
            return
        if self.cfg.controller == "gbm":
            idle = [v for v in self.vehicles if v.leg == "idle"]
            if not idle:
                return
            reqs = list(self.waiting)
            pairs = assign_pickups(np.array([v.xy for v in idle]),
                                   self.req_o_xy[reqs])
            for vi, ri in pairs:
                self._start_pickup(idle[vi], reqs[ri], now)
            self.waiting = [r for r in self.waiting if self.req_status[r] == 1]
            return
        served_any = False
        idle_by_station: dict[int, list[Vehicle]] = {}
        for v in self.vehicles:
            if v.leg == "idle":
                idle_by_station.setdefault(v.station, []).append(v)
        for st, group in sorted(idle_by_station.items()):
            reqs = [r for r in self.waiting if self.req_o_st[r] == st]
            if not reqs:
                continue
            pairs = assign_pickups(np.array([v.xy for v in group]),
                                   self.req_o_xy[reqs])
            for vi, ri in pairs:
                self._start_pickup(group[vi], reqs[ri], now)
                served_any = True
        if served_any:
            self.waiting = [r for r in self.waiting if self.req_status[r] == 1]

    def _interval_index(self, k_tick: int) -> int:
        """Grid interval containing tick ``k_tick`` of the live window."""
        return self.window_intervals + (k_tick // self.step_ticks)

    def _retrain(self, now: float, k_tick: int) -> None:
        end_m = self._interval_index(k_tick)
        start_m = end_m - self.window_intervals
        window = (self.grid.origin + start_m * self.grid.interval_seconds,
                  self.grid.origin + end_m * self.grid.interval_seconds)
        self.bank = train_bank(
            self.grid.counts[:, :, start_m:end_m],
            self.t_hours[start_m:end_m],
            self.net.step_seconds,
            series_origin=self.sc.sim_start,
            window=window,
            trained_at=now,
            cfg=self.cfg.gp_train or bank_train_config(),
            n_jobs=self.cfg.gp_jobs,
        )

    def _demand_tensor(self, k_tick: int, now: float) -> np.ndarray:
        n = self.net.n_stations
        steps = self.cfg.horizon + 1
        kind = self.cfg.controller
        if kind == "ccmpc":
            fc = forecast_demand(self.bank, now, self.cfg.horizon,
                                 self.net.step_seconds)
            return quantile_demand(fc.mean, fc.std, self.cfg.epsilon)
        demand = np.zeros((n, n, steps), dtype=np.int64)
        if kind == "fixed":
            prev = self._interval_index(k_tick) - 1
            demand[:, :, 1:] = self.grid.counts[:, :, prev][:, :, None]
        elif kind == "oracle":
            # Step k covers (now + (k-1) dt, now + k dt], so the current
            # grid interval is the first one the plan must anticipate.
            m_now = self._interval_index(k_tick)
            demand[:, :, 1:] = self.grid.counts[:, :, m_now:m_now + steps - 1]
        idx = np.arange(n)
        demand[idx, idx, :] = 0
        return demand

    def _fleet_state(self, now: float) -> FleetState:
        n = self.net.n_stations
        idle = np.zeros(n, dtype=int)
        arrivals: list[tuple[int, int]] = []
        dt = self.net.step_seconds
        for v in self.vehicles:
            if v.leg == "idle":
                idle[v.station] += 1
            else:
                landing = v.arrives_at if v.leg in ("pickup", "customer") \
                    else v.busy_until
                steps = max(1, math.ceil((landing - now) / dt))
                arrivals.append((v.dest_station, steps))
        return FleetState(idle=idle, arrivals=arrivals)

    def _outstanding(self) -> np.ndarray:
        pairs = [(int(self.req_o_st[r]), int(self.req_d_st[r]))
                 for r in self.waiting
                 if self.req_o_st[r] != self.req_d_st[r]]
        return outstanding_matrix(self.net.n_stations, pairs)

    def _control(self, now: float, k_tick: int) -> None:
        state = self._fleet_state(now)
        outstanding = self._outstanding()
        demand = self._demand_tensor(k_tick, now)
        plan = solve_rebalance(self.net, state, outstanding, demand,
                               weights=self.weights, cfg=self.cfg.solver)
        self.solver_wall.append(plan.wall_seconds)
        self.solver_nodes.append(plan.nodes)
        if self.cfg.check_invariants:
            plan.verify_against(self.net, state, outstanding, demand)

        first = plan.first_step
        idle_by_station: dict[int, list[Vehicle]] = {}
        for v in self.vehicles:
            if v.leg == "idle":
                idle_by_station.setdefault(v.station, []).append(v)
        for i in range(self.net.n_stations):
            pool = sorted(idle_by_station.get(i, []), key=lambda v: v.vid)
            at = 0
            for j in range(self.net.n_stations):
                want = int(first[i, j])
                if want == 0 or i == j:
                    continue
                take = min(want, len(pool) - at)
                self.clamped += want - take
                for _ in range(take):
                    v = pool[at]
                    at += 1
                    v.leg = "rebalance"
                    v.busy_until = now + self.net.travel_time[i, j]
                    v.dest_station = j
                    v.dest_xy = self.net.centroids[j]
                    v.leg_m = float(self.net.travel_distance[i, j])

    # --- main loop -----------------------------------------------------------

    def _snapshot(self, k: int, now: float) -> TickSnapshot:
        legs = {"idle": 0, "pickup": 0, "customer": 0, "rebalance": 0}
        for v in self.vehicles:
            legs[v.leg] += 1
        return TickSnapshot(
            tick=k,
            now=now,
            leg_counts=legs,
            admitted=self.next_request,
            status_counts=np.bincount(self.req_status, minlength=5),
            vehicle_m=self.vehicle_m.copy(),
        )

    def execute(self, on_tick=None) -> SimMetrics:
        cfg = self.cfg
        uses_mpc = cfg.controller != "gbm"
        if cfg.controller == "ccmpc" and self.bank is None:
            self._retrain(self.sc.sim_start, 0)
        for k in range(self.n_ticks):
            now = self.sc.sim_start + k * self.tick
            self._complete_legs(now)
            self._admit(now)
            self._dispatch(now)
            if (cfg.controller == "ccmpc" and k > 0
                    and k % self.gp_ticks == 0):
                self._retrain(now, k)
            if uses_mpc and k % self.mpc_ticks == 0:
                self._control(now, k)
            if on_tick is not None:
                on_tick(self._snapshot(k, now))
        self._complete_legs(self.sc.sim_end)
        self._admit(self.sc.sim_end)
        if on_tick is not None:
            on_tick(self._snapshot(self.n_ticks, self.sc.sim_end))

        status = self.req_status
        return SimMetrics(
            controller=cfg.controller,
            epsilon=cfg.epsilon if cfg.controller == "ccmpc" else None,
            fleet=self.sc.fleet_size,
            requests=self.n_requests,
            served=self.served,
            assigned_end=int(np.sum((status == 2) | (status == 3))),
            waiting_end=int(np.sum(status == 1)),
            waits=np.asarray(self.waits),
            vehicle_m=self.vehicle_m.copy(),
            solver_wall=self.solver_wall,
            solver_nodes=self.solver_nodes,
            clamped=self.clamped,
        )


def run_simulation(scenario: Scenario, cfg: RunConfig | None = None,
                   bank: ForecastBank | None = None,
                   on_tick=None) -> SimMetrics:
    """Simulate one scenario under one controller configuration.

    A pre-trained forecast bank may be passed to skip the initial
    training (scheduled retrains still happen); it must have been built
    against the same station network and interval size.  ``on_tick``,
    if given, is called with a :class:`TickSnapshot` after every tick
    and once more after the end-of-day wrap-up.
    """
    cfg = cfg or RunConfig()
    if bank is not None:
        if bank.n_stations != scenario.network.n_stations:
            raise InvalidInputError("forecast bank does not match the network")
        if abs(bank.interval_seconds - scenario.network.step_seconds) > 1e-9:
            raise InvalidInputError(
                "forecast bank interval does not match the network step")
        if abs(bank.series_origin - scenario.sim_start) > 1e-6:
            raise InvalidInputError(
                "forecast bank hour axis must be rebased at sim_start; "
                "train with the window ending there")
    return _Run(scenario, cfg, bank=bank).execute(on_tick=on_tick)


# --- benchmark workload ---------------------------------------------------------


BENCHMARK_EPOCH = 1_600_000_000.0       # arbitrary whole-day anchor


def benchmark_network() -> StationNetwork:
    """Fixed ten-station layout on a 10 km grid, 10 m/s travel."""
    pts = np.array([
        [0.0, 0.0], [5000.0, 0.0], [10000.0, 0.0],
        [0.0, 5000.0], [5000.0, 5000.0], [10000.0, 5000.0],
        [0.0, 10000.0], [5000.0, 10000.0], [10000.0, 10000.0],
        [2500.0, 7500.0],
    ])
    return StationNetwork.from_centroids(pts, speed_mps=10.0, step_seconds=900.0)


def benchmark_flows() -> list[DemandFlow]:
    """Commute surges over a uniform background.

    Morning pushes the south-west corner toward the north-east, the
    evening reverses it, and a wide low-rate background keeps every
    station pair alive.  Day-to-day intensity varies and the commute
    peaks drift around the clock, so a forecaster only ever sees the
    pattern, never the day.
    """
    sw = (1000.0, 1000.0)
    ne = (9000.0, 9000.0)
    center = (5000.0, 5000.0)
    return [
        DemandFlow(origin=sw, dest=ne, spread=2500.0,
                   profile=[(7.0, 10.0, 220.0)],
                   day_jitter=0.25, peak_jitter=0.75),
        DemandFlow(origin=ne, dest=sw, spread=2500.0,
                   profile=[(16.0, 19.0, 220.0)],
                   day_jitter=0.25, peak_jitter=0.75),
        DemandFlow(origin=center, dest=center, spread=6000.0,
                   profile=[(0.0, 24.0, 70.0)], day_jitter=0.10),
    ]


def benchmark_scenario(seed: int, fleet_size: int = 300,
                       history_days: float = 5.0,
                       sim_days: float = 1.0) -> Scenario:
    """History plus one live day on the fixed benchmark city."""
    net = benchmark_network()
    start = BENCHMARK_EPOCH + history_days * DAY
    trips = synth_demand(benchmark_flows(),
                         start_epoch=BENCHMARK_EPOCH,
                         days=history_days + sim_days,
                         seed=seed)
    return Scenario(network=net, trips=trips, sim_start=start,
                    sim_end=start + sim_days * DAY, fleet_size=fleet_size)


def _sweep_worker(args) -> list[SimMetrics]:
    seed, epsilons, cfg, make_scenario = args
    scenario = make_scenario(seed)
    rows: list[SimMetrics] = []
    bank = None
    for eps in epsilons:
        run_cfg = replace(cfg, controller="ccmpc", epsilon=float(eps))
        if bank is None:
            probe = _Run(scenario, run_cfg)
            probe._retrain(scenario.sim_start, 0)
            bank = probe.bank
        m = run_simulation(scenario, run_cfg, bank=bank)
        m.seed = seed
        rows.append(m)
    return rows


def sweep_epsilon(
    seeds: list[int],
    epsilons: list[float],
    cfg: RunConfig | None = None,
    make_scenario: Callable[[int], Scenario] = benchmark_scenario,
    n_jobs: int = 1,
) -> list[SimMetrics]:
    """Risk-level sweep: same trip streams, varying epsilon only.

    Each seed's scenario and forecast bank are built once and shared by
    every epsilon, so rows differ only through the controller's risk
    appetite.  Seeds can run in parallel processes.
    """
    cfg = cfg or RunConfig()
    jobs = [(seed, list(epsilons), cfg, make_scenario) for seed in seeds]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            chunks = list(pool.map(_sweep_worker, jobs))
    else:
        chunks = [_sweep_worker(j) for j in jobs]
    return [m for chunk in chunks for m in chunk]
