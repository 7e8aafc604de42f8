"""Simulation loop tests.

Micro-scenarios with station-centered requests make waits and distances
exactly predictable, so the loop's bookkeeping can be checked to the
last meter; the conservation sweep then exercises every controller on a
synthetic workload with per-tick invariant assertions.
"""

import numpy as np
import pytest

from amodcc.demand import DemandFlow, TripTable, synth_demand
from amodcc.errors import InvalidInputError
from amodcc.forecast import train_bank
from amodcc.network import StationNetwork
from amodcc.sim import (DemandGrid, RunConfig, Scenario, benchmark_flows,
                        benchmark_network, benchmark_scenario,
                        initial_placement, run_simulation)


def two_station_net(step=300.0):
    pts = np.array([[0.0, 0.0], [3000.0, 0.0]])
    return StationNetwork.from_centroids(pts, speed_mps=10.0, step_seconds=step)


def table(rows):
    """rows of (t, origin_xy, dest_xy), already time-sorted."""
    return TripTable(times=[r[0] for r in rows],
                     origins=[r[1] for r in rows],
                     dests=[r[2] for r in rows])


A = (0.0, 0.0)
B = (3000.0, 0.0)


# --- construction and validation ------------------------------------------------


def test_scenario_validation():
    net = two_station_net()
    trips = table([(10.0, A, B)])
    with pytest.raises(InvalidInputError, match="sim_end"):
        Scenario(network=net, trips=trips, sim_start=100.0, sim_end=100.0,
                 fleet_size=1)
    with pytest.raises(InvalidInputError, match="fleet_size"):
        Scenario(network=net, trips=trips, sim_start=0.0, sim_end=600.0,
                 fleet_size=0)
    with pytest.raises(InvalidInputError, match="every vehicle"):
        Scenario(network=net, trips=trips, sim_start=0.0, sim_end=600.0,
                 fleet_size=2, initial_positions=[0])
    with pytest.raises(InvalidInputError, match="out of range"):
        Scenario(network=net, trips=trips, sim_start=0.0, sim_end=600.0,
                 fleet_size=2, initial_positions=[0, 5])


def test_run_config_validation():
    with pytest.raises(InvalidInputError, match="unknown controller"):
        RunConfig(controller="mpc")
    with pytest.raises(InvalidInputError, match="epsilon"):
        RunConfig(epsilon=0.0)
    with pytest.raises(InvalidInputError, match="horizon"):
        RunConfig(horizon=0)
    with pytest.raises(InvalidInputError, match="dispatch"):
        RunConfig(dispatch_seconds=0.0)


def test_cadences_must_divide_into_ticks():
    net = two_station_net()
    sc = Scenario(network=net, trips=table([(10.0, A, B)]),
                  sim_start=0.0, sim_end=3600.0, fleet_size=1)
    with pytest.raises(InvalidInputError, match="controller cadence"):
        run_simulation(sc, RunConfig(controller="fixed", mpc_seconds=45.0))
    with pytest.raises(InvalidInputError, match="simulation window"):
        run_simulation(Scenario(network=net, trips=table([(10.0, A, B)]),
                                sim_start=0.0, sim_end=3601.0, fleet_size=1),
                       RunConfig(controller="gbm"))


def test_bank_must_match_network():
    some_bank = train_bank(np.zeros((3, 3, 8)), np.arange(8) + 0.5, 900.0,
                           series_origin=0.0, window=(0.0, 8 * 900.0),
                           trained_at=0.0)
    sc = Scenario(network=two_station_net(), trips=table([(10.0, A, B)]),
                  sim_start=0.0, sim_end=3600.0, fleet_size=1)
    with pytest.raises(InvalidInputError, match="bank"):
        run_simulation(sc, RunConfig(controller="ccmpc"), bank=some_bank)


# --- demand grid ----------------------------------------------------------------


def test_demand_grid_bins_by_interval():
    net = two_station_net(step=600.0)
    trips = table([
        (-1.0, A, B),       # before the grid: dropped
        (0.0, A, B),        # interval 0 (left edge inclusive)
        (599.9, A, B),      # still interval 0
        (600.0, B, A),      # interval 1
        (1250.0, A, B),     # interval 2
        (3000.0, A, B),     # past the grid: dropped
    ])
    grid = DemandGrid(trips, net, origin_epoch=0.0, interval_seconds=600.0,
                      n_intervals=3)
    assert grid.counts[0, 1].tolist() == [2, 0, 1]
    assert grid.counts[1, 0].tolist() == [0, 1, 0]
    assert grid.counts.sum() == 4
    assert grid.midpoint_hours(0.0) == pytest.approx([300 / 3600, 900 / 3600,
                                                      1500 / 3600])


# --- initial placement ----------------------------------------------------------


def test_placement_uniform_without_history():
    net = StationNetwork.from_centroids(
        np.array([[0.0, 0], [1000.0, 0], [2000.0, 0], [3000.0, 0]]),
        speed_mps=10.0, step_seconds=300.0)
    pos = initial_placement(net, 10, None)
    assert len(pos) == 10
    counts = np.bincount(pos, minlength=4)
    assert counts.tolist() == [3, 3, 2, 2]     # remainder ties break low


def test_placement_follows_historical_origins():
    net = two_station_net()
    hist = DemandGrid(table([(50.0, B, A), (150.0, B, A), (250.0, B, A),
                             (350.0, A, B)]),
                      net, origin_epoch=0.0, interval_seconds=600.0,
                      n_intervals=1)
    pos = initial_placement(net, 4, hist)
    assert np.bincount(pos, minlength=2).tolist() == [1, 3]


# --- exact micro-runs -----------------------------------------------------------


def micro_scenario(fleet=2):
    # Requests sit exactly on station centroids, so approach legs are zero
    # and every distance is a whole travel-matrix entry.
    net = two_station_net()
    trips = table([(30.0, A, B), (155.0, B, A)])
    return Scenario(network=net, trips=trips, sim_start=0.0, sim_end=3600.0,
                    fleet_size=fleet, initial_positions=list(range(fleet)))


def test_reactive_run_is_exact():
    snaps = []
    m = run_simulation(micro_scenario(), RunConfig(controller="gbm"),
                       on_tick=snaps.append)
    assert m.served == 2 and m.requests == 2
    assert m.served_fraction == 1.0
    assert m.assigned_end == 0 and m.waiting_end == 0
    # First rider is picked up on the admitting tick; the second arrives at
    # t=155 and waits for the t=180 tick.
    assert sorted(m.waits.tolist()) == [0.0, 25.0]
    assert m.customer_m == 6000.0
    assert m.pickup_m == 0.0
    assert m.rebalance_m == 0.0                 # reactive: never rebalances
    assert m.total_m == 6000.0
    assert len(snaps) == 121                    # one per tick plus wrap-up
    assert np.array_equal(snaps[-1].vehicle_m, m.vehicle_m)
    for s in snaps:
        assert sum(s.leg_counts.values()) == 2
        assert int(s.status_counts.sum()) == 2
        assert int(s.status_counts[1:].sum()) == s.admitted


def test_oracle_prepositions_for_known_demand():
    # Single vehicle at station 0; the only request leaves station 1 late
    # enough that a planned rebalance beats any reactive pickup.
    net = two_station_net()
    sc = Scenario(network=net, trips=table([(2000.0, B, A)]),
                  sim_start=0.0, sim_end=3600.0, fleet_size=1,
                  initial_positions=[0])
    m = run_simulation(sc, RunConfig(controller="oracle"))
    assert m.served == 1
    assert m.rebalance_m == 3000.0
    assert m.pickup_m == 0.0
    assert m.waits[0] <= 900.0
    reactive = run_simulation(sc, RunConfig(controller="gbm"))
    assert m.waits[0] < reactive.waits[0]


def test_runs_are_deterministic():
    flows = [DemandFlow(origin=A, dest=B, spread=400.0,
                        profile=[(0.0, 24.0, 30.0)]),
             DemandFlow(origin=B, dest=A, spread=400.0,
                        profile=[(0.0, 24.0, 20.0)])]
    trips = synth_demand(flows, 0.0, 0.25, seed=11)
    sc = Scenario(network=two_station_net(), trips=trips, sim_start=0.0,
                  sim_end=6 * 3600.0, fleet_size=6)
    a = run_simulation(sc, RunConfig(controller="fixed"))
    b = run_simulation(sc, RunConfig(controller="fixed"))
    assert np.array_equal(a.waits, b.waits)
    assert np.array_equal(a.vehicle_m, b.vehicle_m)
    assert a.served == b.served


# --- conservation sweep ---------------------------------------------------------


def conservation_scenario():
    pts = np.array([[0.0, 0.0], [4000.0, 0.0], [2000.0, 3000.0]])
    net = StationNetwork.from_centroids(pts, speed_mps=10.0,
                                        step_seconds=300.0)
    flows = [DemandFlow(origin=(0.0, 0.0), dest=(4000.0, 0.0), spread=600.0,
                        profile=[(0.0, 24.0, 40.0)]),
             DemandFlow(origin=(2000.0, 3000.0), dest=(0.0, 0.0), spread=600.0,
                        profile=[(2.0, 5.0, 60.0)])]
    trips = synth_demand(flows, 0.0, 2.0, seed=23)
    day = 86_400.0
    return Scenario(network=net, trips=trips, sim_start=day,
                    sim_end=day + 6 * 3600.0, fleet_size=10)


@pytest.mark.parametrize("controller", ["gbm", "fixed", "oracle", "ccmpc"])
def test_every_tick_conserves_fleet_and_requests(controller):
    sc = conservation_scenario()
    cfg = RunConfig(controller=controller, horizon=4,
                    train_window_days=1.0, epsilon=0.35)
    seen = []

    def check(s):
        assert sum(s.leg_counts.values()) == sc.fleet_size
        assert int(s.status_counts.sum()) == len(
            sc.trips.window(sc.sim_start, sc.sim_end))
        assert int(s.status_counts[1:].sum()) == s.admitted
        if seen:
            prev = seen[-1]
            assert s.admitted >= prev.admitted
            assert np.all(s.vehicle_m >= prev.vehicle_m)
        seen.append(s)

    m = run_simulation(sc, cfg, on_tick=check)
    assert len(seen) == 721
    assert m.served + m.assigned_end + m.waiting_end <= m.requests
    final = seen[-1]
    assert np.array_equal(final.vehicle_m, m.vehicle_m)
    assert m.total_m == pytest.approx(final.vehicle_m.sum())
    if controller == "gbm":
        assert m.rebalance_m == 0.0
    else:
        assert len(m.solver_wall) > 0


# --- benchmark workload ---------------------------------------------------------


def test_benchmark_city_shape():
    net = benchmark_network()
    assert net.n_stations == 10
    assert net.step_seconds == 900.0
    assert net.speed_mps == 10.0
    spread = net.centroids.max(axis=0) - net.centroids.min(axis=0)
    assert spread == pytest.approx([10_000.0, 10_000.0])

    flows = benchmark_flows()
    per_day = sum(f.expected_trips(0.0, 86_400.0, 0.0) for f in flows)
    assert per_day == pytest.approx(220 * 3 + 220 * 3 + 70 * 24)


def test_benchmark_scenario_window():
    sc = benchmark_scenario(7, history_days=2.0, sim_days=0.5)
    assert sc.fleet_size == 300
    assert sc.sim_end - sc.sim_start == pytest.approx(43_200.0)
    hist = sc.trips.window(sc.trips.times[0], sc.sim_start)
    live = sc.trips.window(sc.sim_start, sc.sim_end)
    assert len(hist) > 0 and len(live) > 0
    assert len(hist) + len(live) == len(sc.trips)
