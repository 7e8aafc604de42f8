"""Receding-horizon rebalancing optimizer.

Each control instant solves one integer program over four flow tensors,
all shaped (N, N, T+1): proactive rebalancing trips, customer-carrying
trips, the backlog of admitted-but-unserved requests, and the pickup
schedule for requests already waiting when the horizon opens.  Customer
movement is free; the objective trades rebalancing distance against
backlog and late-pickup penalties.  Only the first rebalancing step is
ever executed; the rest of the plan exists to price the future.

Demand uncertainty enters through the right-hand side only: the service
rows require enough capacity for the forecast's ``1 - epsilon`` quantile,
so risk appetite is one scalar.  At ``epsilon = 0.5`` the quantile
collapses to the forecast mean and the problem is exactly the
deterministic one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import InvalidInputError, SolverError
from .gp import gaussian_quantile
from .ilp import IlpProblem, IlpSolution, SolverConfig, solve_ilp
from .network import FleetState, StationNetwork

REBALANCE, CUSTOMER, BACKLOG, PICKUP = range(4)
_PREFIX = ("reb", "srv", "bkl", "pkp")


def var_index(kind: int, i: int, j: int, k: int, n: int, horizon: int) -> int:
    """Flat column index; kind-major, then origin, destination, step."""
    return ((kind * n + i) * n + j) * (horizon + 1) + k


def quantile_demand(mean: np.ndarray, std: np.ndarray, epsilon: float) -> np.ndarray:
    """Integer per-step demand covering the forecast's 1-epsilon quantile.

    Values are ceiled to whole requests (quantiles within 1e-9 of an
    integer snap to it, so exact means stay exact), clamped at zero, and
    zeroed on the diagonal: a station never generates trips to itself.
    """
    if not 0.0 < epsilon < 1.0:
        raise InvalidInputError(f"epsilon must lie in (0, 1), got {epsilon}")
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    q = gaussian_quantile(1.0 - epsilon, mean, np.broadcast_to(std, mean.shape))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    nearest = np.round(q)
    snapped = np.where(np.abs(q - nearest) <= 1e-9, nearest, np.ceil(q))
    out = np.maximum(snapped, 0.0).astype(np.int64)
    if out.ndim >= 2 and out.shape[0] == out.shape[1]:
        idx = np.arange(out.shape[0])
        out[idx, idx] = 0
    return out


@dataclass
class CostWeights:
    """Objective weights: rebalance per flow, backlog/pickup per step."""

    rebalance: np.ndarray       # (N, N) or (N, N, T+1), >= 0
    backlog: np.ndarray         # (T+1,), > 0
    pickup_delay: np.ndarray    # (T+1,), >= 0 and non-decreasing

    @classmethod
    def defaults(cls, network: StationNetwork, horizon: int,
                 backlog_cost: float = 10.0,
                 pickup_delay_slope: float = 0.1) -> "CostWeights":
        """Distance-priced rebalancing (km), flat backlog, linear delay."""
        return cls(rebalance=network.travel_distance / 1000.0,
                   backlog=np.full(horizon + 1, float(backlog_cost)),
                   pickup_delay=pickup_delay_slope * np.arange(horizon + 1, dtype=float))

    def expanded(self, n: int, horizon: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        reb = np.asarray(self.rebalance, dtype=float)
        if reb.ndim == 2:
            reb = reb[:, :, None]
        try:
            reb = np.broadcast_to(reb, (n, n, horizon + 1))
        except ValueError:
            raise InvalidInputError(
                f"rebalance weights {np.asarray(self.rebalance).shape} do not "
                f"broadcast to ({n}, {n}, {horizon + 1})")
        backlog = np.asarray(self.backlog, dtype=float)
        pickup = np.asarray(self.pickup_delay, dtype=float)
        if backlog.shape != (horizon + 1,) or pickup.shape != (horizon + 1,):
            raise InvalidInputError("backlog/pickup weights must have length T+1")
        if np.any(reb < 0) or np.any(pickup < 0):
            raise InvalidInputError("cost weights must be non-negative")
        if np.any(backlog <= 0):
            raise InvalidInputError("backlog weights must be positive")
        if np.any(np.diff(pickup) < 0):
            raise InvalidInputError("pickup delay weights must be non-decreasing")
        return reb, backlog, pickup


def build_problem(
    network: StationNetwork,
    state: FleetState,
    outstanding: np.ndarray,
    demand: np.ndarray,
    weights: CostWeights,
) -> IlpProblem:
    """Assemble the integer program for one control instant.

    ``demand[i, j, k]`` is the integer request count the plan must cover
    in horizon step k >= 1 (slice k = 0 is ignored; requests already
    waiting enter through ``outstanding`` instead).
    """
    n = network.n_stations
    demand = np.asarray(demand)
    if demand.ndim != 3 or demand.shape[:2] != (n, n) or demand.shape[2] < 2:
        raise InvalidInputError(
            f"demand must be (N, N, T+1) with T >= 1, got {demand.shape}")
    if np.any(demand < 0) or np.any(demand != np.floor(demand)):
        raise InvalidInputError("demand must contain non-negative integers")
    if np.any(np.diagonal(demand[:, :, 1:]) != 0):
        raise InvalidInputError("demand diagonal must be zero")
    outstanding = np.asarray(outstanding)
    if outstanding.shape != (n, n):
        raise InvalidInputError(f"outstanding must be (N, N), got {outstanding.shape}")
    if np.any(outstanding < 0) or np.any(np.diag(outstanding) != 0):
        raise InvalidInputError("outstanding must be non-negative, zero diagonal")
    if state.idle.shape != (n,):
        raise InvalidInputError("fleet state does not match the network size")
    horizon = demand.shape[2] - 1
    steps = horizon + 1
    reb_w, backlog_w, pickup_w = weights.expanded(n, horizon)
    kappa = network.kappa

    def col(kind, i, j, k):
        return ((kind * n + i) * n + j) * steps + k

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    b: list[float] = []
    senses: list[str] = []
    row_names: list[str] = []

    def add(r, kind, i, j, k, v):
        rows.append(r)
        cols.append(col(kind, i, j, k))
        vals.append(v)

    r = 0
    # Pickups of already-waiting requests either move now or queue.
    for i in range(n):
        for j in range(n):
            add(r, PICKUP, i, j, 0, 1.0)
            add(r, CUSTOMER, i, j, 0, -1.0)
            add(r, BACKLOG, i, j, 0, -1.0)
            b.append(0.0)
            senses.append("E")
            row_names.append(f"fs_{i}_{j}")
            r += 1

    # Queue recursion: service plus carried backlog covers each step's
    # quantile demand and scheduled pickups exactly.
    for i in range(n):
        for j in range(n):
            for k in range(1, steps):
                add(r, CUSTOMER, i, j, k, 1.0)
                add(r, BACKLOG, i, j, k, 1.0)
                add(r, BACKLOG, i, j, k - 1, -1.0)
                add(r, PICKUP, i, j, k, -1.0)
                b.append(float(demand[i, j, k]))
                senses.append("E")
                row_names.append(f"q_{i}_{j}_{k}")
                r += 1

    # Vehicle availability: cumulative departures from a station never
    # exceed its opening stock plus everything that has landed by then.
    arr = state.arrival_counts(horizon)
    arr_cum = np.cumsum(arr, axis=1)
    for i in range(n):
        for k in range(steps):
            for j in range(n):
                if j == i:
                    continue
                for sig in range(k + 1):
                    add(r, REBALANCE, i, j, sig, 1.0)
                    add(r, CUSTOMER, i, j, sig, 1.0)
                last_in = k - int(kappa[j, i])
                for sig in range(last_in + 1):
                    add(r, REBALANCE, j, i, sig, -1.0)
                    add(r, CUSTOMER, j, i, sig, -1.0)
            b.append(float(state.idle[i] + arr_cum[i, k]))
            senses.append("L")
            row_names.append(f"av_{i}_{k}")
            r += 1

    # Every waiting request gets picked up somewhere in the horizon.
    for i in range(n):
        for j in range(n):
            for k in range(steps):
                add(r, PICKUP, i, j, k, 1.0)
            b.append(float(outstanding[i, j]))
            senses.append("E")
            row_names.append(f"pk_{i}_{j}")
            r += 1

    n_vars = 4 * n * n * steps
    a = sparse.coo_matrix((vals, (rows, cols)), shape=(r, n_vars)).tocsr()

    c = np.zeros((4, n, n, steps))
    c[REBALANCE] = reb_w
    c[BACKLOG] = backlog_w
    c[PICKUP] = pickup_w

    lb = np.zeros(n_vars)
    ub = np.full(n_vars, np.inf)
    for i in range(n):
        for k in range(steps):
            ub[col(REBALANCE, i, i, k)] = 0.0
            ub[col(CUSTOMER, i, i, k)] = 0.0

    names = [f"{_PREFIX[kind]}_{i}_{j}_{k}"
             for kind in range(4) for i in range(n) for j in range(n)
             for k in range(steps)]
    return IlpProblem(c=c.ravel(), a=a, senses=senses, b=np.asarray(b),
                      lb=lb, ub=ub, names=names, row_names=row_names)


@dataclass
class RebalancePlan:
    """Solved flow tensors for one control instant, all (N, N, T+1)."""

    rebalance: np.ndarray
    customer: np.ndarray
    backlog: np.ndarray
    pickup: np.ndarray
    objective: float
    status: str
    nodes: int
    wall_seconds: float

    @property
    def first_step(self) -> np.ndarray:
        """The only part that is executed: rebalancing trips to start now."""
        return self.rebalance[:, :, 0]

    def verify_against(
        self,
        network: StationNetwork,
        state: FleetState,
        outstanding: np.ndarray,
        demand: np.ndarray,
    ) -> None:
        """Recheck every row in integer arithmetic; raise on any violation."""
        xr, xc, s, w = (t.astype(np.int64) for t in
                        (self.rebalance, self.customer, self.backlog, self.pickup))
        n, _, steps = xr.shape
        horizon = steps - 1
        demand = np.asarray(demand, dtype=np.int64)
        outstanding = np.asarray(outstanding, dtype=np.int64)

        def ensure(ok: bool, what: str) -> None:
            if not ok:
                raise SolverError(f"plan violates {what}")

        for t in (xr, xc, s, w):
            ensure(bool(np.all(t >= 0)), "non-negativity")
        idx = np.arange(n)
        ensure(bool(np.all(xr[idx, idx] == 0)), "zero-diagonal rebalancing")
        ensure(bool(np.all(xc[idx, idx] == 0)), "zero-diagonal service")
        ensure(bool(np.all(w[:, :, 0] - xc[:, :, 0] - s[:, :, 0] == 0)),
               "the first-step pickup balance")
        for k in range(1, steps):
            lhs = xc[:, :, k] + s[:, :, k] - s[:, :, k - 1] - w[:, :, k]
            ensure(bool(np.all(lhs == demand[:, :, k])),
                   f"the step-{k} queue recursion")
        ensure(bool(np.all(w.sum(axis=2) == outstanding)),
               "complete pickup of waiting requests")

        moves = xr + xc
        arr = state.arrival_counts(horizon)
        stock = state.idle.astype(np.int64).copy()
        kappa = network.kappa
        for k in range(steps):
            inflow = arr[:, k].astype(np.int64).copy()
            for j in range(n):
                for i in range(n):
                    if i == j:
                        continue
                    sig = k - int(kappa[j, i])
                    if sig >= 0:
                        inflow[i] += moves[j, i, sig]
            stock = stock + inflow - moves[:, :, k].sum(axis=1)
            ensure(bool(np.all(stock >= 0)), f"vehicle availability at step {k}")


def solve_rebalance(
    network: StationNetwork,
    state: FleetState,
    outstanding: np.ndarray,
    demand: np.ndarray,
    weights: CostWeights | None = None,
    cfg: SolverConfig | None = None,
) -> RebalancePlan:
    """Build and solve one control instant's integer program."""
    horizon = np.asarray(demand).shape[2] - 1
    weights = weights or CostWeights.defaults(network, horizon)
    prob = build_problem(network, state, outstanding, demand, weights)
    sol: IlpSolution = solve_ilp(prob, cfg)
    n = network.n_stations
    tensors = np.round(sol.x).astype(np.int64).reshape(4, n, n, horizon + 1)
    return RebalancePlan(rebalance=tensors[REBALANCE], customer=tensors[CUSTOMER],
                         backlog=tensors[BACKLOG], pickup=tensors[PICKUP],
                         objective=sol.objective, status=sol.status,
                         nodes=sol.nodes, wall_seconds=sol.wall_seconds)
