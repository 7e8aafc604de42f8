"""Command-line entry point.

Subcommands cover the full pipeline: ``partition`` builds a station
network from trips, ``train`` fits and saves a forecast bank,
``simulate`` runs one controller over a scenario, ``sweep`` scans the
risk level, and ``report`` re-renders saved metrics.

Every subcommand accepts ``--config FILE`` with ``key = value`` lines
(long option names, dashes or underscores); explicit flags win over the
file.  Exit codes: 0 success, 2 invalid input, 3 solver or numerical
failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import functools
import sys

import numpy as np

from .demand import DAY, ingest_trips
from .errors import InvalidInputError, NumericalError, SolverError
from .forecast import bank_train_config, load_bank, save_bank, train_bank
from .gp import TrainConfig
from .ilp import SolverConfig
from .network import StationNetwork, kmeans_partition, load_network, save_network
from .report import (
    format_table,
    load_metrics_json,
    save_metrics_json,
    write_metrics_csv,
    write_timing_csv,
)
from .sim import (
    DemandGrid,
    RunConfig,
    Scenario,
    benchmark_scenario,
    run_simulation,
    sweep_epsilon,
)

_FLAG_KEYS = {"no-verify-plans"}
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _read_config(path: str) -> list[str]:
    """Turn a config file into CLI tokens, inserted ahead of real flags."""
    tokens: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, value = line.partition("=")
            key = key.strip().replace("_", "-")
            value = value.strip()
            if not eq or not key or not value:
                raise InvalidInputError(
                    f"{path}: line {lineno}: expected 'key = value', got {raw.strip()!r}")
            if key in _FLAG_KEYS:
                if value.lower() in _TRUE:
                    tokens.append(f"--{key}")
                elif value.lower() not in _FALSE:
                    raise InvalidInputError(
                        f"{path}: line {lineno}: {key} takes true/false")
            else:
                tokens.extend([f"--{key}", value])
    return tokens


def _extract_config(argv: list[str]) -> tuple[list[str], list[str]]:
    rest: list[str] = []
    tokens: list[str] = []
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg == "--config":
            if i + 1 >= len(argv):
                raise InvalidInputError("--config needs a file path")
            tokens.extend(_read_config(argv[i + 1]))
            i += 2
        elif arg.startswith("--config="):
            tokens.extend(_read_config(arg.split("=", 1)[1]))
            i += 1
        else:
            rest.append(arg)
            i += 1
    return tokens, rest


def _comma_list(cast):
    def parse(text: str):
        try:
            return [cast(part) for part in text.split(",") if part != ""]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc))
    return parse


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--controller", default="ccmpc",
                   choices=("ccmpc", "fixed", "oracle", "gbm"))
    p.add_argument("--epsilon", type=float, default=0.35,
                   help="chance-constraint risk level in (0, 1)")
    p.add_argument("--horizon", type=int, default=12)
    p.add_argument("--dispatch-seconds", type=float, default=30.0)
    p.add_argument("--mpc-seconds", type=float, default=None,
                   help="controller cadence (default: one model step)")
    p.add_argument("--gp-seconds", type=float, default=86400.0,
                   help="forecast retraining cadence")
    p.add_argument("--window-days", type=float, default=5.0,
                   help="training window length in days")
    p.add_argument("--backlog-cost", type=float, default=10.0)
    p.add_argument("--pickup-slope", type=float, default=0.1)
    p.add_argument("--engine", default="highs", choices=("highs", "bland"))
    p.add_argument("--time-limit", type=float, default=10.0,
                   help="per-solve time limit in seconds")
    p.add_argument("--gap", type=float, default=0.0,
                   help="absolute optimality gap")
    p.add_argument("--gp-max-iters", type=int, default=None)
    p.add_argument("--gp-jobs", type=int, default=1)
    p.add_argument("--no-verify-plans", action="store_true",
                   help="skip integer re-verification of each plan")


def _run_config(args) -> RunConfig:
    gp_cfg = None
    if args.gp_max_iters is not None:
        base = bank_train_config()
        gp_cfg = TrainConfig(max_iters=args.gp_max_iters,
                             learning_rate=base.learning_rate,
                             tolerance=base.tolerance)
    return RunConfig(
        controller=args.controller,
        epsilon=args.epsilon,
        horizon=args.horizon,
        dispatch_seconds=args.dispatch_seconds,
        mpc_seconds=args.mpc_seconds,
        gp_seconds=args.gp_seconds,
        train_window_days=args.window_days,
        backlog_cost=args.backlog_cost,
        pickup_delay_slope=args.pickup_slope,
        solver=SolverConfig(engine=args.engine, time_limit_s=args.time_limit,
                            gap=args.gap),
        gp_train=gp_cfg,
        gp_jobs=args.gp_jobs,
        check_invariants=not args.no_verify_plans,
    )


def _write_outputs(args, rows) -> None:
    if args.metrics_out:
        save_metrics_json(args.metrics_out, rows)
    if args.csv_out:
        write_metrics_csv(args.csv_out, rows)
    if args.timing_out:
        write_timing_csv(args.timing_out, rows)
    print(format_table(rows))


def cmd_partition(args) -> int:
    table = ingest_trips(args.trips, args.trips_format)
    centroids, labels = kmeans_partition(table.all_points, args.stations,
                                         seed=args.seed)
    net = StationNetwork.from_centroids(centroids, speed_mps=args.speed_mps,
                                        step_seconds=args.step_seconds)
    net.projection = table.projection
    save_network(args.out, net)
    sizes = np.bincount(labels, minlength=args.stations)
    print(f"partitioned {len(table)} trips ({2 * len(table)} points) "
          f"into {args.stations} stations")
    print(f"station point counts: {sizes.tolist()}")
    print(f"network written to {args.out}")
    return 0


def cmd_train(args) -> int:
    net = load_network(args.network)
    table = ingest_trips(args.trips, args.trips_format, ref=net.projection)
    dt = net.step_seconds
    end = args.train_end
    if end is None:
        end = float(np.floor(table.times[-1] / dt) * dt)
    start = end - args.window_days * DAY
    m = int(round(args.window_days * DAY / dt))
    if abs(m * dt - args.window_days * DAY) > 1e-6 or m < 2:
        raise InvalidInputError(
            "window-days must span a whole number (>= 2) of model steps")
    grid = DemandGrid(table, net, start, dt, m)
    if grid.counts.sum() == 0:
        raise InvalidInputError(
            f"no trips fall inside the training window [{start}, {end})")
    cfg = bank_train_config()
    if args.gp_max_iters is not None:
        cfg = TrainConfig(max_iters=args.gp_max_iters,
                          learning_rate=cfg.learning_rate,
                          tolerance=cfg.tolerance)
    bank = train_bank(grid.counts, grid.midpoint_hours(end), dt,
                      series_origin=end, window=(start, end), trained_at=end,
                      cfg=cfg, n_jobs=args.gp_jobs)
    save_bank(args.out, bank)
    n = bank.n_stations
    const = sum(1 for i in range(n) for j in range(n)
                if bank.models[i][j].gp is None)
    print(f"trained {n * n - const} flow models ({const} constant) on "
          f"{int(grid.counts.sum())} trips over {args.window_days} days")
    print(f"bank written to {args.out}")
    return 0


def _build_scenario(args) -> Scenario:
    if args.benchmark is not None:
        return benchmark_scenario(args.benchmark, fleet_size=args.fleet)
    missing = [name for name, v in (("--network", args.network),
                                    ("--trips", args.trips),
                                    ("--start", args.start),
                                    ("--end", args.end))
               if v is None]
    if missing:
        raise InvalidInputError(
            "either pass --benchmark SEED or all of " + ", ".join(missing))
    net = load_network(args.network)
    table = ingest_trips(args.trips, args.trips_format, ref=net.projection)
    return Scenario(network=net, trips=table, sim_start=args.start,
                    sim_end=args.end, fleet_size=args.fleet)


def cmd_simulate(args) -> int:
    scenario = _build_scenario(args)
    bank = None
    if args.bank:
        # The bank file stores hyperparameters only; rebuild its posteriors
        # from the same history window the run would train on.
        net = scenario.network
        dt = net.step_seconds
        m = int(round(args.window_days * DAY / dt))
        start = scenario.sim_start - args.window_days * DAY
        grid = DemandGrid(scenario.trips, net, start, dt, m)
        bank = load_bank(args.bank, grid.counts,
                         grid.midpoint_hours(scenario.sim_start))
    metrics = run_simulation(scenario, _run_config(args), bank=bank)
    if args.benchmark is not None:
        metrics.seed = args.benchmark
    _write_outputs(args, [metrics])
    return 0


def cmd_sweep(args) -> int:
    cfg = _run_config(args)
    make = functools.partial(benchmark_scenario, fleet_size=args.fleet)
    rows = sweep_epsilon(args.seeds, args.epsilons, cfg=cfg,
                         make_scenario=make, n_jobs=args.jobs)
    _write_outputs(args, rows)
    return 0


def cmd_report(args) -> int:
    rows = load_metrics_json(args.metrics)
    if args.csv_out:
        write_metrics_csv(args.csv_out, rows)
    if args.timing_out:
        write_timing_csv(args.timing_out, rows)
    print(format_table(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amodcc",
        description="Station-based fleet rebalancing: partition, forecast, "
                    "optimize, simulate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", help="cluster trip endpoints into stations")
    p.add_argument("--trips", required=True)
    p.add_argument("--trips-format", default="generic",
                   choices=("generic", "cabtrace"))
    p.add_argument("--stations", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--speed-mps", type=float, default=10.0)
    p.add_argument("--step-seconds", type=float, default=900.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("train", help="fit per-flow demand forecasts")
    p.add_argument("--network", required=True)
    p.add_argument("--trips", required=True)
    p.add_argument("--trips-format", default="generic",
                   choices=("generic", "cabtrace"))
    p.add_argument("--train-end", type=float, default=None,
                   help="window end, epoch seconds (default: last whole step)")
    p.add_argument("--window-days", type=float, default=5.0)
    p.add_argument("--gp-max-iters", type=int, default=None)
    p.add_argument("--gp-jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", help="run one controller over a scenario")
    p.add_argument("--benchmark", type=int, default=None, metavar="SEED",
                   help="use the built-in benchmark workload")
    p.add_argument("--network")
    p.add_argument("--trips")
    p.add_argument("--trips-format", default="generic",
                   choices=("generic", "cabtrace"))
    p.add_argument("--start", type=float, help="sim start, epoch seconds")
    p.add_argument("--end", type=float, help="sim end, epoch seconds")
    p.add_argument("--fleet", type=int, default=300)
    p.add_argument("--bank", help="forecast bank JSON from `train`; "
                   "without it ccmpc trains in-run")
    _add_run_options(p)
    p.add_argument("--metrics-out", help="write full metrics JSON here")
    p.add_argument("--csv-out", help="write the deterministic metrics CSV here")
    p.add_argument("--timing-out", help="write solver timing CSV here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="scan the risk level on the benchmark")
    p.add_argument("--seeds", type=_comma_list(int), default=[0],
                   help="comma-separated workload seeds")
    p.add_argument("--epsilons", type=_comma_list(float),
                   default=[0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95])
    p.add_argument("--fleet", type=int, default=300)
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel worker processes across seeds")
    _add_run_options(p)
    p.add_argument("--metrics-out")
    p.add_argument("--csv-out")
    p.add_argument("--timing-out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="re-render saved metrics")
    p.add_argument("--metrics", required=True, help="metrics JSON from simulate/sweep")
    p.add_argument("--csv-out")
    p.add_argument("--timing-out")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        config_tokens, argv = _extract_config(argv)
        if config_tokens:
            if not argv or argv[0].startswith("-"):
                raise InvalidInputError("--config requires a subcommand")
            argv = [argv[0]] + config_tokens + argv[1:]
        args = build_parser().parse_args(argv)
        return args.func(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, NumericalError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
