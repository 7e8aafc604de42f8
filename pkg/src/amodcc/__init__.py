"""Station-based fleet control: demand forecasting, chance-constrained
rebalancing, and discrete-time simulation for mobility-on-demand systems.
"""

from .errors import (
    InfeasibleError,
    InvalidInputError,
    NoSolutionError,
    NumericalError,
    SolverError,
)
from .network import (
    FleetState,
    GeoPoint,
    StationNetwork,
    assign_station,
    assign_stations,
    build_travel_matrices,
    kmeans_partition,
    load_network,
    outstanding_matrix,
    project_lonlat,
    save_network,
)
from .gp import (
    Forecast,
    GPTrainingSet,
    PeriodicKernel,
    ProductKernel,
    RBFKernel,
    TrainConfig,
    TrainedGP,
    gaussian_quantile,
    kernel_eval,
    kernel_matrix,
    log_marginal_likelihood,
    lml_gradient,
    predict,
    predict_batch,
    standard_normal_quantile,
    train,
)
from .forecast import (
    FlowModel,
    ForecastBank,
    ForecastTensor,
    forecast_demand,
    load_bank,
    save_bank,
    train_bank,
)
from .dispatch import assign_pickups, distance_cost_matrix, hungarian
from .simplex import LpResult, solve_lp_bland
from .ilp import (
    ExternalCommandSolver,
    IlpProblem,
    IlpSolution,
    ScipyMilpSolver,
    SolverConfig,
    parse_lp_file,
    solve_ilp,
    solve_lp_file,
    write_lp_file,
)
from .mpc import (
    CostWeights,
    RebalancePlan,
    build_problem,
    quantile_demand,
    solve_rebalance,
)
from .demand import DemandFlow, TripTable, ingest_trips, synth_demand
from .sim import (
    DemandGrid,
    RunConfig,
    Scenario,
    SimMetrics,
    benchmark_scenario,
    initial_placement,
    run_simulation,
    sweep_epsilon,
)
from .report import (
    format_table,
    load_metrics_json,
    save_metrics_json,
    write_metrics_csv,
    write_timing_csv,
)

__version__ = "0.1.0"

__all__ = [
    "InfeasibleError", "InvalidInputError", "NoSolutionError",
    "NumericalError", "SolverError",
    "FleetState", "GeoPoint", "StationNetwork", "assign_station",
    "assign_stations", "build_travel_matrices", "kmeans_partition",
    "load_network", "outstanding_matrix", "project_lonlat", "save_network",
    "Forecast", "GPTrainingSet", "PeriodicKernel", "ProductKernel",
    "RBFKernel", "TrainConfig", "TrainedGP", "gaussian_quantile",
    "kernel_eval", "kernel_matrix", "log_marginal_likelihood",
    "lml_gradient", "predict", "predict_batch", "standard_normal_quantile",
    "train",
    "FlowModel", "ForecastBank", "ForecastTensor", "forecast_demand",
    "load_bank", "save_bank", "train_bank",
    "assign_pickups", "distance_cost_matrix", "hungarian",
    "LpResult", "solve_lp_bland",
    "ExternalCommandSolver", "IlpProblem", "IlpSolution", "ScipyMilpSolver",
    "SolverConfig", "parse_lp_file", "solve_ilp", "solve_lp_file",
    "write_lp_file",
    "CostWeights", "RebalancePlan", "build_problem", "quantile_demand",
    "solve_rebalance",
    "DemandFlow", "TripTable", "ingest_trips", "synth_demand",
    "DemandGrid", "RunConfig", "Scenario", "SimMetrics",
    "benchmark_scenario", "initial_placement", "run_simulation",
    "sweep_epsilon",
    "format_table", "load_metrics_json", "save_metrics_json",
    "write_metrics_csv", "write_timing_csv",
]
