"""Per-flow demand forecasting: one GP per origin-destination pair.

Each flow's count series is centered by its training mean and modeled by a
zero-mean GP with a locally periodic kernel (RBF x Periodic, 24 h period).
Flows with constant history get a constant fallback model with zero
predictive spread.  Flow fits are independent, so the bank can train them
concurrently.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .gp import (
    GPTrainingSet,
    Kernel,
    PeriodicKernel,
    ProductKernel,
    RBFKernel,
    TrainConfig,
    TrainedGP,
    gram_matrix,
    predict_batch,
    train,
)
from scipy.linalg import cho_solve

HOUR = 3600.0


def default_kernel(variance: float) -> ProductKernel:
    """Locally periodic kernel: 3 h lengthscales, 24 h period, given scale."""
    return ProductKernel(
        first=RBFKernel(lengthscale=3.0),
        second=PeriodicKernel(lengthscale=3.0, period=24.0),
        output_scale=variance,
    )


def wide_kernel(variance: float) -> ProductKernel:
    """Wide-envelope start: a multi-day RBF factor so the daily pattern
    correlates across the whole window instead of just the recent hours."""
    return ProductKernel(
        first=RBFKernel(lengthscale=96.0),
        second=PeriodicKernel(lengthscale=1.0, period=24.0),
        output_scale=variance,
    )


def bank_train_config() -> TrainConfig:
    # Budget chosen so a 100-flow bank on a 5-day series trains in about a
    # minute on one core; standalone fits should pass a richer config.
    # The period stays pinned to the daily cycle: letting it drift is the
    # easiest way for a short fit to lose the day-over-day structure.
    return TrainConfig(max_iters=15, learning_rate=0.1, tolerance=1e-2,
                       freeze=("b.period",))


@dataclass
class FlowModel:
    """Forecaster for one origin-destination pair."""

    center: float
    gp: TrainedGP | None = None   # None: constant model, zero spread

    def predict(self, t_hours: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ts = np.asarray(t_hours, dtype=float).ravel()
        if self.gp is None:
            return np.full(ts.shape, self.center), np.zeros(ts.shape)
        mean, std = predict_batch(self.gp, ts)
        return self.center + mean, std


@dataclass
class ForecastTensor:
    """Posterior mean/std per (origin, destination, horizon step)."""

    mean: np.ndarray   # (N, N, K)
    std: np.ndarray    # (N, N, K)


@dataclass
class ForecastBank:
    """All N^2 flow models plus the shared time axis bookkeeping."""

    models: list[list[FlowModel]]
    interval_seconds: float
    series_origin: float          # epoch seconds at hour axis zero
    window: tuple[float, float]   # training window, epoch seconds
    trained_at: float             # epoch seconds

    @property
    def n_stations(self) -> int:
        return len(self.models)


def train_bank(
    counts: np.ndarray,
    t_hours: np.ndarray,
    interval_seconds: float,
    series_origin: float,
    window: tuple[float, float],
    trained_at: float,
    cfg: TrainConfig | None = None,
    n_jobs: int = 1,
    fit_points: int = 256,
) -> ForecastBank:
    """Fit one GP per flow from per-interval counts.

    ``counts`` is (N, N, M); ``t_hours`` holds the M interval midpoints on
    the bank's hour axis.  Noise variance is initialized to 0.1x the
    series variance, the kernel scale to the variance itself.

    The likelihood surface is multi-modal: started locally, the fit can
    settle on a short-envelope mode that never looks a full day back.
    Each flow therefore trains from both the local and the wide-envelope
    start and keeps whichever likelihood wins.  Hyperparameters are fitted
    on a series thinned to about ``fit_points`` samples (the sweep is
    cubic in length); the kept posterior is rebuilt on the full window.
    """
    counts = np.asarray(counts)
    if counts.ndim != 3 or counts.shape[0] != counts.shape[1]:
        raise InvalidInputError(f"counts must be (N, N, M), got {counts.shape}")
    t_hours = np.asarray(t_hours, dtype=float).ravel()
    if t_hours.shape[0] != counts.shape[2]:
        raise InvalidInputError("t_hours length must match the count series")
    cfg = cfg or bank_train_config()
    n = counts.shape[0]

    if fit_points < 8:
        raise InvalidInputError(f"fit_points must be >= 8, got {fit_points}")
    stride = max(1, -(-t_hours.size // fit_points))
    finalize = TrainConfig(max_iters=0)

    def fit(ij: tuple[int, int]) -> FlowModel:
        i, j = ij
        y = counts[i, j].astype(float)
        center = float(y.mean())
        var = float(y.var())
        if var == 0.0:
            return FlowModel(center=center)
        resid = y - center
        sub = GPTrainingSet(t_hours[::stride], resid[::stride],
                            noise_var=0.1 * var)
        best = None
        for init in (default_kernel(var), wide_kernel(var)):
            fitted = train(sub, init, cfg)
            full = GPTrainingSet(t_hours, resid, noise_var=fitted.noise_var)
            gp = train(full, fitted.kernel, finalize)
            if best is None or gp.lml > best.lml:
                best = gp
        return FlowModel(center=center, gp=best)

    pairs = [(i, j) for i in range(n) for j in range(n)]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            fitted = list(pool.map(fit, pairs))
    else:
        fitted = [fit(p) for p in pairs]

    models = [[fitted[i * n + j] for j in range(n)] for i in range(n)]
    return ForecastBank(
        models=models,
        interval_seconds=interval_seconds,
        series_origin=series_origin,
        window=window,
        trained_at=trained_at,
    )


def forecast_demand(
    bank: ForecastBank, t0_epoch: float, horizon: int, step_seconds: float
) -> ForecastTensor:
    """Forecast tensor over the control horizon.

    Slot k of the tensor stands for requests appearing during
    ``(t0 + (k-1) dt, t0 + k dt]``, matching the planner's convention that
    step-1 demand is what lands before the next control instant.  Each
    flow model is queried at the interval midpoint; slot 0 (the interval
    that just ended) is filled but ignored by the planner.
    """
    if horizon < 1:
        raise InvalidInputError(f"horizon must be >= 1, got {horizon}")
    n = bank.n_stations
    q_hours = (t0_epoch - bank.series_origin
               + (np.arange(horizon + 1) - 0.5) * step_seconds) / HOUR
    mean = np.zeros((n, n, horizon + 1))
    std = np.zeros((n, n, horizon + 1))
    for i in range(n):
        for j in range(n):
            mean[i, j], std[i, j] = bank.models[i][j].predict(q_hours)
    return ForecastTensor(mean=mean, std=std)


# --- persistence ---------------------------------------------------------------


def _kernel_lines(kernel: Kernel) -> list[str]:
    if isinstance(kernel, RBFKernel):
        return ["kernel rbf",
                f"lengthscale {kernel.lengthscale!r}",
                f"output_scale {kernel.output_scale!r}"]
    if isinstance(kernel, PeriodicKernel):
        return ["kernel periodic",
                f"lengthscale {kernel.lengthscale!r}",
                f"period {kernel.period!r}",
                f"output_scale {kernel.output_scale!r}"]
    if isinstance(kernel, ProductKernel):
        lines = ["kernel product"]
        for tag, child in (("a", kernel.first), ("b", kernel.second)):
            if isinstance(child, RBFKernel):
                lines.append(f"{tag}.kind rbf")
                lines.append(f"{tag}.lengthscale {child.lengthscale!r}")
            elif isinstance(child, PeriodicKernel):
                lines.append(f"{tag}.kind periodic")
                lines.append(f"{tag}.lengthscale {child.lengthscale!r}")
                lines.append(f"{tag}.period {child.period!r}")
            else:
                raise InvalidInputError("unsupported child kernel")
        lines.append(f"output_scale {kernel.output_scale!r}")
        return lines
    raise InvalidInputError(f"unsupported kernel type {type(kernel).__name__}")


def save_bank(path: str, bank: ForecastBank) -> None:
    """Serialize hyperparameters and window metadata to a text file.

    The count series itself is not stored; :func:`load_bank` rebuilds the
    posterior from the same history.
    """
    n = bank.n_stations
    lines = ["# amodcc gp bank v1",
             f"stations {n}",
             f"interval_seconds {bank.interval_seconds!r}",
             f"series_origin {bank.series_origin!r}",
             f"window {bank.window[0]!r} {bank.window[1]!r}",
             f"trained_at {bank.trained_at!r}"]
    for i in range(n):
        for j in range(n):
            m = bank.models[i][j]
            if m.gp is None:
                lines.append(f"flow {i} {j} const")
                lines.append(f"center {m.center!r}")
            else:
                lines.append(f"flow {i} {j} gp")
                lines.append(f"center {m.center!r}")
                lines.append(f"noise_var {m.gp.noise_var!r}")
                lines.extend(_kernel_lines(m.gp.kernel))
            lines.append("end")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _build_kernel(fields: dict[str, str], lineno: int, path: str) -> Kernel:
    kind = fields.get("kernel")
    try:
        if kind == "rbf":
            return RBFKernel(lengthscale=float(fields["lengthscale"]),
                             output_scale=float(fields["output_scale"]))
        if kind == "periodic":
            return PeriodicKernel(lengthscale=float(fields["lengthscale"]),
                                  period=float(fields["period"]),
                                  output_scale=float(fields["output_scale"]))
        if kind == "product":
            children = {}
            for tag in ("a", "b"):
                ckind = fields[f"{tag}.kind"]
                if ckind == "rbf":
                    children[tag] = RBFKernel(lengthscale=float(fields[f"{tag}.lengthscale"]))
                elif ckind == "periodic":
                    children[tag] = PeriodicKernel(
                        lengthscale=float(fields[f"{tag}.lengthscale"]),
                        period=float(fields[f"{tag}.period"]))
                else:
                    raise KeyError(f"{tag}.kind {ckind!r}")
            return ProductKernel(first=children["a"], second=children["b"],
                                 output_scale=float(fields["output_scale"]))
    except (KeyError, ValueError) as exc:
        raise InvalidInputError(
            f"{path}: bad kernel block ending at line {lineno}: {exc}") from exc
    raise InvalidInputError(f"{path}: unknown kernel kind {kind!r} near line {lineno}")


def load_bank(path: str, counts: np.ndarray, t_hours: np.ndarray) -> ForecastBank:
    """Rebuild a bank from a saved file plus the matching count history.

    Hyperparameters are taken from the file verbatim (no re-optimization);
    posteriors are refit against ``counts``/``t_hours``, which must cover
    the same training window the file records.
    """
    counts = np.asarray(counts)
    t_hours = np.asarray(t_hours, dtype=float).ravel()
    header: dict[str, object] = {}
    flows: dict[tuple[int, int], dict[str, str]] = {}
    current: dict[str, str] | None = None

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            key = parts[0]
            try:
                if key == "flow":
                    current = {"_kind": parts[3]}
                    flows[(int(parts[1]), int(parts[2]))] = current
                elif key == "end":
                    current = None
                elif current is not None:
                    current[key] = parts[1] if key != "kernel" else parts[1]
                elif key == "stations":
                    header["stations"] = int(parts[1])
                elif key == "interval_seconds":
                    header["interval_seconds"] = float(parts[1])
                elif key == "series_origin":
                    header["series_origin"] = float(parts[1])
                elif key == "window":
                    header["window"] = (float(parts[1]), float(parts[2]))
                elif key == "trained_at":
                    header["trained_at"] = float(parts[1])
                else:
                    raise ValueError(f"unknown key {key!r}")
            except (IndexError, ValueError) as exc:
                raise InvalidInputError(
                    f"{path}: malformed line {lineno}: {raw.strip()!r} ({exc})") from exc

    for k in ("stations", "interval_seconds", "series_origin", "window", "trained_at"):
        if k not in header:
            raise InvalidInputError(f"{path}: missing header key {k!r}")
    n = int(header["stations"])
    if counts.shape[:2] != (n, n) or counts.shape[2] != t_hours.shape[0]:
        raise InvalidInputError(
            f"history shape {counts.shape} does not match the {n}-station bank")
    w0, w1 = header["window"]  # type: ignore[misc]
    spanned = int(round((w1 - w0) / float(header["interval_seconds"])))
    if spanned != t_hours.shape[0]:
        raise InvalidInputError(
            f"history has {t_hours.shape[0]} intervals but the bank was "
            f"trained on {spanned}; it does not match the recorded window")
    if sorted(flows) != [(i, j) for i in range(n) for j in range(n)]:
        raise InvalidInputError(f"{path}: expected one flow block per station pair")

    models: list[list[FlowModel]] = []
    for i in range(n):
        row = []
        for j in range(n):
            spec = flows[(i, j)]
            center = float(spec["center"])
            if spec["_kind"] == "const":
                row.append(FlowModel(center=center))
                continue
            kernel = _build_kernel(spec, 0, path)
            kernel.validate()
            noise = float(spec["noise_var"])
            y = counts[i, j].astype(float) - center
            _, L, jitter = gram_matrix(kernel, t_hours, noise)
            alpha = cho_solve((L, True), y)
            lml = float(-0.5 * y @ alpha - np.sum(np.log(np.diag(L)))
                        - 0.5 * len(y) * np.log(2.0 * np.pi))
            row.append(FlowModel(center=center, gp=TrainedGP(
                kernel=kernel, t=t_hours.copy(), y=y, noise_var=noise,
                L=L, alpha=alpha, jitter=jitter, lml=lml, lml_trace=[lml],
                converged=True, n_iters=0)))
        models.append(row)
    return ForecastBank(
        models=models,
        interval_seconds=float(header["interval_seconds"]),
        series_origin=float(header["series_origin"]),
        window=tuple(header["window"]),  # type: ignore[arg-type]
        trained_at=float(header["trained_at"]),
    )
