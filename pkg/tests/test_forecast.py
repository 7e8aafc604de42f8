"""Forecast bank tests.

The load-bearing check is behavioral: a bank trained on a few days of a
strongly daily count series must forecast the next day's peak from the
pattern, not revert to the series mean.  Persistence is checked by
round-tripping hyperparameters and rebuilding the posterior.
"""

import numpy as np
import pytest

from amodcc.errors import InvalidInputError
from amodcc.forecast import (ForecastBank, bank_train_config, default_kernel,
                             forecast_demand, load_bank, save_bank,
                             train_bank, wide_kernel)
from amodcc.gp import GPTrainingSet, TrainConfig, train

INTERVAL = 900.0
DAYS = 5
M = DAYS * 96                       # five days of 15 min intervals
ORIGIN = 1_700_000_000.0            # epoch seconds at hour axis zero


def hour_axis():
    return (np.arange(M) + 0.5) * INTERVAL / 3600.0 - DAYS * 24.0


def planted_counts(seed=3):
    """(2, 2, M) counts: flow 0->1 peaks 7-10 h daily, 1->0 is flat."""
    rng = np.random.default_rng(seed)
    hours = hour_axis() % 24.0
    counts = np.zeros((2, 2, M), dtype=np.int64)
    peak = (hours >= 7.0) & (hours < 10.0)
    counts[0, 1] = np.where(peak, rng.poisson(10.0, M), 0)
    counts[1, 0] = rng.poisson(1.0, M)
    return counts


@pytest.fixture(scope="module")
def planted_bank():
    return train_bank(planted_counts(), hour_axis(), INTERVAL,
                      series_origin=ORIGIN,
                      window=(ORIGIN - DAYS * 86_400.0, ORIGIN),
                      trained_at=ORIGIN)


def test_bank_input_validation():
    with pytest.raises(InvalidInputError, match=r"\(N, N, M\)"):
        train_bank(np.zeros((2, 3, 10)), np.arange(10), INTERVAL,
                   series_origin=0.0, window=(0.0, 1.0), trained_at=1.0)
    with pytest.raises(InvalidInputError, match="length"):
        train_bank(np.zeros((2, 2, 10)), np.arange(9), INTERVAL,
                   series_origin=0.0, window=(0.0, 1.0), trained_at=1.0)
    with pytest.raises(InvalidInputError, match="fit_points"):
        train_bank(np.zeros((2, 2, 10)), np.arange(10), INTERVAL,
                   series_origin=0.0, window=(0.0, 1.0), trained_at=1.0,
                   fit_points=4)


def test_constant_flows_get_constant_models(planted_bank):
    # Diagonals never see a trip: center 0, no spread.
    for i in range(2):
        model = planted_bank.models[i][i]
        assert model.gp is None
        mean, std = model.predict([1.0, 50.0])
        assert np.all(mean == 0.0) and np.all(std == 0.0)


def test_bank_forecasts_the_next_days_peak(planted_bank):
    # Query the day after the training window: inside the morning peak the
    # patterned flow must stand well above its 1.25/interval series mean,
    # and must fall back near zero in the small hours.
    peak = forecast_demand(planted_bank, ORIGIN + 8.0 * 3600.0, 4, INTERVAL)
    night = forecast_demand(planted_bank, ORIGIN + 3.0 * 3600.0, 4, INTERVAL)
    assert peak.mean[0, 1, 1:].min() > 6.0
    assert night.mean[0, 1, 1:].max() < 2.0
    assert np.all(peak.std[0, 1, 1:] > 0.0)
    # The flat flow stays near its rate around the clock.
    assert 0.2 < peak.mean[1, 0, 1:].min() <= peak.mean[1, 0, 1:].max() < 2.5
    assert 0.2 < night.mean[1, 0, 1:].min() <= night.mean[1, 0, 1:].max() < 2.5


def test_forecast_axis_matches_flow_queries(planted_bank):
    # Slot k stands for (t0 + (k-1) dt, t0 + k dt]; models are queried at
    # the slot midpoints on the bank's hour axis.
    t0 = ORIGIN + 9.25 * 3600.0
    dt = 600.0
    fc = forecast_demand(planted_bank, t0, 3, dt)
    assert fc.mean.shape == (2, 2, 4) and fc.std.shape == (2, 2, 4)
    q = (t0 - ORIGIN + (np.arange(4) - 0.5) * dt) / 3600.0
    for i in range(2):
        for j in range(2):
            mean, std = planted_bank.models[i][j].predict(q)
            assert fc.mean[i, j] == pytest.approx(mean, abs=1e-12)
            assert fc.std[i, j] == pytest.approx(std, abs=1e-12)
    with pytest.raises(InvalidInputError, match="horizon"):
        forecast_demand(planted_bank, t0, 0, dt)


def test_training_escapes_the_short_envelope_mode(planted_bank):
    # Started only locally the fit settles on a mode that forgets the
    # daily pattern; the kept candidate must carry a multi-day envelope.
    gp = planted_bank.models[0][1].gp
    assert gp.kernel.first.lengthscale > 24.0
    assert gp.kernel.second.period == pytest.approx(24.0)

    counts = planted_counts()
    t = hour_axis()
    y = counts[0, 1].astype(float)
    local = train(GPTrainingSet(t, y - y.mean(), noise_var=0.1 * y.var()),
                  default_kernel(float(y.var())), bank_train_config())
    assert gp.lml > local.lml


def test_freeze_pins_named_parameters():
    t = hour_axis()[:96]
    rng = np.random.default_rng(0)
    y = np.sin(2 * np.pi * t / 24.0) + 0.1 * rng.standard_normal(96)
    data = GPTrainingSet(t, y, noise_var=0.1)
    cfg = TrainConfig(max_iters=5, freeze=("b.period", "noise_var"))
    gp = train(data, wide_kernel(1.0), cfg)
    # Values survive the log-space round trip, so only up to an ulp.
    assert gp.kernel.second.period == pytest.approx(24.0, rel=1e-12)
    assert gp.noise_var == pytest.approx(0.1, rel=1e-12)
    assert gp.kernel.first.lengthscale != 96.0   # unfrozen ones moved
    with pytest.raises(InvalidInputError, match="freeze unknown"):
        train(data, wide_kernel(1.0), TrainConfig(freeze=("b.periods",)))


# --- persistence ----------------------------------------------------------------


def test_save_load_round_trip(tmp_path, planted_bank):
    path = tmp_path / "bank.txt"
    save_bank(str(path), planted_bank)
    text = path.read_text()
    assert "np." not in text                     # plain decimals only
    loaded = load_bank(str(path), planted_counts(), hour_axis())
    assert loaded.n_stations == 2
    assert loaded.interval_seconds == INTERVAL
    assert loaded.series_origin == ORIGIN
    assert loaded.window == planted_bank.window
    assert loaded.trained_at == planted_bank.trained_at

    q = np.linspace(1.0, 30.0, 40)
    for i in range(2):
        for j in range(2):
            m0, s0 = planted_bank.models[i][j].predict(q)
            m1, s1 = loaded.models[i][j].predict(q)
            assert m1 == pytest.approx(m0, abs=1e-9)
            assert s1 == pytest.approx(s0, abs=1e-9)


def test_load_rejects_mismatched_history(tmp_path, planted_bank):
    path = tmp_path / "bank.txt"
    save_bank(str(path), planted_bank)
    with pytest.raises(InvalidInputError, match="does not match"):
        load_bank(str(path), planted_counts()[:, :, :-1], hour_axis()[:-1])
    bad = np.zeros((3, 3, M))
    with pytest.raises(InvalidInputError, match="does not match"):
        load_bank(str(path), bad, hour_axis())


def test_load_rejects_damaged_files(tmp_path, planted_bank):
    path = tmp_path / "bank.txt"
    save_bank(str(path), planted_bank)
    lines = path.read_text().splitlines()

    missing = [ln for ln in lines if not ln.startswith("trained_at")]
    (tmp_path / "missing.txt").write_text("\n".join(missing) + "\n")
    with pytest.raises(InvalidInputError, match="trained_at"):
        load_bank(str(tmp_path / "missing.txt"), planted_counts(), hour_axis())

    (tmp_path / "garbled.txt").write_text("\n".join(lines + ["what is this"]))
    n_lines = len(lines) + 1
    with pytest.raises(InvalidInputError, match=f"line {n_lines}"):
        load_bank(str(tmp_path / "garbled.txt"), planted_counts(), hour_axis())

    first_flow = next(k for k, ln in enumerate(lines) if ln.startswith("flow"))
    (tmp_path / "truncated.txt").write_text("\n".join(lines[:first_flow]) + "\n")
    with pytest.raises(InvalidInputError, match="one flow block"):
        load_bank(str(tmp_path / "truncated.txt"), planted_counts(), hour_axis())
