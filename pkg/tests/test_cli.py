"""End-to-end command-line tests: pipeline round-trips and exit codes."""

import numpy as np
import pytest

from amodcc.cli import main
from amodcc.network import load_network


def write_trips(path, n=400, seed=3, t1=43_200.0):
    """Generic CSV around a small lon/lat box, times ascending."""
    rng = np.random.default_rng(seed)
    times = np.sort(rng.uniform(0.0, t1, size=n))
    lon = rng.uniform(-122.45, -122.35, size=(n, 2))
    lat = rng.uniform(37.70, 37.80, size=(n, 2))
    with open(path, "w") as fh:
        fh.write("time,o_lon,o_lat,d_lon,d_lat\n")
        for k in range(n):
            fh.write(f"{times[k]},{lon[k,0]},{lat[k,0]},{lon[k,1]},{lat[k,1]}\n")


@pytest.fixture(scope="module")
def city(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    trips = str(root / "trips.csv")
    net = str(root / "net.json")
    write_trips(trips)
    rc = main(["partition", "--trips", trips, "--stations", "3",
               "--seed", "0", "--step-seconds", "900", "--out", net])
    assert rc == 0
    return root, trips, net


def test_partition_writes_loadable_network(city, capsys):
    root, trips, net = city
    loaded = load_network(net)
    assert loaded.n_stations == 3
    assert loaded.step_seconds == 900.0
    assert loaded.projection is not None


def test_train_then_simulate_with_bank(city, capsys):
    root, trips, net = city
    bank_path = str(root / "bank.json")
    rc = main(["train", "--network", net, "--trips", trips,
               "--train-end", "21600", "--window-days", "0.25",
               "--gp-max-iters", "0", "--out", bank_path])
    assert rc == 0
    out = capsys.readouterr().out
    assert "bank written" in out
    assert "stations 3" in (root / "bank.json").read_text()

    rc = main(["simulate", "--network", net, "--trips", trips,
               "--start", "21600", "--end", "43200", "--fleet", "5",
               "--controller", "ccmpc", "--epsilon", "0.5", "--horizon", "4",
               "--window-days", "0.25", "--bank", bank_path,
               "--csv-out", str(root / "cc.csv")])
    assert rc == 0
    assert "ccmpc" in capsys.readouterr().out


def test_simulate_csv_is_reproducible(city, capsys):
    root, trips, net = city
    argv = ["simulate", "--network", net, "--trips", trips,
            "--start", "21600", "--end", "43200", "--fleet", "5",
            "--controller", "gbm",
            "--metrics-out", str(root / "m.json")]
    assert main(argv + ["--csv-out", str(root / "a.csv")]) == 0
    assert main(argv + ["--csv-out", str(root / "b.csv")]) == 0
    a = (root / "a.csv").read_bytes()
    assert a == (root / "b.csv").read_bytes()

    assert main(["report", "--metrics", str(root / "m.json"),
                 "--csv-out", str(root / "c.csv")]) == 0
    assert (root / "c.csv").read_bytes() == a
    table = capsys.readouterr().out
    assert "gbm" in table and "wait_mean" in table


def test_config_file_merges_under_flags(city, capsys, tmp_path):
    root, trips, net2 = city
    cfg = tmp_path / "run.cfg"
    cfg.write_text("stations = 4\nstep_seconds = 600   # comment\n")
    out = str(tmp_path / "n4.json")
    rc = main(["partition", "--config", str(cfg), "--trips", trips,
               "--out", out])
    assert rc == 0
    loaded = load_network(out)
    assert loaded.n_stations == 4          # from the file
    assert loaded.step_seconds == 600.0

    out2 = str(tmp_path / "n2.json")
    rc = main(["partition", "--config", str(cfg), "--trips", trips,
               "--stations", "2", "--out", out2])
    assert rc == 0
    assert load_network(out2).n_stations == 2   # explicit flag wins
    capsys.readouterr()


def test_config_file_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("stations\n")
    rc = main(["partition", "--config", str(bad), "--trips", "x", "--out", "y"])
    assert rc == 2
    assert "line 1" in capsys.readouterr().err
    rc = main(["--config", str(bad)])
    assert rc == 2


def test_exit_codes(city, tmp_path, capsys):
    root, trips, net = city
    # 2: invalid input
    assert main(["simulate", "--network", net, "--trips", trips]) == 2
    assert "either pass --benchmark" in capsys.readouterr().err
    assert main(["simulate", "--network", net, "--trips", trips,
                 "--start", "0", "--end", "100", "--fleet", "5",
                 "--epsilon", "1.5"]) == 2
    # 4: I/O failure
    assert main(["report", "--metrics", str(tmp_path / "missing.json")]) == 4
    assert main(["partition", "--trips", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path / "n.json")]) == 4
    # argparse rejects malformed option values itself
    with pytest.raises(SystemExit):
        main(["sweep", "--seeds", "1,x"])
    capsys.readouterr()
