import csv

import pytest

from capval.cli import main, parse_config
from capval.model import ConfigError


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_nested_and_dotted_keys_agree():
    a = parse_config("scenario: hom\ncosts:\n  theta_b: 0.7\nsim:\n  replications: 10\n")
    b = parse_config("scenario: hom\ncosts.theta_b: 0.7\nsim.replications: 10\n")
    assert a.costs == b.costs and a.replications == b.replications == 10
    assert (a.T, a.delta, a.seed) == (1.5, 1.5, 42)


@pytest.mark.parametrize("text, match", [
    ("scenario: hom\nsim.replications: [\n", "line"),
    ("scenario: hom\ncosts.theta_x: 1\n", "costs.theta_x"),
    ("scenario: hom\nbounds.m: [30, 20]\n", "bounds"),
    ("scenario: nope\n", "nope"),
    ("scenario: hom\ncosts.theta_b: -1\n", "costs"),
    ("system.arrivals: [[1.0]]\nsystem.mu_s: 0\n", "service rate"),
])
def test_bad_configs(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_malformed_config_writes_nothing(tmp_path, capsys):
    cfg = write(tmp_path, "scenario: hom\nsim:\n  replications: [1, 2\n")
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) != 0
    assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_empty_bounds(tmp_path):
    cfg = write(tmp_path, "scenario: hom\nbounds:\n  m: [40, 39]\n")
    out = tmp_path / "out"
    assert main(["policy", "--config", str(cfg), "--out", str(out)]) == 2
    assert not out.exists()


def test_capval_curves(tmp_path):
    cfg = write(tmp_path, "scenario: hom\ncapval:\n  t: [0, 0.5, 1.0, 1.5]\n  x0: [10, 50]\n  m: [35, 45]\n  r: [15]\n")
    assert main(["capval", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "capval.csv")
    assert list(rows[0]) == ["t", "x0", "y0", "m", "r", "g"]
    assert len(rows) == 16
    assert all(float(r["g"]) == 0.0 for r in rows if float(r["t"]) == 0.0)
    end = {(int(r["x0"]), int(r["m"])): float(r["g"]) for r in rows if float(r["t"]) == 1.5}
    assert end[(10, 35)] < end[(10, 45)]
    assert end[(50, 45)] < end[(50, 35)]


def test_capval_piecewise(tmp_path):
    cfg = write(tmp_path, "scenario: pred\ncapval:\n  t: [0, 12]\n  x0: [20]\n")
    assert main(["capval", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "capval.csv")
    assert float(rows[1]["g"]) > 0


def test_policy_outputs(tmp_path):
    cfg = write(tmp_path, "scenario: hom\n")
    assert main(["policy", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    surf = read_csv(tmp_path / "equilibrium_surface.csv")
    best = min(surf, key=lambda r: float(r["equilibrium_rate"]))
    assert (int(best["m"]), int(best["r"])) == (40, 8)
    dmap = read_csv(tmp_path / "decision_map.csv")
    assert list(dmap[0]) == ["x", "y", "m", "r", "g_value"]
    assert int(next(r for r in dmap if r["x"] == "0")["m"]) < 40


def test_simulate_byte_identical(tmp_path):
    text = "scenario: hom\nsim:\n  replications: 200\n  horizon: 5\n  policies: ['static:40,8', 'static:38,10']\n"
    cfg = write(tmp_path, text)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["simulate", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(b), "--threads", "1"]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(c), "--seed", "7"]) == 0
    for name in ("summary.csv", "gains.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "summary.csv").read_bytes() != (c / "summary.csv").read_bytes()
    assert len(read_csv(a / "gains.csv")) == 2


def test_simulate_no_demand(tmp_path):
    text = ("system:\n  arrivals: [[0.0]]\n  mu_s: 1.0\n  mu_a: 1.0\n"
            "costs: {theta_b: 1, theta_a: 1, theta_s: 0.5, theta_u: 0.1}\n"
            "sim: {replications: 10, horizon: 4, policies: ['static:3,2'], trajectory: true}\n")
    cfg = write(tmp_path, text)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    (row,) = read_csv(tmp_path / "summary.csv")
    assert float(row["mean"]) == pytest.approx(4 * (3 * 0.5 + 2 * 0.1), abs=1e-9)
    assert float(row["se"]) == 0.0
    assert (tmp_path / "trajectory_0.csv").exists()


def test_sweep_batch_point(tmp_path):
    text = ("sweep: {ell: [1], policies: ['static:40,8', 'static:42,8']}\n"
            "sim: {replications: 50, horizon: 3}\n")
    cfg = write(tmp_path, text)
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    (row,) = read_csv(tmp_path / "sweep.csv")
    assert float(row["cov"]) == pytest.approx(0.7071, abs=1e-3)
    assert row["base"] == "static:40,8"


def test_sweep_needs_grid(tmp_path):
    cfg = write(tmp_path, "sweep: {alpha: [1]}\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
