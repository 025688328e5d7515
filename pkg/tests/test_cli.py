"""End-to-end command line checks, all in-process via ``cli.main``."""
from __future__ import annotations

import math
from pathlib import Path

import pytest

from parisian_impulse import cli
from parisian_impulse.cli import EVAL_COLUMNS
from parisian_impulse.simulate import MC_CSV_COLUMNS

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
BM_CFG = str(CONFIGS / "brownian.cfg")
CL_CFG = str(CONFIGS / "cramer_lundberg.cfg")


def _rows(out: str) -> list[list[str]]:
    return [line.split(",") for line in out.strip().splitlines()]


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("sub", ["eval", "optimize", "verify", "simulate"])
def test_help_exits_zero(sub):
    with pytest.raises(SystemExit) as exc:
        cli.main([sub, "--help"])
    assert exc.value.code == 0


def test_unknown_flag_exits_two():
    with pytest.raises(SystemExit) as exc:
        cli.main(["eval", "--config", BM_CFG, "--grid=0:1:5", "--bogus"])
    assert exc.value.code == 2


def test_missing_subcommand_exits_two():
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2


@pytest.mark.parametrize("grid", ["1:2", "2:1:5", "0:1:1", "a:b:3"])
def test_bad_grid_reports_config_error(grid, capsys):
    rc = cli.main(["eval", "--config", BM_CFG, f"--grid={grid}"])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_negative_depth_rejected(capsys):
    rc = cli.main(["eval", "--config", BM_CFG, "--grid=0:1:5", "--depth", "-1"])
    assert rc == 2


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def test_eval_table_brownian(capsys):
    rc = cli.main(["eval", "--config", BM_CFG, "--grid=-3:6:19"])
    assert rc == 0
    rows = _rows(capsys.readouterr().out)
    assert rows[0] == list(EVAL_COLUMNS)
    assert len(rows) == 20
    by_x = {row[0]: row for row in rows[1:]}
    zero = by_x["0"]
    assert float(zero[5]) == pytest.approx(math.exp(0.15), rel=1e-12)  # V(0)
    assert by_x["-2.5"][1] == "0"  # W vanishes below zero
    assert float(by_x["1.5"][3]) > 1.0  # Z grows above zero


def test_eval_marks_singular_derivatives(capsys):
    # the compound Poisson derivative is undefined at -p*r and at 0
    rc = cli.main(["eval", "--config", CL_CFG, "--grid=-6:6:7"])
    assert rc == 0
    by_x = {row[0]: row for row in _rows(capsys.readouterr().out)[1:]}
    assert by_x["-6"][6] == ""
    assert by_x["0"][6] == ""
    assert by_x["2"][6] != ""
    # the surplus scale keeps its one-sided derivative at the mass point
    assert float(by_x["0"][2]) == pytest.approx(2.05 / 9.0, rel=1e-12)


def test_eval_flags_overflow(capsys):
    rc = cli.main(["eval", "--config", BM_CFG, "--grid=0:20000:3"])
    assert rc == 0
    rows = _rows(capsys.readouterr().out)
    assert rows[-1][1] == "overflow"
    assert rows[-1][5] == "overflow"


def test_eval_spec_from_overrides_only(capsys):
    args = ["eval", "--grid=0:1:3"]
    for pair in ("model=brownian", "mu=0.5", "sigma=0.75", "delta=0.05",
                 "q=0.05", "r=3", "beta=0.05"):
        args += ["--set", pair]
    assert cli.main(args) == 0
    rows = _rows(capsys.readouterr().out)
    assert float(rows[1][5]) == pytest.approx(math.exp(0.15), rel=1e-12)


def test_eval_writes_files(tmp_path, capsys):
    out = tmp_path / "table.csv"
    svg = tmp_path / "chart.svg"
    rc = cli.main(["eval", "--config", BM_CFG, "--grid=-2:4:25",
                   "--out", str(out), "--svg", str(svg)])
    assert rc == 0
    assert capsys.readouterr().out == ""  # table went to the file
    assert out.read_text().splitlines()[0] == ",".join(EVAL_COLUMNS)
    assert svg.read_text().startswith("<svg")


# ---------------------------------------------------------------------------
# optimize
# ---------------------------------------------------------------------------


def test_optimize_record(capsys):
    rc = cli.main(["optimize", "--config", BM_CFG])
    assert rc == 0
    out = capsys.readouterr().out
    record = dict(line.split(": ", 1) for line in out.strip().splitlines())
    assert record["case"] == "interior"
    assert float(record["c1_star"]) == pytest.approx(0.5939102119123602, rel=1e-6)
    assert float(record["c2_star"]) == pytest.approx(2.1620891793077597, rel=1e-6)
    assert record["sufficiency_pass"] == "true"


def test_optimize_beta_flag_wins(capsys):
    rc = cli.main(["optimize", "--config", BM_CFG, "--set", "beta=0.4", "--beta", "1"])
    assert rc == 0
    record = dict(
        line.split(": ", 1) for line in capsys.readouterr().out.strip().splitlines()
    )
    assert record["beta"] == "1"
    assert record["case"] == "boundary"
    assert float(record["c1_star"]) == 0.0


def test_optimize_grid_dump(tmp_path, capsys):
    out = tmp_path / "vprime.csv"
    svg = tmp_path / "vprime.svg"
    rc = cli.main(["optimize", "--config", BM_CFG, "--out", str(out),
                   "--svg", str(svg), "--grid=0:6:121"])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x,V_prime,marker"
    assert len(lines) == 1 + 121 + 2  # grid plus the two marker rows
    markers = [line for line in lines if line.endswith("_star")]
    assert len(markers) == 2
    xs = [float(line.split(",")[0]) for line in lines[1:]]
    assert xs == sorted(xs)
    assert svg.read_text().startswith("<svg")


def test_optimize_unaffordable_cost_is_numerical_failure(capsys):
    rc = cli.main(["optimize", "--config", BM_CFG, "--beta", "1e6"])
    assert rc == 3
    assert "solver failure" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def test_verify_analytic_battery(capsys):
    rc = cli.main(["verify", "--config", BM_CFG])
    assert rc == 0
    out = capsys.readouterr().out
    assert "laplace_roots: PASS" in out
    assert "closed_vs_quadrature: PASS" in out
    assert "all 9 checks passed" in out
    assert "FAIL" not in out


def test_verify_with_monte_carlo(capsys):
    rc = cli.main(["verify", "--config", CL_CFG, "--with-mc",
                   "--paths", "6000", "--seed", "3"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "mc_exit_mid: PASS" in out
    assert "mc_exit_zero: PASS" in out
    assert "mc_policy_npv: PASS" in out
    assert "all 12 checks passed" in out


def test_verify_rejects_bad_refraction(capsys):
    rc = cli.main(["verify", "--config", CL_CFG, "--set", "delta=5"])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def test_simulate_exit_stdout(capsys):
    rc = cli.main(["simulate", "--config", CL_CFG, "--functional", "exit",
                   "--x", "1", "--barrier", "3", "--paths", "2000", "--seed", "7"])
    assert rc == 0
    rows = _rows(capsys.readouterr().out)
    assert rows[0] == list(MC_CSV_COLUMNS)
    assert rows[1][0] == "exit"
    assert rows[1][2] == "3"
    assert rows[1][7] == ""  # event-driven scheme reports no step size
    assert 0.0 < float(rows[1][3]) < 1.0


def test_simulate_appends_reproducibly(tmp_path):
    out = tmp_path / "mc.csv"
    args = ["simulate", "--config", CL_CFG, "--functional", "exit", "--x", "1",
            "--barrier", "3", "--paths", "1500", "--seed", "5", "--out", str(out)]
    assert cli.main(args) == 0
    assert cli.main(args) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3  # one header, two rows
    assert lines[0] == ",".join(MC_CSV_COLUMNS)
    assert lines[1] == lines[2]  # same seed, bit-identical


def test_simulate_npv_explicit_policy(capsys):
    rc = cli.main(["simulate", "--config", CL_CFG, "--functional", "npv",
                   "--x", "1", "--c1", "0", "--c2", "4", "--paths", "1000",
                   "--seed", "2"])
    assert rc == 0
    rows = _rows(capsys.readouterr().out)
    assert rows[1][2] == "0:4:1"  # c1:c2:beta label
    assert float(rows[1][3]) > 0.0


def test_simulate_npv_default_optimal_policy(capsys):
    rc = cli.main(["simulate", "--config", CL_CFG, "--functional", "npv",
                   "--x", "1", "--paths", "500", "--seed", "2"])
    assert rc == 0
    rows = _rows(capsys.readouterr().out)
    lo, up, beta = rows[1][2].split(":")
    assert float(lo) == pytest.approx(0.0025850670848357703, abs=1e-6)
    assert float(up) == pytest.approx(9.369855289266484, rel=1e-6)
    assert beta == "1"


def test_simulate_exit_needs_barrier(capsys):
    rc = cli.main(["simulate", "--config", CL_CFG, "--functional", "exit",
                   "--x", "1", "--paths", "100"])
    assert rc == 2
    assert "--barrier" in capsys.readouterr().err


def test_simulate_start_above_barrier_is_domain_error(capsys):
    rc = cli.main(["simulate", "--config", CL_CFG, "--functional", "exit",
                   "--x", "4", "--barrier", "3", "--paths", "100"])
    assert rc == 2
    assert "domain error" in capsys.readouterr().err


def test_simulate_npv_needs_both_levels(capsys):
    rc = cli.main(["simulate", "--config", CL_CFG, "--functional", "npv",
                   "--x", "1", "--c1", "0", "--paths", "100"])
    assert rc == 2
    assert "both" in capsys.readouterr().err
