"""End-to-end checks of the command line interface."""

import math
import os

import numpy as np
import pytest

from lorentzgas import cli, curves, smallxi, tails
from lorentzgas.util import zeta


def test_exact_phi_prints_symbolic_constants(capsys):
    assert cli.main(["exact", "--which", "phi", "--xi", "0.1"]) == 0
    out = capsys.readouterr().out
    assert "pi^2/zeta(3)" in out
    assert "3.14159265358979" in out
    assert f"{-math.pi ** 2 / zeta(3.0):.15g}" in out


def test_exact_phi0_value_matches_library(capsys):
    assert cli.main(["exact", "--which", "phi0", "--xi", "0.2"]) == 0
    out = capsys.readouterr().out
    want = smallxi.small_xi_aggregates(0.2).phi0.value
    assert f"{want:.15g}" in out
    assert "pi/zeta(3)" in out


def test_exact_kernel_rejects_xi_beyond_threshold(capsys):
    code = cli.main(["exact", "--which", "kernel", "--xi", "0.9",
                     "--w", "0.3,0", "--z", "0.1,0.2"])
    assert code == 1
    assert "--xi" in capsys.readouterr().err


def test_tail_d4_reports_both_coefficients_and_endpoint(capsys):
    assert cli.main(["tail", "--d", "4"]) == 0
    out = capsys.readouterr().out
    assert f"{tails.phi_tail_coefficient(4):.15g}" in out
    assert f"{tails.phibar0_tail_coefficient(4):.15g}" in out
    assert "sqrt(2)" in out


def test_tail_high_dimension_has_no_endpoint_but_succeeds(capsys):
    assert cli.main(["tail", "--d", "7"]) == 0
    assert "d >= 5" in capsys.readouterr().out


def test_xi1_matches_library(capsys):
    assert cli.main(["xi1", "--w", "0.3,0", "--z=-0.2,0.1"]) == 0
    printed = float(capsys.readouterr().out.split("=")[1])
    want = smallxi.linearity_threshold((0.3, 0.0), (-0.2, 0.1))
    assert printed == pytest.approx(want, abs=1e-14)

    assert cli.main(["xi1", "--w", "0.3,0", "--z", "inf"]) == 0
    printed = float(capsys.readouterr().out.split("=")[1])
    assert printed == pytest.approx(smallxi.linearity_threshold_inf_z((0.3, 0.0)), abs=1e-14)


def test_curve_phi_csv_round_trips_identically(tmp_path, capsys):
    path = tmp_path / "phi.csv"
    code = cli.main(["curve-phi", "--p", "13", "--m", "2", "--delta", "0.25",
                     "--xi-max", "1.0", "--out", str(path)])
    assert code == 0
    est = curves.CurveEstimate.from_csv(path)
    again = tmp_path / "phi2.csv"
    est.to_csv(again)
    assert path.read_bytes() == again.read_bytes()
    assert est.meta["p"] == 13


def test_curve_phi_rejects_nonprime(capsys, tmp_path):
    code = cli.main(["curve-phi", "--p", "10", "--out", str(tmp_path / "x.csv")])
    assert code == 1
    assert "--p" in capsys.readouterr().err


def test_missing_required_flag_exits_one(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["simulate", "--out", str(tmp_path / "f.csv")])
    assert excinfo.value.code == 1


def test_kernel_phi0_reports_estimate_and_bounds(capsys):
    code = cli.main(["kernel-phi0", "--xi", "0.2", "--w", "0.3,0",
                     "--z=-0.2,0.1", "--samples", "2000"])
    assert code == 0
    out = capsys.readouterr().out
    assert "kernel estimate" in out
    assert "universal bounds" in out
    assert "closed form" in out


def test_simulate_writes_samples_and_ccdf(tmp_path, capsys):
    samples = tmp_path / "flights.csv"
    ccdf = tmp_path / "ccdf.csv"
    code = cli.main(["simulate", "--d", "2", "--rho", "0.2", "--n", "500",
                     "--seed", "7", "--out", str(samples),
                     "--ccdf-out", str(ccdf), "--delta", "0.25",
                     "--xi-max", "2.0"])
    assert code == 0
    assert samples.exists()
    est = curves.CurveEstimate.from_csv(ccdf)
    assert est.values[0] == 1.0
    assert np.all(np.diff(est.values) <= 0)
    assert est.meta["kind"] == "ccdf"


def test_simulate_plot_needs_ccdf_out(tmp_path, capsys):
    code = cli.main(["simulate", "--d", "2", "--rho", "0.2", "--n", "50",
                     "--out", str(tmp_path / "f.csv"), "--plot"])
    assert code == 1
    assert "--ccdf-out" in capsys.readouterr().err


def test_fd_d2_matches_library(capsys):
    assert cli.main(["fd", "--d", "2", "--t", "0.3,0.8"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    for line, t in zip(lines, (0.3, 0.8)):
        assert float(line.split()[1]) == pytest.approx(
            tails.phi_tail_profile(t, 2), abs=1e-14)


def test_xi_cache_build_extend_and_fd(tmp_path, capsys):
    cache = tmp_path / "avoid.csv"
    code = cli.main(["xi-cache", "--out", str(cache), "--sigma-max", "4",
                     "--j-lo", "-6", "--j-hi", "4", "--samples", "100",
                     "--p", "1009", "--seed", "2"])
    assert code == 0
    assert "built" in capsys.readouterr().out

    code = cli.main(["xi-cache", "--out", str(cache), "--sigma-max", "5",
                     "--j-lo", "-6", "--j-hi", "4"])
    assert code == 0
    assert "extended" in capsys.readouterr().out

    code = cli.main(["fd", "--d", "3", "--t", "1.5", "--cache", str(cache)])
    assert code == 0
    assert float(capsys.readouterr().out.split()[1]) == 0.0


def test_fd_d3_without_cache_exits_one(capsys):
    assert cli.main(["fd", "--d", "3", "--t", "0.5"]) == 1
    assert "--cache" in capsys.readouterr().err


def test_curve_plot_writes_png(tmp_path, capsys):
    out = tmp_path / "phi.csv"
    code = cli.main(["curve-phi", "--p", "13", "--m", "1", "--delta", "0.25",
                     "--xi-max", "1.0", "--out", str(out), "--plot"])
    assert code == 0
    assert (tmp_path / "phi.png").exists()


def test_validate_invariants_fast_passes(capsys):
    assert cli.main(["validate", "--suite", "invariants", "--fast"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_threads_variable_is_informational(monkeypatch, capsys):
    monkeypatch.setenv("LORENTZ_THREADS", "8")
    assert cli.main(["exact", "--which", "leading", "--d", "3"]) == 0
    assert "informational" in capsys.readouterr().err
