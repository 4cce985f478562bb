import subprocess
import sys

import numpy as np
import pytest

from atomreadout import io
from atomreadout.cli import run_command
from atomreadout.counting import p_bright_closed

from conftest import model_from_row

SMALL = "sim.n_bright_trials = 1500\nsim.n_dark_trials = 1500\nsim.seed = 11\n"


@pytest.fixture
def run_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "c.conf").write_text(SMALL)
    return tmp_path


def test_simulate_analyze_fit_report(run_dir, capsys):
    assert run_command(["simulate", "--config", "c.conf", "--out", "d.trials"]) == 0
    assert len(io.load_trials("d.trials")) == 3000
    assert run_command(["analyze", "d.trials", "--config", "c.conf", "--out-dir", "out"]) == 0
    meta, curve = io.read_table("out/curve.csv")
    assert curve["time_us"].size == 200 and "fidelity_n2_prob" in curve
    assert meta["seed"] == "11"
    f2 = curve["fidelity_n2_prob"]
    assert 0.9 < f2.max() < 1 and 100 <= curve["time_us"][np.argmax(f2)] <= 200
    capsys.readouterr()
    assert run_command(["fit", "out/curve.csv", "--rbg", "1.05", "--nthresh", "1",
                        "--label", "p40", "--out-dir", "out"]) == 0
    report = capsys.readouterr().out
    assert "etaR0/R_l" in report and "p40" in report
    fit, label = io.load_fit("out/fit_p40.conf")
    assert label == "p40" and abs(fit.eta_r0 - 39.4) < 4 * fit.eta_r0_se
    _, band = io.read_table("out/band_p40.csv")
    assert np.all(band["band_low_prob"] <= band["eps_bright_fit_prob"])
    assert run_command(["report", "out/fit_p40.conf", "out/fit_p40.conf",
                        "--labels", "a,b"]) == 0
    assert "largest ratio: a, b" in capsys.readouterr().out


def test_outputs_are_deterministic(run_dir):
    for name in ("a", "b"):
        assert run_command(["simulate", "--config", "c.conf", "--out", f"{name}.trials",
                            "--workers", "1" if name == "a" else "3"]) == 0
        assert run_command(["analyze", f"{name}.trials", "--config", "c.conf",
                            "--out-dir", name]) == 0
    assert (run_dir / "a.trials").read_bytes() == (run_dir / "b.trials").read_bytes()
    for table in ("curve.csv", "histogram.csv", "summary.csv"):
        a = (run_dir / "a" / table).read_text().replace("a.trials", "X")
        b = (run_dir / "b" / table).read_text().replace("b.trials", "X")
        assert a == b


def test_distribution_prints_pmf(capsys):
    assert run_command(["distribution", "--eta-r0", "39.4", "--rl", "1.31", "--rbg", "1.05",
                        "--t", "200"]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l and not l.startswith("#")]
    assert lines[0] == "photons_count,probability_prob"
    rows = np.array([[float(x) for x in l.split(",")] for l in lines[1:]])
    model = model_from_row("+40 MHz")
    expected = [p_bright_closed(int(n), 200e-6, model) for n in rows[:, 0]]
    np.testing.assert_allclose(rows[:, 1], expected, rtol=1e-11, atol=1e-300)
    assert rows[:, 1].sum() == pytest.approx(1, abs=1e-11)


def test_spectrum_tables(run_dir, capsys):
    assert run_command(["spectrum", "--points", "25", "--out-dir", "s"]) == 0
    assert "FWHM" in capsys.readouterr().out
    _, spec = io.read_table("s/spectrum.csv")
    _, pops = io.read_table("s/populations.csv")
    assert spec["detuning_mhz"].size == 25
    np.testing.assert_allclose(pops["pop_f2_m+1_prob"], pops["pop_f2_m-1_prob"], atol=1e-10)


def test_conflicting_options(run_dir, capsys):
    assert run_command(["simulate", "--config", "c.conf", "--seed", "12",
                        "--out", "x.trials"]) == 1
    assert "conflicting values for sim.seed" in capsys.readouterr().err
    assert run_command(["simulate", "--config", "c.conf", "--seed", "11",
                        "--out", "x.trials"]) == 0


def test_errors_give_messages_and_status(run_dir, capsys):
    assert run_command(["analyze", "missing.trials"]) == 1
    assert "missing.trials" in capsys.readouterr().err
    (run_dir / "bad.conf").write_text("sim.seed = 1\nsim.unknown = 2\n")
    assert run_command(["simulate", "--config", "bad.conf", "--out", "x"]) == 1
    assert "unknown key" in capsys.readouterr().err
    assert run_command(["fit", "nothing.csv"]) == 1
    assert "--rbg" in capsys.readouterr().err


def test_unknown_flag_prints_usage(capsys):
    assert run_command(["simulate", "--out", "x", "--frobnicate"]) == 2
    assert "usage:" in capsys.readouterr().err
    assert run_command(["teleport"]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "atomreadout", "distribution", "--eta-r0", "10",
                           "--rl", "1", "--rbg", "1", "--t", "5"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0 and "probability_prob" in proc.stdout
