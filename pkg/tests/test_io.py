import tracemalloc

import numpy as np
import pytest
from hypothesis import given, strategies as st

from atomreadout import io
from atomreadout.config import config_hash, dump_keyvalue, parse_keyvalue, parse_value
from atomreadout.exceptions import ConfigError, DataError
from atomreadout.fitting import FitResult
from atomreadout.simulation import PrepState, SimConfig, TrialRecord, simulate_dataset

from conftest import model_from_row


@pytest.fixture(scope="module")
def dataset():
    cfg = SimConfig(model_from_row("+40 MHz"), 700.0, n_bright_trials=300, n_dark_trials=300,
                    seed=4)
    return simulate_dataset(cfg)


def test_parse_values():
    assert parse_value("3") == 3 and parse_value("2.5") == 2.5
    assert parse_value("true") is True and parse_value("1, 2,3") == [1, 2, 3]
    assert parse_value("sandwich") == "sandwich"


def test_config_errors_carry_location():
    with pytest.raises(ConfigError, match="c.conf:2"):
        parse_keyvalue("a = 1\nnot a pair\n", "c.conf")
    with pytest.raises(ConfigError, match=":3: duplicate"):
        parse_keyvalue("a = 1\n\na = 2\n")
    with pytest.raises(ConfigError, match="invalid key"):
        parse_keyvalue("1bad = 2\n")
    with pytest.raises(ConfigError, match="empty value"):
        parse_keyvalue("a =  # nothing\n")


def test_config_dump_roundtrip_and_hash():
    values = {"b.x": 1.5, "a.y": [1, 2], "c": True, "d": "text"}
    again = parse_keyvalue(dump_keyvalue(values))
    assert again == values
    assert config_hash(values) == config_hash(dict(reversed(list(values.items()))))


def test_run_config_rejects_unknown_and_bad_types():
    with pytest.raises(ConfigError, match="unknown key"):
        io.RunConfig.parse("sim.sede = 3\n")
    with pytest.raises(ConfigError, match="must be a number"):
        io.RunConfig.parse("sim.eta_r0_kcps = fast\n")
    with pytest.raises(ConfigError, match="conflict"):
        io.RunConfig.parse("sim.r0_kcps = 4000\nsim.eta_r0_kcps = 39.4\n")


def test_run_config_builds_components():
    cfg = io.RunConfig.parse("sim.r0_kcps = 4000\nprobe.detuning_mhz = 40\nsim.seed = 9\n")
    sim = cfg.sim_config()
    assert sim.bright_model.eta_r0 == pytest.approx(4000e3 * 0.0096)
    assert sim.seed == 9 and cfg.probe().detuning_from_untrapped == 40.0
    assert cfg.scheme().delta_g == -27.0


def test_run_config_override_conflict():
    cfg = io.RunConfig.parse("sim.seed = 9\n", "run.conf")
    assert cfg.override("sim.seed", 9)["sim.seed"] == 9
    assert io.RunConfig().override("sim.seed", 3)["sim.seed"] == 3
    with pytest.raises(ConfigError, match="run.conf"):
        cfg.override("sim.seed", 10)


def test_trial_roundtrip(tmp_path, dataset):
    path = tmp_path / "d.trials"
    io.save_trials(dataset, path, readout_duration=200.0, meta={"seed": 4})
    assert io.load_trials(path) == dataset
    assert io.read_trial_header(path) == {"readout_duration_us": "200.000", "seed": "4"}


@pytest.mark.parametrize("size", [0, 1, 600])
def test_trial_files_are_byte_identical(tmp_path, dataset, size):
    a, b = tmp_path / "a", tmp_path / "b"
    io.save_trials(dataset[:size], a, 200.0)
    io.save_trials(list(dataset[:size]), b, 200.0)
    assert a.read_bytes() == b.read_bytes()
    assert io.load_trials(a) == dataset[:size]


def test_example_line_format(tmp_path):
    path = tmp_path / "one.trials"
    io.save_trials([TrialRecord(0, PrepState.BRIGHT, [0.5, 0.5, 150.2])], path)
    assert path.read_text().splitlines()[-1] == "0,bright,1,1,3,0.500,0.500,150.200"


def test_empty_file_loads_empty(tmp_path):
    path = tmp_path / "empty.trials"
    path.write_text("")
    assert io.load_trials(path) == []


@pytest.mark.parametrize("line,message", [
    ("0,bright,1,1,2,5.0", "n_photons=2 but 1"),
    ("0,grey,1,1,0", "unknown prep_state"),
    ("0,bright,1,2,0", "retention flag"),
    ("x,bright,1,1,0", "line"),
    ("0,bright,1", "at least 5 fields"),
])
def test_malformed_lines_report_line_number(tmp_path, line, message):
    path = tmp_path / "bad.trials"
    path.write_text(f"{io.TRIAL_MAGIC}\n1,dark,1,1,0\n{line}\n")
    with pytest.raises(DataError, match=f"bad.trials:3: .*{message}|{message}"):
        io.load_trials(path)


def test_unsorted_timestamps_name_the_trial(tmp_path):
    path = tmp_path / "bad.trials"
    path.write_text("17,bright,1,1,2,9.000,3.000\n")
    with pytest.raises(DataError, match="trial 17"):
        io.load_trials(path)


def test_timestamps_beyond_readout_rejected(tmp_path):
    path = tmp_path / "late.trials"
    path.write_text("# readout_duration_us=200.000\n4,dark,1,1,1,250.000\n")
    with pytest.raises(DataError, match="trial 4"):
        io.load_trials(path)


def test_missing_file_has_path_context(tmp_path):
    with pytest.raises(DataError, match="nope.trials"):
        io.load_trials(tmp_path / "nope.trials")
    with pytest.raises(OSError, match="missing_dir"):
        io.save_trials([], tmp_path / "missing_dir" / "x.trials")


def test_streaming_large_file_memory(tmp_path):
    path = tmp_path / "big.trials"
    rng = np.random.default_rng(0)
    line = ",".join(f"{t:.3f}" for t in np.sort(rng.uniform(0, 200, 8)))
    with open(path, "w") as fh:
        fh.write(io.TRIAL_MAGIC + "\n")
        for i in range(1_000_000):
            fh.write(f"{i},bright,1,1,8,{line}\n")
    tracemalloc.start()
    n = photons = 0
    for rec in io.iter_trials(path):
        n += 1
        photons += rec.n_photons
    peak = tracemalloc.get_traced_memory()[1]
    tracemalloc.stop()
    assert n == 1_000_000 and photons == 8_000_000
    # a resident copy of 8e6 timestamps alone would need 64 MB
    assert peak < 5_000_000


def test_table_roundtrip_and_units(tmp_path):
    path = tmp_path / "t.csv"
    io.write_table(path, {"time_us": [1.0, 2.0], "count_count": np.array([3, 4])},
                   {"config_hash": "abc", "seed": 1})
    meta, cols = io.read_table(path)
    assert meta == {"config_hash": "abc", "seed": "1"}
    np.testing.assert_array_equal(cols["count_count"], [3, 4])
    assert path.read_text().startswith("# config_hash=abc\n# seed=1\ntime_us,count_count\n")


def test_table_errors(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a_us,b_us\n1,2\n3\n")
    with pytest.raises(DataError, match="t.csv:3"):
        io.read_table(path)


def test_fit_record_roundtrip(tmp_path):
    fit = FitResult(39.4, 0.2, 1.31, 0.04, 1.05, covariance=[[0.04, 0.001], [0.001, 0.0016]],
                    objective_value=12.5, n_trials=3583, se_method="sandwich")
    path = tmp_path / "fit.conf"
    io.save_fit(fit, path, "+40 MHz")
    back, label = io.load_fit(path)
    assert label == "+40 MHz"
    assert back.params == pytest.approx(fit.params, rel=1e-11)
    np.testing.assert_allclose(back.covariance, fit.covariance, rtol=1e-11)


@given(st.lists(st.tuples(st.sampled_from(["bright", "dark"]),
                          st.lists(st.integers(0, 200_000), max_size=12),
                          st.booleans(), st.booleans()), max_size=8))
def test_roundtrip_property(tmp_path_factory, rows):
    records = [TrialRecord(i, s, np.sort(ts) / 1000.0, b, a)
               for i, (s, ts, b, a) in enumerate(rows)]
    path = tmp_path_factory.mktemp("p") / "r.trials"
    io.save_trials(records, path, 200.0)
    assert io.load_trials(path) == records
