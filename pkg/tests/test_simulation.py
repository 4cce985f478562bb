import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from atomreadout.counting import BrightModel, bright_error, dark_error, p_bright_closed
from atomreadout.exceptions import DataError, DomainError
from atomreadout.simulation import (BLOCK_SIZE, PrepState, SimConfig, TrialRecord, block_stream,
                                    simulate_bright_counts, simulate_bright_trial,
                                    simulate_dark_trial, simulate_dataset)

from conftest import model_from_row


def small_config(**kw):
    base = dict(bright_model=model_from_row("+40 MHz"), dark_background=700.0,
                n_bright_trials=700, n_dark_trials=650, seed=42)
    base.update(kw)
    return SimConfig(**base)


def test_trial_record_rejects_unsorted_and_negative():
    with pytest.raises(DataError, match="trial 7"):
        TrialRecord(7, "bright", [3.0, 1.0])
    with pytest.raises(DataError):
        TrialRecord(8, "dark", [-0.5, 1.0])
    rec = TrialRecord(9, "dark", [1.0, 250.0])
    with pytest.raises(DataError, match="trial 9"):
        rec.validate(200.0)


def test_trial_record_is_immutable():
    rec = TrialRecord(1, PrepState.BRIGHT, [1.0, 2.0])
    with pytest.raises(ValueError):
        rec.timestamps[0] = 5.0


def test_simconfig_validation():
    with pytest.raises(DomainError):
        small_config(readout_duration=0.0)
    with pytest.raises(DomainError):
        small_config(n_bright_trials=-1)
    with pytest.raises(DomainError):
        small_config(retention_probability=1.2)


def test_pure_poisson_mean():
    model = BrightModel.from_detected(4e4, 0.0, 0.0)
    counts = simulate_bright_counts(model, 200.0, 100_000, seed=3)
    expected = 4e4 * 200e-6
    assert abs(counts.mean() - expected) < 4 * np.sqrt(expected / counts.size)


def test_single_trial_generators():
    model = model_from_row("+40 MHz")
    a = simulate_bright_trial(model, 200.0, block_stream(5, 0), trial_id=3)
    b = simulate_bright_trial(model, 200.0, block_stream(5, 0), trial_id=3)
    assert a == b and a.prep_state is PrepState.BRIGHT
    assert simulate_dark_trial(0.0, 200.0, block_stream(5, 1)).n_photons == 0


def test_dark_counts_follow_poisson_tail():
    cfg = SimConfig(model_from_row("+40 MHz"), 1e3, 200.0, 0, 200_000, 1.0, seed=8)
    counts = np.array([t.n_photons for t in simulate_dataset(cfg)])
    assert abs(counts.mean() - 0.2) < 4 * np.sqrt(0.2 / counts.size)
    for k in (1, 2, 3):
        p = dark_error(200e-6, k, 1e3)
        n_hit = int(np.sum(counts >= k))
        assert stats.binomtest(n_hit, counts.size, p).pvalue > 1e-3


def test_empty_dataset():
    assert simulate_dataset(small_config(n_bright_trials=0, n_dark_trials=0)) == []


def test_dataset_layout_and_retention():
    cfg = small_config()
    data = simulate_dataset(cfg)
    assert [t.trial_id for t in data] == list(range(cfg.n_trials))
    assert all(t.prep_state is PrepState.BRIGHT for t in data[:700])
    assert all(t.prep_state is PrepState.DARK for t in data[700:])
    kept = sum(t.retained_after for t in data)
    assert stats.binomtest(kept, len(data), 0.971).pvalue > 1e-3


def test_dataset_independent_of_workers():
    cfg = small_config(n_bright_trials=3 * BLOCK_SIZE + 5)
    assert simulate_dataset(cfg) == simulate_dataset(cfg, workers=3)


def test_seed_changes_dataset():
    assert simulate_dataset(small_config(seed=1)) != simulate_dataset(small_config(seed=2))


def test_count_path_matches_records():
    model = model_from_row("+46 MHz")
    cfg = SimConfig(model, 0.0, 200.0, 1500, 0, 1.0, seed=77)
    from_records = [t.n_photons for t in simulate_dataset(cfg)]
    np.testing.assert_array_equal(simulate_bright_counts(model, 200.0, 1500, 77), from_records)


def test_prep_error_mixes_states():
    cfg = small_config(n_bright_trials=4000, n_dark_trials=0, prep_error_bright=0.25, seed=5)
    counts = np.array([t.n_photons for t in simulate_dataset(cfg)])
    # a truly dark atom in 200 us sees 0.7 kcps background only
    frac_low = np.mean(counts <= 1)
    expected = 0.25 * stats.poisson.cdf(1, 0.14) + 0.75 * bright_error(
        200e-6, 2, cfg.bright_model)
    assert abs(frac_low - expected) < 4 * np.sqrt(expected * (1 - expected) / counts.size)


def test_bright_histogram_goodness_of_fit():
    model = model_from_row("+52 MHz")
    counts = simulate_bright_counts(model, 200.0, 200_000, seed=19)
    pmf = np.array([p_bright_closed(n, 200e-6, model) for n in range(60)])
    observed = np.bincount(counts, minlength=60)[:60].astype(float)
    expected = pmf * counts.size
    # pool the sparse tail so every cell expects at least 5 events
    keep = expected >= 5
    obs = np.append(observed[keep], counts.size - observed[keep].sum())
    exp = np.append(expected[keep], counts.size - expected[keep].sum())
    assert stats.chisquare(obs, exp).pvalue > 0.001


@pytest.mark.parametrize("eta_r0,r_bg,r_loss,k", [
    (39.4e3, 1.05e3, 1.31e3, 1), (58.7e3, 1.13e3, 4.1e3, 2), (33.6e3, 1.12e3, 3.63e3, 3),
    (10e3, 0.5e3, 20e3, 1), (80e3, 2e3, 0.1e3, 4)])
def test_threshold_error_exchangeable_with_model(eta_r0, r_bg, r_loss, k):
    model = BrightModel.from_detected(eta_r0, r_bg, r_loss)
    counts = simulate_bright_counts(model, 120.0, 1_000_000, seed=k)
    hits = int(np.sum(counts < k))
    assert stats.binomtest(hits, counts.size, bright_error(120e-6, k, model)).pvalue > 1e-3


@given(seed=st.integers(0, 2**64 - 1), eta_r0=st.floats(0, 2e5), r_bg=st.floats(0, 1e4),
       r_loss=st.floats(0, 1e5), duration=st.floats(0.01, 500.0))
def test_generated_records_are_valid(seed, eta_r0, r_bg, r_loss, duration):
    model = BrightModel.from_detected(eta_r0, r_bg, r_loss)
    cfg = SimConfig(model, r_bg, duration, 20, 20, 0.9, seed)
    for rec in simulate_dataset(cfg):
        ts = rec.timestamps
        assert np.all(np.diff(ts) >= 0)
        assert ts.size == 0 or (ts[0] >= 0 and ts[-1] <= duration)
        np.testing.assert_array_equal(ts, np.round(ts, 3))
