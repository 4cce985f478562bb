"""Seeded Monte Carlo generation of time-tagged readout trials.

Photon arrivals come from exponential inter-arrival sampling. A bright
trial emits at ``eta*r0 + r_bg`` until an exponentially distributed leak
time and at ``r_bg`` afterwards; a dark trial emits background only.
Timestamps are in microseconds relative to the start of the readout pulse
and are rounded to the nanosecond, the resolution of the trial file.

Random streams are keyed by ``(seed, block)`` where ``block`` is
``trial_id // BLOCK_SIZE``, so a dataset does not depend on generation
order or on how many workers produced it.
"""
import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .counting import BrightModel
from .exceptions import DataError, DomainError

BLOCK_SIZE = 512
TIME_DECIMALS = 3


class PrepState(str, enum.Enum):
    BRIGHT = "bright"
    DARK = "dark"


@dataclass(frozen=True, eq=False)
class TrialRecord:
    """One readout experiment.

    ``timestamps`` are photon arrival times in µs, ascending, inside
    ``[0, readout_duration]``.
    """

    trial_id: int
    prep_state: PrepState
    timestamps: np.ndarray
    retained_before: bool = True
    retained_after: bool = True

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float)
        ts.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        if not isinstance(self.prep_state, PrepState):
            object.__setattr__(self, "prep_state", PrepState(self.prep_state))
        if ts.ndim != 1:
            raise DataError(f"trial {self.trial_id}: timestamps must be one-dimensional")
        if ts.size > 1 and (ts[1:] < ts[:-1]).any():
            raise DataError(f"trial {self.trial_id}: timestamps are not sorted")
        if ts.size and ts[0] < 0:
            raise DataError(f"trial {self.trial_id}: negative timestamp")

    @property
    def n_photons(self):
        return self.timestamps.size

    def validate(self, readout_duration):
        if self.timestamps.size and self.timestamps[-1] > readout_duration:
            raise DataError(f"trial {self.trial_id}: timestamp beyond {readout_duration} us")

    def __eq__(self, other):
        if not isinstance(other, TrialRecord):
            return NotImplemented
        return (self.trial_id == other.trial_id and self.prep_state == other.prep_state
                and self.retained_before == other.retained_before
                and self.retained_after == other.retained_after
                and np.array_equal(self.timestamps, other.timestamps))

    def __hash__(self):
        return hash((self.trial_id, self.prep_state, self.timestamps.tobytes()))


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to generate a dataset.

    Rates inside ``bright_model`` and ``dark_background`` are in 1/s,
    ``readout_duration`` in µs. ``prep_error_bright`` is the probability
    that a trial labelled bright actually holds a dark atom, and
    ``prep_error_dark`` the reverse.
    """

    bright_model: BrightModel
    dark_background: float
    readout_duration: float = 200.0
    n_bright_trials: int = 3583
    n_dark_trials: int = 3550
    retention_probability: float = 0.971
    seed: int = 0
    prep_error_bright: float = 0.0
    prep_error_dark: float = 0.0

    def __post_init__(self):
        if self.readout_duration <= 0:
            raise DomainError("readout_duration must be positive")
        if self.n_bright_trials < 0 or self.n_dark_trials < 0:
            raise DomainError("trial counts must be non-negative")
        for name in ("retention_probability", "prep_error_bright", "prep_error_dark"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise DomainError(f"{name} must lie in [0, 1], got {value}")
        if self.dark_background < 0:
            raise DomainError("dark_background must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    @property
    def n_trials(self):
        return self.n_bright_trials + self.n_dark_trials


def block_stream(seed, block):
    """Independent generator for one block of trial ids."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, block])))


def _poisson_arrivals(rate, start, stop, rng):
    """Arrival-time matrix of a rate-``rate`` process on ``[start_i, stop_i)``.

    Exponential gaps are drawn a matrix at a time and the matrix is widened
    until every row has passed its ``stop``. Entries at or beyond ``stop``
    are set to ``inf``.
    """
    m = start.size
    if rate <= 0 or m == 0:
        return np.full((m, 0), np.inf)
    mean = rate * max(float(np.max(stop - start)), 0.0)
    width = int(mean + 6 * np.sqrt(mean) + 8)
    times = start[:, None] + np.cumsum(rng.exponential(1.0 / rate, (m, width)), axis=1)
    while np.any(times[:, -1] < stop):
        more = times[:, -1:] + np.cumsum(rng.exponential(1.0 / rate, (m, width)), axis=1)
        times = np.concatenate([times, more], axis=1)
    times[times >= stop[:, None]] = np.inf
    return times


def _bright_block(model, duration, m, rng):
    """Timestamp matrix (µs, ``inf``-padded) of ``m`` bright trials."""
    t_end = duration * 1e-6
    if model.r_loss > 0:
        leak = rng.exponential(1.0 / model.r_loss, m)
    else:
        leak = np.full(m, np.inf)
    switch = np.minimum(leak, t_end)
    before = _poisson_arrivals(model.eta_r0 + model.r_bg, np.zeros(m), switch, rng)
    after = _poisson_arrivals(model.r_bg, switch, np.full(m, t_end), rng)
    return _to_us(np.concatenate([before, after], axis=1))


def _dark_block(r_bg, duration, m, rng):
    t_end = duration * 1e-6
    return _to_us(_poisson_arrivals(r_bg, np.zeros(m), np.full(m, t_end), rng))


def _to_us(seconds):
    return np.round(seconds * 1e6, TIME_DECIMALS)


def _rows(matrix):
    """Split an ``inf``-padded matrix into per-row arrays of finite entries."""
    finite = np.isfinite(matrix)
    counts = finite.sum(axis=1)
    return np.split(matrix[finite], np.cumsum(counts)[:-1]) if len(counts) else []


def simulate_bright_trial(model, duration, stream, trial_id=0):
    """One bright-prepared trial of ``duration`` µs drawn from ``stream``."""
    ts = _rows(_bright_block(model, duration, 1, stream))[0]
    return TrialRecord(trial_id, PrepState.BRIGHT, ts)


def simulate_dark_trial(r_bg, duration, stream, trial_id=0):
    """One dark-prepared trial: background counts only."""
    if r_bg < 0:
        raise DomainError("r_bg must be non-negative")
    ts = _rows(_dark_block(r_bg, duration, 1, stream))[0]
    return TrialRecord(trial_id, PrepState.DARK, ts)


def _block_draws(config, block):
    first = block * BLOCK_SIZE
    ids = np.arange(first, min(first + BLOCK_SIZE, config.n_trials))
    rng = block_stream(config.seed, block)
    m = ids.size
    # fixed draw order: labels' true states, retention, then photons
    is_bright_label = ids < config.n_bright_trials
    u_prep = rng.random(m)
    truly_bright = np.where(is_bright_label, u_prep >= config.prep_error_bright,
                            u_prep < config.prep_error_dark)
    retained = rng.random(m) < config.retention_probability
    n_bright = int(truly_bright.sum())
    bright = _bright_block(config.bright_model, config.readout_duration, n_bright, rng)
    dark = _dark_block(config.dark_background, config.readout_duration, m - n_bright, rng)
    return ids, is_bright_label, truly_bright, retained, bright, dark


def _simulate_block(config, block):
    """Records for trial ids ``[block*BLOCK_SIZE, ...)`` clipped to the dataset."""
    ids, is_bright_label, truly_bright, retained, bright, dark = _block_draws(config, block)
    bright_ts, dark_ts = iter(_rows(bright)), iter(_rows(dark))
    records = []
    for i, tid in enumerate(ids):
        ts = next(bright_ts) if truly_bright[i] else next(dark_ts)
        label = PrepState.BRIGHT if is_bright_label[i] else PrepState.DARK
        records.append(TrialRecord(int(tid), label, ts, True, bool(retained[i])))
    return records


def simulate_dataset(config, workers=1):
    """All trials of ``config``: bright ids first, then dark ids.

    ``workers > 1`` spreads blocks over processes; the result is identical
    to the sequential one.
    """
    n_blocks = -(-config.n_trials // BLOCK_SIZE)
    blocks = range(n_blocks)
    if workers > 1 and n_blocks > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_simulate_block, [config] * n_blocks, blocks))
    else:
        chunks = [_simulate_block(config, b) for b in blocks]
    return [rec for chunk in chunks for rec in chunk]


def simulate_bright_counts(model, duration, n_trials, seed):
    """Photon counts of ``n_trials`` bright trials, same streams as :func:`simulate_dataset`.

    Equivalent to counting the timestamps of a dataset with no dark trials,
    no preparation error and the same seed, without building records.
    """
    cfg = SimConfig(model, 0.0, duration, n_trials, 0, 1.0, seed)
    counts = [np.isfinite(_block_draws(cfg, block)[4]).sum(axis=1)
              for block in range(-(-n_trials // BLOCK_SIZE))]
    return np.concatenate(counts) if counts else np.zeros(0, dtype=int)
