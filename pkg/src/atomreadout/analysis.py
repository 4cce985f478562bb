"""Time-resolved threshold analysis of time-tagged readout trials.

A trial is called bright at time ``t`` when at least ``n_thresh`` photons
arrived at or before ``t`` (right-closed bins). The fraction of bright
preparations called dark is the bright error, the fraction of dark
preparations called bright is the dark error, and the fidelity is one
minus their mean. Intervals are 95% Wilson score intervals.
"""
from array import array
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from .exceptions import AnalysisError, DataError, DomainError
from .simulation import PrepState

Z95 = float(stats.norm.ppf(0.975))
DEFAULT_THRESHOLDS = (1, 2, 3)


def wilson_interval(successes, n, z=Z95):
    """Wilson score interval for a binomial proportion (vectorised)."""
    successes = np.asarray(successes, dtype=float)
    n = np.asarray(n, dtype=float)
    p = successes / n
    denom = 1 + z**2 / n
    centre = (p + z**2 / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    # the end points are exactly 0 and 1 at the boundaries; avoid rounding residue
    lo = np.where(successes == 0, 0.0, np.clip(centre - half, 0, 1))
    hi = np.where(successes == n, 1.0, np.clip(centre + half, 0, 1))
    return lo, hi


def bin_edges(bin_width, horizon):
    """Right edges ``j * bin_width`` for ``j = 1..floor(horizon / bin_width)``."""
    if bin_width <= 0 or horizon <= 0:
        raise DomainError("bin_width and horizon must be positive")
    n_bins = int(np.floor(horizon / bin_width + 1e-9))
    return np.round(np.arange(1, n_bins + 1) * bin_width, 9)


def cumulative_counts(trial, bin_width=1.0, horizon=200.0):
    """``c[j]`` = number of photons at or before ``j * bin_width``; ``c[0]`` is time zero."""
    ts = np.asarray(getattr(trial, "timestamps", trial), dtype=float)
    if ts.size and np.any(np.diff(ts) < 0):
        raise DataError(f"trial {getattr(trial, 'trial_id', '?')}: timestamps are not sorted")
    edges = np.concatenate([[0.0], bin_edges(bin_width, horizon)])
    return np.searchsorted(ts, edges, side="right")


@dataclass
class FidelityCurve:
    """Error rates and fidelity per threshold (rows) and time bin (columns)."""

    bin_width: float
    times: np.ndarray
    thresholds: tuple
    eps_bright: np.ndarray
    eps_dark: np.ndarray
    n_bright: int
    n_dark: int

    @property
    def fidelity(self):
        return 1.0 - (self.eps_bright + self.eps_dark) / 2

    @property
    def bright_ci(self):
        return wilson_interval(np.round(self.eps_bright * self.n_bright), self.n_bright)

    @property
    def dark_ci(self):
        return wilson_interval(np.round(self.eps_dark * self.n_dark), self.n_dark)

    @property
    def fidelity_ci(self):
        # Wilson half-widths of the two independent proportions, combined in quadrature
        b_lo, b_hi = self.bright_ci
        d_lo, d_hi = self.dark_ci
        half = 0.5 * np.hypot((b_hi - b_lo) / 2, (d_hi - d_lo) / 2)
        f = self.fidelity
        return np.clip(f - half, 0, 1), np.clip(f + half, 0, 1)

    @property
    def ci_low(self):
        return self.fidelity_ci[0]

    @property
    def ci_high(self):
        return self.fidelity_ci[1]

    def row(self, n_thresh):
        try:
            return self.thresholds.index(n_thresh)
        except ValueError:
            raise KeyError(f"threshold {n_thresh} not in curve {self.thresholds}") from None


class _ArrivalSummary:
    """Per-threshold k-th photon arrival times, accumulated one trial at a time."""

    def __init__(self, thresholds):
        self.thresholds = tuple(thresholds)
        self.kth = [array("d") for _ in self.thresholds]
        self.n = 0

    def add(self, trial):
        ts = trial.timestamps
        for store, k in zip(self.kth, self.thresholds):
            store.append(ts[k - 1] if ts.size >= k else np.inf)
        self.n += 1

    def reached(self, edges):
        """Number of trials with at least k photons by each edge, shape (thresholds, bins)."""
        out = np.empty((len(self.thresholds), edges.size), dtype=np.int64)
        for i, store in enumerate(self.kth):
            out[i] = np.searchsorted(np.sort(np.frombuffer(store)), edges, side="right")
        return out


def _keep(trial, post_select):
    return not post_select or (trial.retained_before and trial.retained_after)


def _check_thresholds(thresholds):
    thresholds = tuple(sorted(set(int(k) for k in thresholds)))
    if not thresholds or thresholds[0] < 1:
        raise DomainError("thresholds must be integers >= 1")
    return thresholds


def _summaries(bright, dark, thresholds, post_select):
    sb, sd = _ArrivalSummary(thresholds), _ArrivalSummary(thresholds)
    for trial in bright:
        if _keep(trial, post_select):
            sb.add(trial)
    for trial in dark:
        if _keep(trial, post_select):
            sd.add(trial)
    return sb, sd


def _curve(sb, sd, thresholds, bin_width, horizon, post_select):
    for name, s in (("bright", sb), ("dark", sd)):
        if s.n == 0:
            why = "after post-selection on retention" if post_select else "in input"
            raise AnalysisError(f"no {name}-prepared trials {why}")
    edges = bin_edges(bin_width, horizon)
    eps_b = 1.0 - sb.reached(edges) / sb.n
    eps_d = sd.reached(edges) / sd.n
    return FidelityCurve(bin_width, edges, thresholds, eps_b, eps_d, sb.n, sd.n)


def error_curves(bright, dark, thresholds=DEFAULT_THRESHOLDS, bin_width=1.0,
                 horizon=200.0, post_select=True):
    """Build a :class:`FidelityCurve` from bright- and dark-prepared trials.

    Both inputs may be any iterable (they are consumed once). With
    ``post_select`` only trials with the atom present before and after the
    readout are counted.
    """
    thresholds = _check_thresholds(thresholds)
    sb, sd = _summaries(bright, dark, thresholds, post_select)
    return _curve(sb, sd, thresholds, bin_width, horizon, post_select)


def error_curves_from_stream(trials, thresholds=DEFAULT_THRESHOLDS, bin_width=1.0,
                             horizon=200.0, post_select=True):
    """Like :func:`error_curves` but for one mixed stream split on ``prep_state``."""
    thresholds = _check_thresholds(thresholds)
    sb, sd = _ArrivalSummary(thresholds), _ArrivalSummary(thresholds)
    for trial in trials:
        if _keep(trial, post_select):
            (sb if trial.prep_state is PrepState.BRIGHT else sd).add(trial)
    return _curve(sb, sd, thresholds, bin_width, horizon, post_select)


def split_by_state(trials):
    trials = list(trials)
    return ([t for t in trials if t.prep_state is PrepState.BRIGHT],
            [t for t in trials if t.prep_state is PrepState.DARK])


class OperatingPoint(NamedTuple):
    n_thresh: int
    time: float
    fidelity: float
    ci: tuple


def optimal_operating_point(curve):
    """Best (threshold, time) on the curve; ties go to the earlier time, then the lower threshold."""
    fid = curve.fidelity
    rows, cols = np.nonzero(fid == fid.max())
    order = np.lexsort((rows, cols))
    r, c = int(rows[order[0]]), int(cols[order[0]])
    lo, hi = curve.fidelity_ci
    return OperatingPoint(curve.thresholds[r], float(curve.times[c]), float(fid[r, c]),
                          (float(lo[r, c]), float(hi[r, c])))


def retention_rate(trials):
    """Fraction of loaded trials (``retained_before``) still holding the atom afterwards."""
    n = kept = 0
    for trial in trials:
        if trial.retained_before:
            n += 1
            kept += bool(trial.retained_after)
    if n == 0:
        raise AnalysisError("retention rate needs at least one loaded trial")
    lo, hi = wilson_interval(kept, n)
    return kept / n, (float(lo), float(hi))


@dataclass
class CountHistogram:
    """Frequency of each photon number at ``at_time`` µs, per preparation."""

    at_time: float
    counts_bright: np.ndarray
    counts_dark: np.ndarray

    @property
    def photon_numbers(self):
        return np.arange(len(self.counts_bright))


def histogram_at(trials, at_time, horizon=200.0, post_select=False):
    """Histogram of cumulative photon counts at ``at_time`` µs."""
    if at_time < 0 or at_time > horizon:
        raise DomainError(f"at_time={at_time} outside [0, {horizon}] us")
    counts = {PrepState.BRIGHT: [], PrepState.DARK: []}
    for trial in trials:
        if _keep(trial, post_select):
            n = int(np.searchsorted(trial.timestamps, at_time, side="right"))
            counts[trial.prep_state].append(n)
    b = np.bincount(np.asarray(counts[PrepState.BRIGHT], dtype=int))
    d = np.bincount(np.asarray(counts[PrepState.DARK], dtype=int))
    size = max(b.size, d.size)
    return CountHistogram(at_time, np.pad(b, (0, size - b.size)), np.pad(d, (0, size - d.size)))


def bright_error_curve(trials, n_thresh, times, post_select=True):
    """Empirical bright error at ``times`` (µs) for one threshold, with sample size."""
    s = _ArrivalSummary((int(n_thresh),))
    for trial in trials:
        if _keep(trial, post_select):
            s.add(trial)
    if s.n == 0:
        raise AnalysisError("no trials to build a bright error curve from")
    return 1.0 - s.reached(np.asarray(times, dtype=float))[0] / s.n, s.n
