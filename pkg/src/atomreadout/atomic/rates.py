"""Ground-state rate equations for π-polarized probing of the D2 line.

Excited states are adiabatically eliminated: each ground sublevel is
pumped to the excited sublevels it couples to at a saturated Lorentzian
rate and the excited atom instantly decays back according to the
branching ratios. That leaves a linear 8x8 system for the ground
populations, integrated with an adaptive RK4 stepper.

Per channel ``g -> e`` the scattering rate is::

    (Gamma / 2) * s * S_ge / (1 + s + (2 * Delta_ge / Gamma)^2)

with ``s`` the probe saturation parameter, ``S_ge`` the strength relative
to the cycling transition and ``Delta_ge`` the light-shifted detuning.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from ..exceptions import DomainError, IntegrationError
from .levels import (EXCITED, GROUND, GROUND_INDEX, Manifold, branching_ratios,
                     relative_strength, relative_strength_exact)

N_GROUND = len(GROUND)
F1_SLICE = slice(0, 3)
F2_SLICE = slice(3, 8)


def decay_rate(scheme):
    """Natural decay rate in 1/s from the linewidth in MHz."""
    return 2 * np.pi * scheme.natural_linewidth * 1e6


def shifted_detuning(ground, excited, probe, scheme):
    """Probe detuning (MHz) from the light-shifted ``ground -> excited`` resonance."""
    if relative_strength_exact(ground, excited, probe.polarization) == 0:
        raise DomainError(f"{ground} -> {excited} is forbidden for q={probe.polarization}")
    return probe.detuning_from_untrapped - scheme.resonance(ground, excited)


def excitation_rate(ground, excited, probe, scheme):
    """Photon scattering rate (1/s) on one channel."""
    delta = shifted_detuning(ground, excited, probe, scheme)
    s = probe.saturation_parameter
    s_ij = s * relative_strength(ground, excited, probe.polarization)
    return 0.5 * decay_rate(scheme) * s_ij / (
        1 + s + (2 * delta / scheme.natural_linewidth) ** 2)


@dataclass(frozen=True)
class Channel:
    ground: int
    excited: object
    rate: float


@lru_cache(maxsize=4096)
def channels(probe, scheme):
    """All allowed channels for the probe polarization with their rates."""
    out = []
    for g in GROUND:
        for e in EXCITED:
            if e.m - g.m != probe.polarization:
                continue
            if relative_strength_exact(g, e, probe.polarization) == 0:
                continue
            out.append(Channel(GROUND_INDEX[g], e, excitation_rate(g, e, probe, scheme)))
    return tuple(out)


def rate_matrix(probe, scheme):
    """Generator ``M`` (1/s) of ``dP/dt = M P``; every column sums to zero."""
    m = np.zeros((N_GROUND, N_GROUND))
    for ch in channels(probe, scheme):
        m[ch.ground, ch.ground] -= ch.rate
        for g, b in branching_ratios(ch.excited).items():
            m[GROUND_INDEX[g], ch.ground] += ch.rate * b
    return m


@dataclass(frozen=True, eq=False)
class PopulationVector:
    """Ground-sublevel populations ordered as :data:`GROUND`."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (N_GROUND,):
            raise DomainError(f"need {N_GROUND} ground populations, got shape {v.shape}")
        if np.any(v < -1e-12) or abs(v.sum() - 1) > 1e-12:
            raise DomainError("populations must be non-negative and sum to 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform_f2(cls):
        v = np.zeros(N_GROUND)
        v[F2_SLICE] = 1 / 5
        return cls(v)

    def __getitem__(self, level):
        return float(self.values[GROUND_INDEX[level]])

    @property
    def f1_total(self):
        return float(self.values[F1_SLICE].sum())

    @property
    def f2_total(self):
        return float(self.values[F2_SLICE].sum())

    def by_level(self):
        return {g: float(p) for g, p in zip(GROUND, self.values)}


@dataclass
class Trajectory:
    times: np.ndarray
    populations: np.ndarray

    @property
    def final(self):
        return PopulationVector(self.populations[-1])


def _rk4(m, y, h):
    k1 = m @ y
    k2 = m @ (y + 0.5 * h * k1)
    k3 = m @ (y + 0.5 * h * k2)
    k4 = m @ (y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_linear(m, y0, duration, atol=1e-10, max_steps=2_000_000):
    """Step-doubling RK4 for ``dy/dt = m y`` over ``[0, duration]``.

    Each step compares one full step with two half steps and keeps the
    half-step result when their difference, scaled by 1/15, is below
    ``atol``.
    """
    y = np.asarray(y0, dtype=float)
    scale = float(np.max(np.abs(np.diag(m)), initial=0.0))
    if scale == 0 or duration == 0:
        return np.array([0.0, duration]), np.vstack([y, y])
    h = min(0.1 / scale, duration)
    t = 0.0
    times, ys = [0.0], [y]
    h_min = duration * 1e-14
    for _ in range(max_steps):
        if t >= duration:
            break
        h = min(h, duration - t)
        big = _rk4(m, y, h)
        half = _rk4(m, _rk4(m, y, h / 2), h / 2)
        err = float(np.max(np.abs(half - big))) / 15
        if err <= atol:
            t = duration if h == duration - t else t + h
            y = half
            times.append(t)
            ys.append(y)
        elif h <= h_min:
            raise IntegrationError(
                f"step size {h:.3g} at t={t:.6g} cannot meet atol={atol:g} (error {err:.3g})")
        growth = 4.0 if err == 0 else min(4.0, max(0.2, 0.9 * (atol / err) ** 0.2))
        h *= growth
    else:
        raise IntegrationError(f"exceeded {max_steps} steps before t={duration}")
    return np.array(times), np.array(ys)


def evolve_populations(initial, probe, scheme, duration=200.0, atol=1e-10):
    """Populations over a probe pulse of ``duration`` µs."""
    m = rate_matrix(probe, scheme) * 1e-6
    init = initial.values if isinstance(initial, PopulationVector) else initial
    times, ys = integrate_linear(m, init, duration, atol=atol)
    return Trajectory(times, ys)


def scattering_rate(populations, probe, scheme):
    """Total photon scattering rate (1/s) for the given ground populations."""
    p = populations.values if isinstance(populations, PopulationVector) else populations
    return float(sum(ch.rate * p[ch.ground] for ch in channels(probe, scheme)))


def orp_rates(populations, probe, scheme):
    """Transfer rate (1/s) from F=2 into F=1, split by the excited F' it passes through."""
    p = populations.values if isinstance(populations, PopulationVector) else populations
    out = {0: 0.0, 1: 0.0, 2: 0.0, 3: 0.0}
    for ch in channels(probe, scheme):
        if GROUND[ch.ground].manifold is not Manifold.GROUND_F2:
            continue
        to_f1 = sum(b for g, b in branching_ratios(ch.excited).items()
                    if g.manifold is Manifold.GROUND_F1)
        out[ch.excited.F] += ch.rate * p[ch.ground] * to_f1
    return out


def _end_state(probe, scheme, duration, initial):
    traj = evolve_populations(initial, probe, scheme, duration)
    return traj.populations[-1]


def _scan(detunings, probe, scheme, duration, initial, workers):
    initial = initial if initial is not None else PopulationVector.uniform_f2()
    probes = [replace(probe, detuning_from_untrapped=float(d)) for d in detunings]
    n = len(probes)
    if workers > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            ends = list(pool.map(_end_state, probes, [scheme] * n, [duration] * n,
                                 [initial] * n))
    else:
        ends = [_end_state(p, scheme, duration, initial) for p in probes]
    return probes, np.array(ends)


def population_spectrum(detunings, probe, scheme, duration=200.0, initial=None, workers=1):
    """End-of-pulse ground populations (rows: detunings, columns: :data:`GROUND`)."""
    return _scan(detunings, probe, scheme, duration, initial, workers)[1]


def fluorescence_spectrum(detunings, probe, scheme, duration=200.0, initial=None, workers=1):
    """Scattering rate (1/s) at the end of the pulse for each probe detuning (MHz)."""
    probes, ends = _scan(detunings, probe, scheme, duration, initial, workers)
    return np.array([scattering_rate(p, pr, scheme) for p, pr in zip(ends, probes)])


def spectrum_scan(detunings, probe, scheme, duration=200.0, initial=None, workers=1):
    """Fluorescence, populations and ORP split from one scan.

    Returns ``(rates, populations, orp)`` where ``orp`` has columns for the
    transfer through F'=1 and F'=2.
    """
    probes, ends = _scan(detunings, probe, scheme, duration, initial, workers)
    rates = np.array([scattering_rate(p, pr, scheme) for p, pr in zip(ends, probes)])
    orp = np.array([[o[1], o[2]] for o in (orp_rates(p, pr, scheme)
                                           for p, pr in zip(ends, probes))])
    return rates, ends, orp


def peak_and_fwhm(x, y):
    """Peak position (parabolic refinement) and full width at half maximum by interpolation."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    i = int(np.argmax(y))
    peak = x[i]
    if 0 < i < len(x) - 1:
        y0, y1, y2 = y[i - 1], y[i], y[i + 1]
        denom = y0 - 2 * y1 + y2
        if denom != 0:
            peak = x[i] + 0.5 * (y0 - y2) / denom * (x[i + 1] - x[i])
    half = y[i] / 2
    left = np.nonzero(y[:i] < half)[0]
    right = np.nonzero(y[i:] < half)[0]
    if not left.size or not right.size:
        return float(peak), float("nan")
    a = left[-1]
    b = i + right[0]
    x_lo = np.interp(half, [y[a], y[a + 1]], [x[a], x[a + 1]])
    x_hi = np.interp(half, [y[b], y[b - 1]], [x[b], x[b - 1]])
    return float(peak), float(x_hi - x_lo)
