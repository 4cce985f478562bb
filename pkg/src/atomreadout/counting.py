"""Photon-count distributions for an emitter with one-way leakage.

An emitter starts in an initial state scattering detected photons at rate
``r_initial``. At a random time drawn from an exponential law with rate
``r_loss`` it jumps irreversibly to a final state with rate ``r_final``.
The functions below give the probability of detecting ``n`` photons in a
window of length ``t`` (seconds; rates in counts/s), the bright-state
specialisation where the final state only sees background, and the
threshold error/fidelity figures built on top of them.

The Poisson pmf is written ``p_no_transition(n, t, r)``: the product ``r*t``
is the mean, so the two-argument form ``P(n; r*t)`` used elsewhere for the
same quantity is identical.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special, stats

from .exceptions import DegenerateParameterError, DomainError, QuadratureError

#: relative tolerance of the transition-time quadrature
QUAD_RTOL = 1e-10
#: Poisson tail bound used to truncate count distributions
TAIL_TOL = 1e-12


def _check_nonneg(**values):
    for name, value in values.items():
        if not np.all(np.isfinite(value)) or np.any(np.asarray(value) < 0):
            raise DomainError(f"{name} must be finite and non-negative, got {value!r}")


def _check_count(n, name="n"):
    if isinstance(n, bool) or int(n) != n or n < 0:
        raise DomainError(f"{name} must be a non-negative integer, got {n!r}")
    return int(n)


@dataclass(frozen=True)
class RateSet:
    """Initial rate, final rate and transition rate (all in 1/s)."""

    r_initial: float
    r_final: float
    r_loss: float

    def __post_init__(self):
        _check_nonneg(r_initial=self.r_initial, r_final=self.r_final, r_loss=self.r_loss)


@dataclass(frozen=True)
class BrightModel:
    """Rates of a bright-state readout.

    ``eta`` is the detection efficiency, ``r0`` the atomic scattering rate,
    ``r_bg`` the background count rate and ``r_loss`` the leakage rate into
    the dark state. Rates are in 1/s.
    """

    eta: float
    r0: float
    r_bg: float
    r_loss: float

    def __post_init__(self):
        _check_nonneg(r0=self.r0, r_bg=self.r_bg, r_loss=self.r_loss)
        if not (0 < self.eta <= 1):
            raise DomainError(f"eta must lie in (0, 1], got {self.eta!r}")

    @classmethod
    def from_detected(cls, eta_r0, r_bg, r_loss, eta=1.0):
        """Build a model from the detected bright rate ``eta * r0``."""
        return cls(eta=eta, r0=eta_r0 / eta, r_bg=r_bg, r_loss=r_loss)

    @property
    def eta_r0(self):
        return self.eta * self.r0

    def rates(self):
        """The equivalent :class:`RateSet`: bright+background, then background only."""
        return RateSet(self.eta_r0 + self.r_bg, self.r_bg, self.r_loss)


@dataclass(frozen=True)
class CountPMF:
    """Probabilities for ``n = 0..n_max`` photons in a window of ``duration`` s."""

    probabilities: np.ndarray
    duration: float
    tail_tol: float = TAIL_TOL

    @property
    def n_max(self):
        return len(self.probabilities) - 1

    def total(self):
        return math.fsum(self.probabilities)

    def mean(self):
        return float(np.dot(np.arange(self.n_max + 1), self.probabilities))


def _log_poisson(n, mu):
    return special.xlogy(n, mu) - mu - special.gammaln(n + 1)


def neumaier_sum(terms, axis=0):
    """Compensated (Neumaier) summation of ``terms`` along ``axis``."""
    terms = np.moveaxis(np.asarray(terms, dtype=float), axis, 0)
    total = np.zeros(terms.shape[1:])
    comp = np.zeros(terms.shape[1:])
    for term in terms:
        s = total + term
        big = np.abs(total) >= np.abs(term)
        comp += np.where(big, (total - s) + term, (term - s) + total)
        total = s
    return total + comp


def truncation_n_max(mean, tol=TAIL_TOL):
    """Smallest ``n`` with ``P(N > n) < tol`` for ``N ~ Poisson(mean)``."""
    if mean <= 0:
        return 0
    n = int(stats.poisson.isf(tol, mean))
    while n > 0 and stats.poisson.sf(n - 1, mean) < tol:
        n -= 1
    while stats.poisson.sf(n, mean) >= tol:
        n += 1
    return n


def p_no_transition(n, t, r):
    """Poisson probability of ``n`` counts in time ``t`` at rate ``r``."""
    n = _check_count(n)
    _check_nonneg(t=t, r=r)
    return float(np.exp(_log_poisson(n, r * t)))


def _transition_integrand(n, t, rates):
    ri, rf, rl = rates.r_initial, rates.r_final, rates.r_loss
    k = np.arange(n + 1)
    const = (math.log(rl) - rf * t - special.gammaln(k + 1)
             - special.gammaln(n - k + 1))

    def f(u):
        # u = tau / t, integrand already multiplied by dtau/du = t
        tau = u * t
        log_terms = (const + special.xlogy(k, ri * tau)
                     + special.xlogy(n - k, rf * (t - tau))
                     - (ri - rf + rl) * tau)
        return t * math.exp(special.logsumexp(log_terms))

    return f


def p_with_transition(n, t, rates):
    """Probability of ``n`` counts with a transition somewhere in ``[0, t]``.

    The sum over how many photons came before the jump is carried inside
    the integrand; the jump time is integrated by adaptive Gauss-Kronrod
    quadrature to relative tolerance :data:`QUAD_RTOL`.
    """
    n = _check_count(n)
    _check_nonneg(t=t)
    if rates.r_loss == 0 or t == 0:
        return 0.0
    f = _transition_integrand(n, t, rates)
    points = None
    slope = rates.r_initial - rates.r_final
    if slope != 0:
        # the integrand peaks where the expected count equals n
        u_peak = (n - rates.r_final * t) / (slope * t)
        if 0 < u_peak < 1:
            points = [u_peak]
    value, abserr, info = integrate.quad(
        f, 0.0, 1.0, epsabs=0.0, epsrel=QUAD_RTOL, limit=500, points=points,
        full_output=1)[:3]
    if not abserr <= max(QUAD_RTOL * abs(value), 1e-300):
        raise QuadratureError(
            f"quadrature for n={n} reached only {abserr:.3g} absolute error",
            value=value, achieved=abserr)
    return min(max(value, 0.0), 1.0)


def p_total(n, t, rates):
    """Probability of ``n`` counts in time ``t``: no-jump plus jump terms."""
    n = _check_count(n)
    _check_nonneg(t=t)
    stay = math.exp(-rates.r_loss * t) * p_no_transition(n, t, rates.r_initial)
    return stay + p_with_transition(n, t, rates)


def transition_pmf(t, rates, n_max):
    """Vector of :func:`p_with_transition` for ``n = 0..n_max``.

    Poisson counts from the two segments add, so the inner sum over the
    photon split collapses to one Poisson pmf of the combined mean; this
    makes long windows (thousands of counts) affordable.
    """
    _check_nonneg(t=t)
    n_max = _check_count(n_max, "n_max")
    if rates.r_loss == 0 or t == 0:
        return np.zeros(n_max + 1)
    n = np.arange(n_max + 1)
    ri, rf, rl = rates.r_initial, rates.r_final, rates.r_loss

    def f(u):
        mu = (ri * u + rf * (1 - u)) * t
        return rl * t * np.exp(-rl * t * u + _log_poisson(n, mu))

    value, abserr = integrate.quad_vec(f, 0.0, 1.0, epsabs=1e-300, epsrel=QUAD_RTOL,
                                       norm="max", limit=2000)
    if abserr > max(QUAD_RTOL * np.max(value), 1e-300):
        raise QuadratureError(f"vector quadrature reached only {abserr:.3g}",
                              value=value, achieved=abserr)
    return np.clip(value, 0.0, 1.0)


def total_pmf(t, rates, n_max=None):
    """Full count distribution as a :class:`CountPMF`, truncated adaptively."""
    _check_nonneg(t=t)
    if n_max is None:
        n_max = truncation_n_max(max(rates.r_initial, rates.r_final) * t)
    n = np.arange(n_max + 1)
    stay = np.exp(-rates.r_loss * t + _log_poisson(n, rates.r_initial * t))
    probs = stay + transition_pmf(t, rates, n_max)
    # for means in the thousands the rounding of exp(log pmf) can push the sum a
    # few 1e-12 above one; scale that excess away so the total never exceeds 1
    total = math.fsum(probs)
    while total > 1.0:
        probs = probs * (1.0 / total) * (1 - 2**-52)
        total = math.fsum(probs)
    return CountPMF(probs, duration=t)


def p_bright_closed(n, t, model):
    """Closed-form count probability for a bright-prepared atom.

    ``t`` may be an array; the result then has the same shape. Terms are
    built in log space and added with compensated summation.
    """
    n = _check_count(n)
    t = np.asarray(t, dtype=float)
    _check_nonneg(t=t)
    a, b, loss = model.eta_r0, model.r_bg, model.r_loss
    if n >= 1 and a + b == 0:
        raise DegenerateParameterError("eta*r0 + r_bg must be positive for n >= 1")
    if loss == 0:
        return np.exp(_log_poisson(n, (a + b) * t))
    if a + loss == 0:
        raise DegenerateParameterError("eta*r0 + r_loss must be positive")

    k = np.arange(n + 1)[:, None]
    tt = t[None, ...] if t.ndim else t.reshape(1)[None, :]
    weight = math.log(loss) - math.log(a + loss)
    split = special.xlogy(n - k, a) - special.xlogy(n - k, a + loss) - special.gammaln(k + 1)
    kept = _log_poisson(n, (a + b) * tt) - loss * tt
    before = weight - b * tt + split + special.xlogy(k, b * tt)
    after = weight - (a + b + loss) * tt + split + special.xlogy(k, (a + b) * tt)
    terms = np.concatenate([np.exp(kept), np.exp(before), -np.exp(after)], axis=0)
    out = np.clip(neumaier_sum(terms), 0.0, 1.0)
    return out.reshape(t.shape) if t.ndim else float(out[0])


def bright_error(t, n_thresh, model):
    """Probability that a bright atom yields fewer than ``n_thresh`` counts by ``t``."""
    n_thresh = _check_count(n_thresh, "n_thresh")
    if n_thresh == 0:
        raise DomainError("n_thresh must be >= 1; a zero threshold calls every trial bright")
    parts = [np.asarray(p_bright_closed(k, t, model)) for k in range(n_thresh)]
    out = np.clip(neumaier_sum(np.stack(parts)), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def dark_error(t, n_thresh, r_bg):
    """Probability that background alone reaches ``n_thresh`` counts by ``t``."""
    n_thresh = _check_count(n_thresh, "n_thresh")
    if n_thresh == 0:
        raise DomainError("n_thresh must be >= 1")
    t = np.asarray(t, dtype=float)
    _check_nonneg(t=t, r_bg=r_bg)
    out = special.gammainc(n_thresh, r_bg * t)
    return float(out) if out.ndim == 0 else out


def model_fidelity(t, n_thresh, model, r_bg_dark):
    """``1 - (bright_error + dark_error) / 2``."""
    return 1.0 - (bright_error(t, n_thresh, model) + dark_error(t, n_thresh, r_bg_dark)) / 2


def peak_fidelity(n_thresh, model, r_bg_dark, t_max, n_grid=2001):
    """Maximise :func:`model_fidelity` over ``[0, t_max]``.

    A dense grid locates the peak, a bounded scalar search polishes it.
    Returns ``(t_peak, fidelity)``.
    """
    grid = np.linspace(0.0, t_max, n_grid)
    fid = model_fidelity(grid, n_thresh, model, r_bg_dark)
    i = int(np.argmax(fid))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda x: -model_fidelity(x, n_thresh, model, r_bg_dark),
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        if -res.fun >= fid[i]:
            return float(res.x), float(-res.fun)
    return float(grid[i]), float(fid[i])
