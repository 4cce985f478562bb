"""Fitting the detected bright rate and the leakage rate to bright-error curves.

Rates handled here are in kcps and times in µs, the units of the
measured curves. The background rate and the detection efficiency are
fixed inputs; only ``eta*r0`` and ``r_loss`` are free.

The objective is weighted least squares on the error curve with weights
``1 / (p(1-p)/N + 1e-9)``. Weights are frozen at the previous model
prediction and refreshed a few times (iteratively reweighted), so each
stage is an ordinary weighted fit. Minimisation is Nelder-Mead in
log-parameters with restarts until the objective stops improving.

Bins of a cumulative error curve share trials, so the default standard
errors use a sandwich estimator with the exact binomial covariance of the
curve, ``Cov(e_i, e_j) = p(t_late) (1 - p(t_early)) / N``. A parametric
bootstrap over resimulated datasets is available as well.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .analysis import bright_error_curve
from .counting import BrightModel, bright_error
from .exceptions import DomainError, FitError
from .simulation import SimConfig, simulate_dataset

#: detection efficiency of the reference apparatus (0.96%)
DEFAULT_ETA = 0.0096
WEIGHT_FLOOR = 1e-9
MIN_BINS = 10
MAX_RESTARTS = 8
REWEIGHT_STAGES = 3


def _model(theta, r_bg, eta):
    return BrightModel.from_detected(theta[0] * 1e3, r_bg * 1e3, theta[1] * 1e3, eta=eta)


def model_curve(times, eta_r0, r_loss, r_bg, n_thresh, eta=DEFAULT_ETA):
    """Bright error at ``times`` (µs) for rates in kcps."""
    t = np.asarray(times, dtype=float) * 1e-6
    return bright_error(t, n_thresh, _model((eta_r0, r_loss), r_bg, eta))


def binomial_weights(p, n_trials):
    return 1.0 / (p * (1 - p) / n_trials + WEIGHT_FLOOR)


def curve_covariance(p, n_trials):
    """Covariance of a cumulative bright-error curve with values ``p`` at increasing times."""
    p = np.asarray(p, dtype=float)
    i = np.arange(p.size)
    late = np.maximum.outer(i, i)
    early = np.minimum.outer(i, i)
    return p[late] * (1 - p[early]) / n_trials


class BandTable(NamedTuple):
    times: np.ndarray
    centre: np.ndarray
    low: np.ndarray
    high: np.ndarray
    method: str


@dataclass
class FitResult:
    """Estimated ``eta*r0`` and ``r_loss`` (kcps) with their uncertainties."""

    eta_r0: float
    eta_r0_se: float
    r_loss: float
    r_loss_se: float
    r_bg: float
    eta: float = DEFAULT_ETA
    n_thresh: int = 1
    covariance: np.ndarray = None
    objective_value: float = float("nan")
    initial_objective: float = float("nan")
    n_trials: int = 0
    se_method: str = "given"
    times: np.ndarray = field(default=None, repr=False)
    data: np.ndarray = field(default=None, repr=False)
    weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.covariance is None:
            self.covariance = np.diag([self.eta_r0_se**2, self.r_loss_se**2])
        self.covariance = np.asarray(self.covariance, dtype=float)

    @property
    def ratio(self):
        return self.eta_r0 / self.r_loss

    @property
    def params(self):
        return np.array([self.eta_r0, self.r_loss])

    def bright_model(self):
        """The fitted rates as a :class:`BrightModel` in 1/s."""
        return _model(self.params, self.r_bg, self.eta)

    def curve(self, times):
        return model_curve(times, self.eta_r0, self.r_loss, self.r_bg, self.n_thresh, self.eta)

    def band_evaluator(self, times, level=0.95, seed=0):
        band = confidence_band(self, times, level=level, seed=seed)
        return band.low, band.high


def _objective(theta_log, times, data, weights, r_bg, n_thresh, eta):
    theta = np.exp(theta_log)
    resid = data - model_curve(times, theta[0], theta[1], r_bg, n_thresh, eta)
    return float(np.sum(weights * resid**2))


def initial_guess(times, eps, r_bg, n_thresh):
    """Rough ``(eta_r0, r_loss)`` in kcps from the shape of the curve.

    The early decay of ``-log(eps)`` sets the bright rate and the late
    plateau, roughly ``n_thresh * r_loss / eta_r0``, sets the leakage.
    """
    t = np.asarray(times, dtype=float)
    eps = np.asarray(eps, dtype=float)
    span = t[-1] - t[0] if t.size > 1 else t[-1]
    early = (eps > 0.2) & (eps < 0.95)
    if early.sum() >= 2:
        slope = -np.polyfit(t[early], np.log(eps[early]), 1)[0] * 1e3
    else:
        below = np.nonzero(eps < 0.5)[0]
        t_half = t[below[0]] if below.size else t[-1]
        slope = n_thresh * 0.7e3 / max(t_half, 1e-3)
    eta_r0 = max(slope * n_thresh - r_bg, 10e3 / max(span, 1e-3) * 1e-3, 1e-3)
    late = eps[t >= t[0] + 0.8 * span]
    plateau = max(float(np.mean(late)) if late.size else float(eps[-1]), 1e-4)
    r_loss = max(eta_r0 * min(plateau, 0.5) / n_thresh, 1e-3 * eta_r0)
    return eta_r0, r_loss


def _minimise(x0, args):
    res = optimize.minimize(_objective, x0, args=args, method="Nelder-Mead",
                            options={"xatol": 1e-11, "fatol": 1e-11, "maxiter": 4000})
    best_x, best_f = res.x, res.fun
    for _ in range(MAX_RESTARTS):
        res = optimize.minimize(_objective, best_x, args=args, method="Nelder-Mead",
                                options={"xatol": 1e-11, "fatol": 1e-11, "maxiter": 4000,
                                         "initial_simplex": best_x + np.array(
                                             [[0, 0], [0.05, 0], [0, 0.05]])})
        if not res.fun < best_f - 1e-12 * max(best_f, 1.0):
            if res.fun < best_f:
                best_x, best_f = res.x, res.fun
            break
        best_x, best_f = res.x, res.fun
    else:
        raise FitError("objective still improving after restart cap", best=np.exp(best_x))
    if not np.all(np.isfinite(best_x)):
        raise FitError("optimizer left the finite parameter range", best=np.exp(best_x))
    return best_x, best_f


def _jacobian(theta, times, r_bg, n_thresh, eta):
    cols = []
    for j in range(2):
        h = 1e-5 * theta[j]
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        cols.append((model_curve(times, *up, r_bg, n_thresh, eta)
                     - model_curve(times, *dn, r_bg, n_thresh, eta)) / (2 * h))
    return np.column_stack(cols)


def sandwich_covariance(theta, times, weights, n_trials, r_bg, n_thresh, eta):
    """Parameter covariance of the weighted fit under correlated cumulative bins."""
    jac = _jacobian(np.asarray(theta, dtype=float), times, r_bg, n_thresh, eta)
    p = model_curve(times, *theta, r_bg, n_thresh, eta)
    wj = jac * weights[:, None]
    bread = np.linalg.pinv(jac.T @ wj)
    meat = wj.T @ curve_covariance(p, n_trials) @ wj
    cov = bread @ meat @ bread
    return (cov + cov.T) / 2


def fit_bright_error(times, eps, n_trials, r_bg, n_thresh=1, eta=DEFAULT_ETA,
                     initial=None, se_method="sandwich", n_boot=100, seed=0, workers=1):
    """Fit ``eta*r0`` and ``r_loss`` (kcps) to an empirical bright-error curve.

    ``times`` are bin edges in µs, ``eps`` the error fractions from
    ``n_trials`` bright trials, ``r_bg`` the measured background in kcps.
    ``se_method`` is ``"sandwich"`` or ``"bootstrap"``.
    """
    times = np.asarray(times, dtype=float)
    eps = np.asarray(eps, dtype=float)
    usable = np.isfinite(eps) & (times > 0)
    times, eps = times[usable], eps[usable]
    if times.size < MIN_BINS:
        raise DomainError(f"need at least {MIN_BINS} usable bins, got {times.size}")
    if n_trials <= 0:
        raise DomainError("n_trials must be positive")
    if se_method not in ("sandwich", "bootstrap"):
        raise DomainError(f"unknown se_method {se_method!r}")
    x_init = np.log(initial if initial is not None else initial_guess(times, eps, r_bg, n_thresh))
    # first-stage weights from the data, kept away from 0 and 1
    half = 0.5 / n_trials
    weights = binomial_weights(np.clip(eps, half, 1 - half), n_trials)
    x = x_init
    for stage in range(REWEIGHT_STAGES + 1):
        if stage:
            weights = binomial_weights(
                model_curve(times, *np.exp(x), r_bg, n_thresh, eta), n_trials)
        args = (times, eps, weights, r_bg, n_thresh, eta)
        x, f = _minimise(x, args)
    theta = np.exp(x)
    f_initial = _objective(x_init, *args)
    cov = sandwich_covariance(theta, times, weights, n_trials, r_bg, n_thresh, eta)
    result = FitResult(theta[0], float(np.sqrt(max(cov[0, 0], 0))), theta[1],
                       float(np.sqrt(max(cov[1, 1], 0))), r_bg, eta, n_thresh, cov, f,
                       f_initial, int(n_trials), "sandwich", times, eps, weights)
    if se_method == "bootstrap":
        cov = bootstrap_covariance(result, n_boot=n_boot, seed=seed, workers=workers)
        result.covariance = cov
        result.eta_r0_se = float(np.sqrt(cov[0, 0]))
        result.r_loss_se = float(np.sqrt(cov[1, 1]))
        result.se_method = "bootstrap"
    return result


def _bootstrap_replicate(fit, replicate, seed):
    model = fit.bright_model()
    horizon = float(np.max(fit.times))
    cfg = SimConfig(model, 0.0, horizon, fit.n_trials, 0, 1.0,
                    seed=(seed * 1_000_003 + replicate) % 2**64)
    eps, n = bright_error_curve(simulate_dataset(cfg), fit.n_thresh, fit.times)
    refit = fit_bright_error(fit.times, eps, n, fit.r_bg, fit.n_thresh, fit.eta,
                             initial=fit.params)
    return refit.params


def bootstrap_covariance(fit, n_boot=100, seed=0, workers=1):
    """Covariance of refitted parameters over datasets resimulated from ``fit``."""
    reps = range(n_boot)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            draws = list(pool.map(_bootstrap_replicate, [fit] * n_boot, reps, [seed] * n_boot))
    else:
        draws = [_bootstrap_replicate(fit, r, seed) for r in reps]
    return np.cov(np.asarray(draws).T)


def _covariance_ok(cov):
    if cov is None or not np.all(np.isfinite(cov)):
        return False
    scale = max(float(np.max(np.abs(np.diag(cov)))), 1e-300)
    return bool(np.min(np.linalg.eigvalsh((cov + cov.T) / 2)) >= -1e-12 * scale)


def confidence_band(fit, times, level=0.95, n_samples=2000, seed=0):
    """Pointwise band for the fitted bright-error curve.

    Parameters are drawn from the fitted Gaussian, non-positive draws are
    redrawn, and the curve quantiles give the band. If the covariance is
    unusable and the fit carries its data, residuals are resampled and the
    curve refitted instead (``method == "residual-bootstrap"``).
    """
    times = np.asarray(times, dtype=float)
    rng = np.random.default_rng(seed)
    centre = fit.curve(times)
    q = [(1 - level) / 2 * 100, (1 + level) / 2 * 100]
    if _covariance_ok(fit.covariance):
        draws = _positive_gaussian(fit.params, fit.covariance, n_samples, rng)
        curves = np.array([model_curve(times, a, l, fit.r_bg, fit.n_thresh, fit.eta)
                           for a, l in draws])
        low, high = np.percentile(curves, q, axis=0)
        return BandTable(times, centre, np.minimum(low, centre), np.maximum(high, centre),
                         "parametric")
    if fit.data is None:
        raise FitError("covariance is degenerate and the fit carries no data to resample")
    resid = fit.data - fit.curve(fit.times)
    base = fit.curve(fit.times)
    curves = []
    for _ in range(min(n_samples, 200)):
        pseudo = np.clip(base + rng.choice(resid, resid.size, replace=True), 0, 1)
        refit = fit_bright_error(fit.times, pseudo, fit.n_trials, fit.r_bg, fit.n_thresh,
                                 fit.eta, initial=fit.params)
        curves.append(refit.curve(times))
    low, high = np.percentile(np.array(curves), q, axis=0)
    return BandTable(times, centre, np.minimum(low, centre), np.maximum(high, centre),
                     "residual-bootstrap")


def _positive_gaussian(mean, cov, n, rng):
    out = np.empty((0, 2))
    for _ in range(100):
        draws = rng.multivariate_normal(mean, cov, size=n, method="eigh")
        out = np.vstack([out, draws[np.all(draws > 0, axis=1)]])
        if len(out) >= n:
            return out[:n]
    raise FitError("could not draw positive parameters from the fitted covariance")


@dataclass
class FitReport:
    rows: list
    best: list

    def format(self):
        head = (f"{'label':<10} {'R_bg (kcps)':>12} {'etaR0 (kcps)':>16} "
                f"{'R_l (kcps)':>14} {'etaR0/R_l':>10}")
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(f"{r['label']:<10} {r['r_bg']:>12.2f} "
                         f"{r['eta_r0']:>8.2f} ± {r['eta_r0_se']:<5.2f} "
                         f"{r['r_loss']:>6.2f} ± {r['r_loss_se']:<5.2f} {r['ratio']:>10.2f}")
        lines.append(f"largest ratio: {', '.join(self.best)}")
        return "\n".join(lines)


def fit_report(fits, labels):
    """Table of fitted rates and ``eta*r0 / r_loss`` with the label(s) of the largest ratio."""
    fits, labels = list(fits), list(labels)
    if not fits:
        raise DomainError("fit_report needs at least one fit")
    if len(fits) != len(labels):
        raise DomainError("one label per fit")
    rows = [dict(label=lab, r_bg=f.r_bg, eta_r0=f.eta_r0, eta_r0_se=f.eta_r0_se,
                 r_loss=f.r_loss, r_loss_se=f.r_loss_se, ratio=f.ratio)
            for f, lab in zip(fits, labels)]
    top = max(r["ratio"] for r in rows)
    return FitReport(rows, [r["label"] for r in rows if r["ratio"] == top])
