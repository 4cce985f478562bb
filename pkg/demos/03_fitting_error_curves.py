# %% [markdown]
# # Reading the leakage rate off a bright-error curve
#
# The fraction of bright atoms still below threshold falls quickly at first,
# at a pace set by the detected scattering rate, and then levels off at a
# plateau set by how often the atom goes dark. Fitting the curve separates
# the two rates. We simulate three probe settings and rank them by
# `eta*r0 / r_loss`, the number of photons collected per leakage event.

# %%
import numpy as np

from atomreadout.analysis import bright_error_curve
from atomreadout.counting import BrightModel
from atomreadout.fitting import confidence_band, fit_bright_error, fit_report
from atomreadout.simulation import SimConfig, simulate_dataset

settings = {"+40 MHz": (1.05, 39.4, 1.31), "+46 MHz": (1.13, 58.7, 4.1),
            "+52 MHz": (1.12, 33.6, 3.63)}
times = np.arange(1.0, 201.0)

# %%
fits = []
for i, (label, (r_bg, eta_r0, r_loss)) in enumerate(settings.items()):
    model = BrightModel.from_detected(eta_r0 * 1e3, r_bg * 1e3, r_loss * 1e3, eta=0.0096)
    cfg = SimConfig(model, 0.0, 200.0, 3583, 0, 1.0, seed=30 + i)
    eps, n = bright_error_curve(simulate_dataset(cfg), 1, times)
    fit = fit_bright_error(times, eps, n, r_bg)
    fits.append(fit)
    print(f"{label}: fitted {fit.eta_r0:.1f} +- {fit.eta_r0_se:.1f} and "
          f"{fit.r_loss:.2f} +- {fit.r_loss_se:.2f} kcps (true {eta_r0}, {r_loss})")

print()
print(fit_report(fits, list(settings)).format())

# %% [markdown]
# A 95% band around the fitted curve, drawn from the parameter covariance.

# %%
band = confidence_band(fits[0], times)
for t in (10, 50, 100, 200):
    j = t - 1
    print(f"{t:3d} us: {band.centre[j]:.4f} in [{band.low[j]:.4f}, {band.high[j]:.4f}]")
