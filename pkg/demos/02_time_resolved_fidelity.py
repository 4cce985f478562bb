# %% [markdown]
# # Choosing when to stop counting
#
# Every photon arrival is time tagged, so the same trials can be classified
# at any moment of the readout. Early on there are too few photons to call
# the atom bright; late in the window the bright atom may already have
# leaked and background keeps adding false bright calls for the dark atom.
# The best stopping time sits in between.

# %%
import numpy as np

from atomreadout.analysis import (error_curves_from_stream, histogram_at,
                                  optimal_operating_point, retention_rate)
from atomreadout.counting import BrightModel, model_fidelity, peak_fidelity
from atomreadout.simulation import SimConfig, simulate_dataset

model = BrightModel.from_detected(39.4e3, 0.7e3, 1.31e3, eta=0.0096)
config = SimConfig(model, dark_background=700.0, seed=2019)
trials = simulate_dataset(config)
print(f"{len(trials)} trials simulated")

# %% [markdown]
# Classify each trial every microsecond with thresholds of one, two and
# three photons, keeping only trials in which the atom was still trapped
# after the readout.

# %%
curve = error_curves_from_stream(trials)
for k in curve.thresholds:
    i = curve.row(k)
    j = int(np.argmax(curve.fidelity[i]))
    print(f"n_thresh={k}: best fidelity {curve.fidelity[i, j]:.4f} "
          f"[{curve.ci_low[i, j]:.4f}, {curve.ci_high[i, j]:.4f}] at {curve.times[j]:.0f} us")
best = optimal_operating_point(curve)
print(f"operating point: {best.n_thresh} photons at {best.time:.0f} us")

# %% [markdown]
# The analytic model gives the same curves without sampling noise.

# %%
for k in (1, 2, 3):
    t_peak, f = peak_fidelity(k, model, 700.0, 400e-6)
    print(f"model, n_thresh={k}: {f:.4f} at {t_peak * 1e6:.0f} us")
times = curve.times
gap = np.abs(curve.fidelity[curve.row(2)] - model_fidelity(times * 1e-6, 2, model, 700.0))
print(f"largest simulated-vs-model gap for two photons: {gap.max():.4f}")

# %% [markdown]
# Histogram at the end of the window and the retention rate.

# %%
h = histogram_at(trials, 200.0)
for n in range(12):
    print(f"{n:2d} photons: bright {h.counts_bright[n]:4d}   dark {h.counts_dark[n]:4d}")
p, (lo, hi) = retention_rate(trials)
print(f"retention {p:.4f} [{lo:.4f}, {hi:.4f}]")
