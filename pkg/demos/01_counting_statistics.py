# %% [markdown]
# # Photon counts from an atom that can go dark
#
# A bright atom scatters photons at a steady rate until, at a random
# moment, it leaks into a state that no longer fluoresces. After that only
# background light reaches the detector. This script looks at what that
# does to the photon-count distribution of a 200 us readout window.

# %%
import numpy as np

from atomreadout.counting import (BrightModel, RateSet, p_bright_closed, p_no_transition,
                                  total_pmf)

eta = 0.0096
model = BrightModel.from_detected(eta_r0=39.4e3, r_bg=1.05e3, r_loss=1.31e3, eta=eta)
t = 200e-6

# %% [markdown]
# Without leakage the count would be Poisson with mean `(eta*r0 + r_bg) t`.
# With leakage, the trials in which the atom went dark early pile up at
# small counts, giving a long low-count shoulder.

# %%
n = np.arange(0, 25)
leaky = np.array([p_bright_closed(k, t, model) for k in n])
mean = (model.eta_r0 + model.r_bg) * t
poisson = np.array([p_no_transition(k, t, model.eta_r0 + model.r_bg) for k in n])
print(" n   leaky     no-leak")
for k in n:
    print(f"{k:2d}  {leaky[k]:.5f}   {poisson[k]:.5f}")
print(f"P(0 photons): {leaky[0]:.4f} with leakage, {poisson[0]:.2e} without")

# %% [markdown]
# The closed form and the direct integral over the jump time agree to
# rounding error, which is a useful check whenever the rates change.

# %%
pmf = total_pmf(t, model.rates())
closed = np.array([p_bright_closed(k, t, model) for k in range(pmf.n_max + 1)])
print(f"largest difference: {np.max(np.abs(pmf.probabilities - closed)):.2e}")
print(f"normalisation: {pmf.total():.15f}, mean count {pmf.mean():.3f} (no leak {mean:.3f})")

# %% [markdown]
# A general emitter can also jump between two bright rates. Halving the
# rate instead of switching it off leaves a bimodal mixture.

# %%
halving = total_pmf(t, RateSet(40e3, 20e3, 5e3))
peak = int(np.argmax(halving.probabilities))
print(f"most likely count when the rate halves: {peak}")
