# %% [markdown]
# # Where the trapped atom fluoresces, and where it gets pumped dark
#
# The trap light shifts the ground level down and each excited F'=3
# sublevel up by a different amount, so the pi-polarized probe sees a
# spread of resonances. Rate equations over the eight ground sublevels,
# with the excited states eliminated, give the fluorescence spectrum and
# how much population ends up in the dark F=1 level after a 200 us pulse.

# %%
import numpy as np

from atomreadout.atomic import (GROUND, LevelScheme, Manifold, ProbeSpec, Sublevel,
                                peak_and_fwhm, spectrum_scan)
from atomreadout.atomic.levels import relative_strength

scheme = LevelScheme.from_constants()
probe = ProbeSpec(detuning_from_untrapped=0.0, saturation_parameter=3.0)

# %% [markdown]
# Relative line strengths out of F=2 for pi light. The |2,0> -> F'=2 line
# is missing entirely.

# %%
for m in range(-2, 3):
    g = Sublevel(Manifold.GROUND_F2, m)
    row = [f"F'={fp} {relative_strength(g, Sublevel(getattr(Manifold, f'EXCITED_F{fp}'), m), 0):.3f}"
           for fp in (1, 2, 3) if abs(m) <= fp]
    print(f"m={m:+d}: " + "  ".join(row))

# %%
detunings = np.linspace(20.0, 80.0, 100)
rates, pops, orp = spectrum_scan(detunings, probe, scheme)
peak, fwhm = peak_and_fwhm(detunings, rates)
f1 = pops[:, :3].sum(axis=1)
print(f"fluorescence peak at +{peak:.1f} MHz with FWHM {fwhm:.1f} MHz")
print(f"F=1 population largest at +{detunings[np.argmax(f1)]:.1f} MHz")
print(f"pumping through F'=2 exceeds F'=1 at every point: {bool(np.all(orp[:, 1] > orp[:, 0]))}")

# %% [markdown]
# Below the shifted resonance the protected |2,0> sublevel holds most of
# the population; above it the outer sublevels fill up and leak to F=1.

# %%
index = {g: i for i, g in enumerate(GROUND)}
for d in (36.0, 46.0, 56.0):
    j = int(np.argmin(np.abs(detunings - d)))
    share = {m: pops[j, index[Sublevel(Manifold.GROUND_F2, m)]] for m in range(-2, 3)}
    print(f"+{detunings[j]:.0f} MHz: " + " ".join(f"m={m:+d} {p:.3f}" for m, p in share.items())
          + f"  F=1 {f1[j]:.3f}")
