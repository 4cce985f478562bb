"""Rate-equation model of the 87Rb D2 line under a light-shifting trap."""
from .angular import wigner_3j, wigner_3j_squared, wigner_6j, wigner_6j_squared
from .levels import (EXCITED, GROUND, LevelScheme, Manifold, ProbeSpec, Sublevel,
                     branching_ratios, relative_strength)
from .rates import (PopulationVector, evolve_populations, excitation_rate,
                    fluorescence_spectrum, orp_rates, peak_and_fwhm, population_spectrum,
                    shifted_detuning, spectrum_scan)
