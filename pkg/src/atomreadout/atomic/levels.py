"""Sublevels of the 87Rb D2 manifold, trap light shifts and transition strengths.

Frequencies are in MHz. The reference is the untrapped ``F=2 -> F'=3``
resonance: ground ``F=2`` sits at 0 and excited ``F'=3`` at 0 before light
shifts. Polarization index ``q`` follows ``m' = m + q``.
"""
import enum
import os
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

from ..config import load_keyvalue
from ..exceptions import ConfigError, DomainError
from .angular import line_strength

J_GROUND = Fraction(1, 2)
J_EXCITED = Fraction(3, 2)
NUCLEAR_SPIN = Fraction(3, 2)

CONSTANTS_ENV = "ATOMREADOUT_CONSTANTS"
DEFAULT_CONSTANTS = Path(__file__).with_name("rb87_d2.conf")


class Manifold(enum.Enum):
    GROUND_F1 = ("ground", 1)
    GROUND_F2 = ("ground", 2)
    EXCITED_F0 = ("excited", 0)
    EXCITED_F1 = ("excited", 1)
    EXCITED_F2 = ("excited", 2)
    EXCITED_F3 = ("excited", 3)

    @property
    def is_ground(self):
        return self.value[0] == "ground"

    @property
    def F(self):
        return self.value[1]


@dataclass(frozen=True)
class Sublevel:
    manifold: Manifold
    m: int
    F: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "F", self.manifold.F)
        if int(self.m) != self.m or abs(self.m) > self.F:
            raise DomainError(f"|m_F| = {abs(self.m)} exceeds F = {self.F}")

    @property
    def is_ground(self):
        return self.manifold.is_ground

    def __str__(self):
        prime = "" if self.is_ground else "'"
        return f"|F{prime}={self.F}, m={self.m:+d}>"


def sublevels(manifold):
    return [Sublevel(manifold, m) for m in range(-manifold.F, manifold.F + 1)]


GROUND = sublevels(Manifold.GROUND_F1) + sublevels(Manifold.GROUND_F2)
EXCITED = [s for mf in (Manifold.EXCITED_F0, Manifold.EXCITED_F1, Manifold.EXCITED_F2,
                        Manifold.EXCITED_F3) for s in sublevels(mf)]
GROUND_INDEX = {s: i for i, s in enumerate(GROUND)}


def _check_pair(ground, excited):
    if not ground.is_ground or excited.is_ground:
        raise DomainError(f"expected ground then excited sublevel, got {ground}, {excited}")


@lru_cache(maxsize=None)
def _strength_exact(F, m, Fp, mp, q):
    cycling = line_strength(J_GROUND, J_EXCITED, NUCLEAR_SPIN, 2, 2, 3, 3, 1)
    return line_strength(J_GROUND, J_EXCITED, NUCLEAR_SPIN, F, m, Fp, mp, q) / cycling


def relative_strength_exact(ground, excited, q):
    """Squared dipole element relative to ``|2,2> -> |3',3'>`` as a Fraction."""
    _check_pair(ground, excited)
    if q not in (-1, 0, 1):
        raise DomainError(f"polarization index must be -1, 0 or +1, got {q!r}")
    return _strength_exact(ground.F, ground.m, excited.F, excited.m, q)


def relative_strength(ground, excited, q):
    return float(relative_strength_exact(ground, excited, q))


@lru_cache(maxsize=None)
def _branching(excited):
    weights = {}
    for g in GROUND:
        q = excited.m - g.m
        if q in (-1, 0, 1):
            w = _strength_exact(g.F, g.m, excited.F, excited.m, q)
            if w:
                weights[g] = w
    total = sum(weights.values())
    return {g: w / total for g, w in weights.items()}


def branching_ratios_exact(excited):
    """Spontaneous decay probabilities of ``excited`` into each ground sublevel."""
    if excited.is_ground:
        raise DomainError(f"{excited} is not an excited sublevel")
    return dict(_branching(excited))


def branching_ratios(excited):
    return {g: float(w) for g, w in branching_ratios_exact(excited).items()}


def load_constants(path=None):
    """Read the constants file (``$ATOMREADOUT_CONSTANTS`` or the bundled one)."""
    path = path or os.environ.get(CONSTANTS_ENV) or DEFAULT_CONSTANTS
    values = load_keyvalue(path)
    required = ("natural_linewidth_mhz", "excited_splitting_f3_f2_mhz",
                "excited_splitting_f2_f1_mhz", "excited_splitting_f1_f0_mhz")
    missing = [k for k in required if k not in values]
    if missing:
        raise ConfigError(f"{path}: missing constants {', '.join(missing)}")
    stark = {}
    for key, value in values.items():
        if key.startswith("stark."):
            name = key[len("stark."):]
            try:
                fp, m, unit = name.split("_")
                stark[(int(fp[1:]), abs(int(m[1:])))] = float(value)
                assert fp[0] == "f" and m[0] == "m" and unit == "mhz"
            except (ValueError, AssertionError):
                raise ConfigError(f"{path}: bad Stark key {key!r}, expected stark.f<F>_m<|m|>_mhz")
        elif key not in required + ("version",):
            raise ConfigError(f"{path}: unknown key {key!r}")
    return {k: float(values[k]) for k in required}, stark


@dataclass(frozen=True)
class LevelScheme:
    """Light-shifted D2 level structure.

    ``delta_e`` maps ``|m|`` to the F'=3 light shift; ``stark_other`` maps
    ``(F', |m|)`` to the shift of the other excited levels.
    """

    delta_g: float = -27.0
    delta_e: tuple = (21.0, 19.0, 13.0, 3.0)
    ground_hyperfine_splitting: float = 6800.0
    excited_splittings: tuple = (266.650, 156.947, 72.218)
    natural_linewidth: float = 6.0666
    stark_other: tuple = ()

    def __post_init__(self):
        if len(self.delta_e) != 4:
            raise DomainError("delta_e needs the four shifts for |m| = 0..3")
        if self.natural_linewidth <= 0:
            raise DomainError("natural linewidth must be positive")
        object.__setattr__(self, "stark_other", tuple(sorted(dict(self.stark_other).items())))

    @classmethod
    def from_constants(cls, path=None, **overrides):
        consts, stark = load_constants(path)
        kw = dict(excited_splittings=(consts["excited_splitting_f3_f2_mhz"],
                                      consts["excited_splitting_f2_f1_mhz"],
                                      consts["excited_splitting_f1_f0_mhz"]),
                  natural_linewidth=consts["natural_linewidth_mhz"],
                  stark_other=tuple(stark.items()))
        kw.update(overrides)
        return cls(**kw)

    def manifold_offset(self, manifold):
        """Unshifted energy of a manifold in MHz."""
        s32, s21, s10 = self.excited_splittings
        return {Manifold.GROUND_F2: 0.0, Manifold.GROUND_F1: -self.ground_hyperfine_splitting,
                Manifold.EXCITED_F3: 0.0, Manifold.EXCITED_F2: -s32,
                Manifold.EXCITED_F1: -s32 - s21,
                Manifold.EXCITED_F0: -s32 - s21 - s10}[manifold]

    def light_shift(self, level):
        if level.is_ground:
            return self.delta_g
        if level.F == 3:
            return self.delta_e[abs(level.m)]
        return dict(self.stark_other).get((level.F, abs(level.m)), 0.0)

    def energy(self, level):
        return self.manifold_offset(level.manifold) + self.light_shift(level)

    def resonance(self, ground, excited):
        """Transition frequency relative to the untrapped F=2 -> F'=3 line."""
        return self.energy(excited) - self.energy(ground)


@dataclass(frozen=True)
class ProbeSpec:
    """π-polarized probe: detuning from the untrapped resonance (MHz) and saturation."""

    detuning_from_untrapped: float
    saturation_parameter: float = 3.0
    polarization: int = 0

    def __post_init__(self):
        if self.saturation_parameter < 0:
            raise DomainError("saturation parameter must be non-negative")
        if self.polarization != 0:
            raise DomainError("the readout probe is π-polarized (q = 0)")
