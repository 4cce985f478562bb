"""Exact Wigner 3-j and 6-j symbols and D-line transition strengths.

Angular momenta may be half-integers; internally everything is carried as
doubled integers so that the Racah sums run over exact integers and
:class:`fractions.Fraction`. The squared symbols are rational, which keeps
selection-rule zeros exactly zero.
"""
from fractions import Fraction
from functools import lru_cache
from math import factorial

from ..exceptions import DomainError


def _twice(j):
    two = 2 * Fraction(j).limit_denominator(2)
    if two.denominator != 1 or Fraction(j) * 2 != two:
        raise DomainError(f"{j!r} is not an integer or half-integer")
    return int(two)


def _triangle(a, b, c):
    # doubled arguments
    return (abs(a - b) <= c <= a + b) and (a + b + c) % 2 == 0


def _delta_sq(a, b, c):
    """Triangle coefficient for doubled arguments, as a Fraction."""
    return Fraction(factorial((a + b - c) // 2) * factorial((a - b + c) // 2)
                    * factorial((-a + b + c) // 2), factorial((a + b + c) // 2 + 1))


@lru_cache(maxsize=None)
def _three_j(j1, j2, j3, m1, m2, m3):
    """(sign, square) of the 3-j symbol, doubled arguments."""
    if m1 + m2 + m3 != 0 or not _triangle(j1, j2, j3):
        return 0, Fraction(0)
    for j, m in ((j1, m1), (j2, m2), (j3, m3)):
        if abs(m) > j or (j + m) % 2:
            return 0, Fraction(0)
    f = lambda x: factorial(x // 2)  # noqa: E731
    total = Fraction(0)
    k_min = max(0, (j2 - j3 - m1) // 2, (j1 - j3 + m2) // 2)
    k_max = min((j1 + j2 - j3) // 2, (j1 - m1) // 2, (j2 + m2) // 2)
    for k in range(k_min, k_max + 1):
        kk = 2 * k
        total += Fraction((-1) ** k, f(kk) * f(j3 - j2 + kk + m1) * f(j3 - j1 + kk - m2)
                          * f(j1 + j2 - j3 - kk) * f(j1 - kk - m1) * f(j2 - kk + m2))
    if total == 0:
        return 0, Fraction(0)
    square = (_delta_sq(j1, j2, j3) * f(j1 + m1) * f(j1 - m1) * f(j2 + m2) * f(j2 - m2)
              * f(j3 + m3) * f(j3 - m3) * total**2)
    phase = (-1) ** (((j1 - j2 - m3) // 2) % 2)
    return phase * (1 if total > 0 else -1), square


def wigner_3j_squared(j1, j2, j3, m1, m2, m3):
    """Exact square of the 3-j symbol."""
    return _three_j(*map(_twice, (j1, j2, j3, m1, m2, m3)))[1]


def wigner_3j(j1, j2, j3, m1, m2, m3):
    sign, square = _three_j(*map(_twice, (j1, j2, j3, m1, m2, m3)))
    return sign * float(square) ** 0.5


@lru_cache(maxsize=None)
def _six_j(j1, j2, j3, j4, j5, j6):
    triads = ((j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3))
    if not all(_triangle(*t) for t in triads):
        return 0, Fraction(0)
    a = [sum(t) // 2 for t in triads]
    b = [(j1 + j2 + j4 + j5) // 2, (j2 + j3 + j5 + j6) // 2, (j3 + j1 + j6 + j4) // 2]
    total = Fraction(0)
    for t in range(max(a), min(b) + 1):
        den = 1
        for x in a:
            den *= factorial(t - x)
        for y in b:
            den *= factorial(y - t)
        total += Fraction((-1) ** t * factorial(t + 1), den)
    if total == 0:
        return 0, Fraction(0)
    square = total**2
    for tri in triads:
        square *= _delta_sq(*tri)
    return (1 if total > 0 else -1), square


def wigner_6j_squared(j1, j2, j3, j4, j5, j6):
    """Exact square of the 6-j symbol ``{j1 j2 j3; j4 j5 j6}``."""
    return _six_j(*map(_twice, (j1, j2, j3, j4, j5, j6)))[1]


def wigner_6j(j1, j2, j3, j4, j5, j6):
    sign, square = _six_j(*map(_twice, (j1, j2, j3, j4, j5, j6)))
    return sign * float(square) ** 0.5


def line_strength(J, Jp, I, F, m, Fp, mp, q):
    """Squared dipole element ``|<F m| d_q |F' m'>|^2`` in units of ``|<J||d||J'>|^2``.

    ``q`` is the light polarization index with ``m' = m + q``.
    """
    if mp != m + q:
        return Fraction(0)
    hyperfine = (2 * Fraction(F) + 1) * (2 * Fraction(Fp) + 1) * (2 * Fraction(J) + 1)
    return (hyperfine * wigner_6j_squared(J, Jp, 1, Fp, F, I)
            * wigner_3j_squared(F, 1, Fp, m, q, -mp))
