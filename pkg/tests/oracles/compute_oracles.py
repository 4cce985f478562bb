"""Independent reference values frozen into the test suite.

Run with ``python tests/oracles/compute_oracles.py``. Nothing here imports
the package: values come from mpmath at 50 digits, direct Monte Carlo of
the jump process, or sympy's Wigner symbols.
"""
import mpmath as mp
import numpy as np

mp.mp.dps = 50


def poisson_mp(n, mu):
    return mp.e ** (-mu) * mu**n / mp.factorial(n)


def total_mp(n, t, ri, rf, rl):
    """Count probability with a jump, by 50-digit quadrature over the jump time."""
    ri, rf, rl, t = map(mp.mpf, (ri, rf, rl, t))
    stay = mp.e ** (-rl * t) * poisson_mp(n, ri * t)

    def f(tau):
        return rl * mp.e ** (-rl * tau) * poisson_mp(n, ri * tau + rf * (t - tau))

    return stay + mp.quad(f, [0, t])


def monte_carlo_jump(n, t, ri, rf, rl, samples, seed):
    rng = np.random.default_rng(seed)
    hits = 0
    chunk = 1_000_000
    for _ in range(samples // chunk):
        tau = rng.exponential(1 / rl, chunk)
        jumped = tau < t
        before = rng.poisson(ri * np.minimum(tau, t))
        after = rng.poisson(rf * np.clip(t - tau, 0, None))
        hits += int(np.sum(jumped & (before + after == n)))
    p = hits / samples
    return p, np.sqrt(p * (1 - p) / samples)


if __name__ == "__main__":
    print("poisson(3; 4) =", mp.nstr(poisson_mp(3, mp.mpf(40e3) * mp.mpf("100e-6")), 20))
    p, se = monte_carlo_jump(2, 160e-6, 40.45e3, 1.05e3, 1.31e3, 10_000_000, 20240611)
    print("MC jump(2, 160us) =", repr(p), "+-", repr(se))
    ri, rf, rl = 39.4e3 + 1.05e3, 1.05e3, 1.31e3
    print("bright error n=1 at 200us =", mp.nstr(total_mp(0, mp.mpf("200e-6"), ri, rf, rl), 20))
    for n in (0, 1, 5, 8, 20):
        print(f"total({n}, 200us) =", mp.nstr(total_mp(n, mp.mpf("200e-6"), ri, rf, rl), 20))
    e2 = sum(total_mp(k, mp.mpf("160e-6"), ri, rf, rl) for k in range(2))
    print("bright error n=2 at 160us =", mp.nstr(e2, 20))
