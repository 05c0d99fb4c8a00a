"""Angular-momentum algebra: Wigner 3j/6j symbols and rotation matrices.

Racah closed forms evaluated with exact integer factorials; results are
memoized on doubled (integer) quantum numbers, so half-integer arguments
may be passed as floats.
"""

from fractions import Fraction
from functools import lru_cache
from math import cos, factorial, sin, sqrt

import numpy as np


def _twice(x):
    t = round(2 * x)
    if abs(2 * x - t) > 1e-9:
        raise ValueError(f"{x} is not an integer or half-integer")
    return t


def _f(twice_value):
    # factorial of a non-negative (already halved) integer given in doubled form
    return factorial(twice_value // 2)


def _triangle_ok(a, b, c):
    # doubled arguments
    return (a + b + c) % 2 == 0 and abs(a - b) <= c <= a + b


def _delta(a, b, c):
    return Fraction(_f(a + b - c) * _f(a - b + c) * _f(-a + b + c), _f(a + b + c + 2))


def _sqrt_fraction(x):
    return sqrt(float(x)) if x else 0.0


def wigner_3j(j1, j2, j3, m1, m2, m3):
    """Wigner 3j symbol (j1 j2 j3; m1 m2 m3)."""
    return _w3j(_twice(j1), _twice(j2), _twice(j3), _twice(m1), _twice(m2), _twice(m3))


@lru_cache(maxsize=None)
def _w3j(j1, j2, j3, m1, m2, m3):
    if m1 + m2 + m3 != 0:
        return 0.0
    if not _triangle_ok(j1, j2, j3):
        return 0.0
    for j, m in ((j1, m1), (j2, m2), (j3, m3)):
        if abs(m) > j or (j + m) % 2:
            return 0.0
    pref = _delta(j1, j2, j3) * (_f(j1 + m1) * _f(j1 - m1) * _f(j2 + m2)
                                 * _f(j2 - m2) * _f(j3 + m3) * _f(j3 - m3))
    kmin = max(0, j2 - j3 - m1, j1 - j3 + m2) // 2
    kmax = min(j1 + j2 - j3, j1 - m1, j2 + m2) // 2
    total = Fraction(0)
    for k in range(kmin, kmax + 1):
        k2 = 2 * k
        den = (factorial(k) * _f(j3 - j2 + k2 + m1) * _f(j3 - j1 + k2 - m2)
               * _f(j1 + j2 - j3 - k2) * _f(j1 - k2 - m1) * _f(j2 - k2 + m2))
        total += Fraction((-1) ** k, den)
    phase = -1 if ((j1 - j2 - m3) // 2) % 2 else 1
    value = _sqrt_fraction(pref * total * total)
    return phase * (value if total >= 0 else -value)


def wigner_6j(j1, j2, j3, j4, j5, j6):
    """Wigner 6j symbol {j1 j2 j3; j4 j5 j6}."""
    return _w6j(*(_twice(x) for x in (j1, j2, j3, j4, j5, j6)))


@lru_cache(maxsize=None)
def _w6j(j1, j2, j3, j4, j5, j6):
    triads = ((j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3))
    if not all(_triangle_ok(*t) for t in triads):
        return 0.0
    pref = Fraction(1)
    for t in triads:
        pref *= _delta(*t)
    a = [sum(t) // 2 for t in triads]
    b = [(j1 + j2 + j4 + j5) // 2, (j2 + j3 + j5 + j6) // 2, (j3 + j1 + j6 + j4) // 2]
    total = Fraction(0)
    for t in range(max(a), min(b) + 1):
        den = 1
        for ai in a:
            den *= factorial(t - ai)
        for bi in b:
            den *= factorial(bi - t)
        total += Fraction((-1) ** t * factorial(t + 1), den)
    value = _sqrt_fraction(pref * total * total)
    return value if total >= 0 else -value


def clebsch_gordan(j1, m1, j2, m2, j, m):
    """<j1 m1; j2 m2 | j m>."""
    if _twice(m1) + _twice(m2) != _twice(m):
        return 0.0
    phase = -1 if (_twice(j1 - j2 + m) // 2) % 2 else 1
    return phase * sqrt(2 * j + 1) * wigner_3j(j1, j2, j, m1, m2, -m)


def wigner_small_d(j, mp, m, beta):
    """Rotation matrix element d^j_{m' m}(beta) for a rotation about y."""
    tj, tmp, tm = _twice(j), _twice(mp), _twice(m)
    if abs(tmp) > tj or abs(tm) > tj:
        return 0.0
    c, s = cos(beta / 2), sin(beta / 2)
    root = sqrt(_f(tj + tmp) * _f(tj - tmp) * _f(tj + tm) * _f(tj - tm))
    kmin = max(0, tm - tmp) // 2
    kmax = min(tj + tm, tj - tmp) // 2
    total = 0.0
    for k in range(kmin, kmax + 1):
        k2 = 2 * k
        den = _f(tj + tm - k2) * factorial(k) * _f(tj - k2 - tmp) * _f(k2 - tm + tmp)
        sign = -1 if ((k2 - tm + tmp) // 2) % 2 else 1
        total += sign * c ** ((2 * tj - 2 * k2 + tm - tmp) // 2) * s ** ((2 * k2 - tm + tmp) // 2) / den
    return root * total


def small_d_matrix(j, beta):
    """Full d^j(beta) with rows/columns ordered m = -j ... j."""
    ms = np.arange(-j, j + 1)
    return np.array([[wigner_small_d(j, mp, m, beta) for m in ms] for mp in ms])


def wigner_big_d_matrix(j, alpha, beta, gamma=0.0):
    """D^j_{m' m}(alpha, beta, gamma) = exp(-i m' alpha) d^j_{m'm}(beta) exp(-i m gamma)."""
    ms = np.arange(-j, j + 1)
    d = small_d_matrix(j, beta)
    return np.exp(-1j * ms[:, None] * alpha) * d * np.exp(-1j * ms[None, :] * gamma)
