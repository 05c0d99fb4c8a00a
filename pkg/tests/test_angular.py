import math
import random

import numpy as np
import pytest
from sympy import N, Rational
from sympy.physics.wigner import clebsch_gordan as sym_cg
from sympy.physics.wigner import wigner_3j as sym_3j
from sympy.physics.wigner import wigner_6j as sym_6j
from sympy.physics.wigner import wigner_d_small

from rydpair.angular import (clebsch_gordan, small_d_matrix, wigner_3j, wigner_6j,
                             wigner_big_d_matrix, wigner_small_d)


def half(x):
    return Rational(int(round(2 * x)), 2)


def _random_3j(rng):
    while True:
        j1, j2 = rng.randint(0, 12) / 2, rng.randint(0, 12) / 2
        j3 = abs(j1 - j2) + rng.randint(0, int(j1 + j2 - abs(j1 - j2)))
        m1 = -j1 + rng.randint(0, int(2 * j1))
        m2 = -j2 + rng.randint(0, int(2 * j2))
        if abs(m1 + m2) <= j3:
            return j1, j2, j3, m1, m2, -m1 - m2


def test_3j_matches_sympy():
    rng = random.Random(3)
    for _ in range(300):
        args = _random_3j(rng)
        ref = float(N(sym_3j(*[half(a) for a in args]), 30))
        assert wigner_3j(*args) == pytest.approx(ref, abs=1e-13)


def test_3j_selection_rules():
    assert wigner_3j(1, 1, 3, 0, 0, 0) == 0.0  # triangle
    assert wigner_3j(1, 1, 1, 1, 0, 0) == 0.0  # m sum
    assert wigner_3j(1, 1, 1, 0, 0, 0) == 0.0  # odd J with all m = 0


def test_6j_matches_sympy():
    rng = random.Random(5)
    checked = 0
    while checked < 200:
        js = [rng.randint(0, 8) / 2 for _ in range(6)]
        try:
            ref = float(N(sym_6j(*[half(j) for j in js]), 30))
        except ValueError:  # sympy rejects non-integer triad sums; the symbol is zero
            ref = 0.0
        assert wigner_6j(*js) == pytest.approx(ref, abs=1e-13)
        checked += ref != 0.0
    assert wigner_6j(0.5, 0.5, 1, 0.5, 0.5, 3) == 0.0


def test_clebsch_gordan_matches_sympy():
    for j1, m1, j2, m2, j, m in [(0.5, 0.5, 0.5, -0.5, 1, 0), (2, 1, 1.5, -0.5, 2.5, 0.5),
                                 (3, -2, 0.5, 0.5, 2.5, -1.5), (1, 0, 1, 0, 2, 0)]:
        ref = float(N(sym_cg(*[half(x) for x in (j1, j2, j, m1, m2, m)]), 30))
        assert clebsch_gordan(j1, m1, j2, m2, j, m) == pytest.approx(ref, abs=1e-14)


@pytest.mark.parametrize("j", [0.5, 1, 1.5, 2, 3])
def test_small_d_matches_sympy(j):
    beta = 0.7321
    ref = np.array(N(wigner_d_small(half(j), beta), 20), dtype=float)
    ours = small_d_matrix(j, beta)
    # sympy orders rows from m = +j down to -j
    assert np.allclose(ours, ref[::-1, ::-1], atol=1e-12) or np.allclose(ours, ref, atol=1e-12)


def test_big_d_is_unitary_and_composes():
    D1 = wigner_big_d_matrix(2, 0.3, 0.9)
    assert np.allclose(D1 @ D1.conj().T, np.eye(5), atol=1e-13)
    # rotations about y compose additively in beta
    a, b = small_d_matrix(1.5, 0.4), small_d_matrix(1.5, 0.5)
    assert np.allclose(a @ b, small_d_matrix(1.5, 0.9), atol=1e-13)
    assert wigner_small_d(1, 0, 0, 0.8) == pytest.approx(math.cos(0.8), abs=1e-14)
