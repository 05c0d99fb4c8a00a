import math

import numpy as np
import pytest
import scipy.linalg

from rydpair.atomic_structure import FieldConfig
from rydpair.constants import BOHR_RADIUS_UM, HARTREE_MHZ
from rydpair.errors import ConfigError, OutOfValidityError
from rydpair.pair_interaction import (Geometry, PairSpectrumPoint, find_resonant_distances,
                                      interaction_hamiltonian, interaction_terms, pair_spectrum,
                                      perturbative_c6, resonance_window_count, rotated_coupling)


def _pair_op(basis, A, B):
    ia, ib = basis.index_a, basis.index_b
    return A[np.ix_(ia, ia)] * B[np.ix_(ib, ib)]


def _cartesian_dipoles(basis):
    d = {q: basis.single_multipole(1, q) for q in (-1, 0, 1)}
    dx = (d[-1] - d[1]) / math.sqrt(2)
    dy = 1j * (d[-1] + d[1]) / math.sqrt(2)
    return [dx, dy, d[0]]


@pytest.mark.parametrize("theta,phi", [(0.0, 0.0), (1.3613568, 0.0), (0.6, 1.1)])
def test_dipole_term_matches_cartesian_form(small_basis, theta, phi):
    """d1.d2 - 3 (d1.n)(d2.n) built from Cartesian components."""
    b = small_basis
    n = [math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)]
    d = _cartesian_dipoles(b)
    ref = sum(_pair_op(b, d[i], d[i]) for i in range(3))
    dn = sum(n[i] * d[i] for i in range(3))
    ref = ref - 3 * _pair_op(b, dn, dn)
    ours = interaction_terms(b, theta, 1, phi)[3]
    scale = np.abs(ref).max()
    assert np.abs(ours - ref).max() < 1e-12 * scale


def test_rotated_coupling_on_axis():
    # along z only q1 = -q2 survives, with the dipole weights -1, -2, -1
    W = rotated_coupling(1, 1, 0.0)
    assert np.allclose(W, np.fliplr(np.diag([-1.0, -2.0, -1.0])))


def test_basis_closed_under_exchange_and_sorted(small_basis):
    states = set(small_basis.states)
    assert all(s.swapped() in states for s in states)
    assert small_basis.target in states


def test_on_axis_conserves_total_m(small_basis):
    terms = interaction_terms(small_basis, 0.0, 2)
    M = np.array([s.total_m for s in small_basis.states])
    for mat in terms.values():
        i, j = np.nonzero(np.abs(mat) > 1e-12 * np.abs(mat).max())
        assert np.all(M[i] == M[j])


def test_interaction_hermitian(small_basis):
    V = interaction_hamiltonian(small_basis, Geometry(7.0, 1.0, 0.4), 2)
    assert np.allclose(V, V.conj().T, atol=1e-9 * np.abs(V).max())


def test_dipole_only_scales_as_inverse_cube(small_basis):
    V1 = interaction_hamiltonian(small_basis, Geometry(6.0, 0.8), 1)
    V2 = interaction_hamiltonian(small_basis, Geometry(12.0, 0.8), 1)
    assert np.allclose(V2 * 8.0, V1, rtol=1e-12, atol=1e-12 * np.abs(V1).max())


def test_azimuth_does_not_change_spectrum(small_basis):
    f = FieldConfig(B=3.5)
    a = pair_spectrum(small_basis, f, 0.9, [7.0], phi=0.0, keep_vectors=None)[0]
    b = pair_spectrum(small_basis, f, 0.9, [7.0], phi=1.234, keep_vectors=None)[0]
    assert np.allclose(a.eigenvalues, b.eigenvalues, atol=1e-7)
    assert np.allclose(np.sort(a.overlaps), np.sort(b.overlaps), atol=1e-8)


@pytest.mark.parametrize("E", [0.0, 20.0])
def test_reflection_symmetry(small_basis, E):
    # exchange (n -> -n) plus rotation about z maps theta onto pi - theta
    f = FieldConfig(B=3.5, E=E)
    a = pair_spectrum(small_basis, f, math.radians(78), [6.5], keep_vectors=None)[0]
    b = pair_spectrum(small_basis, f, math.radians(102), [6.5], keep_vectors=None)[0]
    assert np.allclose(a.eigenvalues, b.eigenvalues, atol=1e-7)


def test_far_field_recovers_target(small_basis):
    p = pair_spectrum(small_basis, FieldConfig(B=3.5), 0.5, [40.0])[0]
    assert p.overlaps[p.dominant] > 0.999
    assert abs(p.detunings[p.dominant]) < 0.05


def test_zeeman_shift_of_reference(small_basis):
    # both atoms in m_j = 3/2 with g_j ~ 0.7995: 2 * 1.5 * g_j * mu_B * B
    p = pair_spectrum(small_basis, FieldConfig(B=5.0), 0.5, [40.0])[0]
    assert p.reference == pytest.approx(2 * 1.5 * 0.79954 * 1.39962449 * 5.0, rel=1e-4)


def test_leroy_radius_guard(small_basis):
    with pytest.raises(OutOfValidityError):
        interaction_hamiltonian(small_basis, Geometry(0.5, 0.0))
    with pytest.raises(ConfigError):
        Geometry(-1.0, 0.0)


def test_perturbative_c6_matches_asymptotic_shift(small_basis):
    """Second-order sum against exact diagonalization at large R (dipole only)."""
    c6 = perturbative_c6(small_basis, 0.0)
    R = 25.0
    H = np.diag(small_basis.unperturbed_energies()) + interaction_hamiltonian(small_basis, Geometry(R, 0.0), 1)
    w, v = scipy.linalg.eigh(H)
    k = np.argmax(np.abs(v[small_basis.target_index]) ** 2)
    assert w[k] * R**6 == pytest.approx(c6, rel=2e-3)
    assert c6 < 0


def _point(R, det, ov):
    det, ov = np.asarray(det, float), np.asarray(ov, float)
    return PairSpectrumPoint(R, det, ov, 0.0)


def test_resonance_finder_on_synthetic_spectrum():
    spec = [_point(6.0, [0.0, 5.0], [0.9, 0.1]),
            _point(6.25, [0.0, 0.5], [0.8, 0.2]),
            _point(6.5, [0.0, 0.9], [0.85, 0.1]),
            _point(6.75, [0.0, -4.0], [0.95, 0.05])]
    res = find_resonant_distances(spec)
    assert len(res) == 1
    assert res[0].R == 6.25 and res[0].R_start == 6.25 and res[0].R_end == 6.5
    assert resonance_window_count(spec) == 2
    # below threshold overlap does not count
    assert find_resonant_distances(spec, overlap_threshold=0.5) == []
