import math

import numpy as np
import pytest

from rydpair.atomic_structure import (AtomicState, DefectTable, FieldConfig, GridSpec, lande_g,
                                      load_defect_table, multipole_matrix, parse_defect_file,
                                      radial_matrix_element, radial_wavefunction, rydberg_basis,
                                      single_atom_hamiltonian, state_energy)
from rydpair.constants import MU_B_MHZ_PER_GAUSS, RYDBERG_INF_GHZ
from rydpair.errors import DataError, MissingDataError, OutOfValidityError

# Level energies (h*GHz) from an independent Rydberg-Ritz evaluation of the
# shipped coefficients with the mass-corrected Rydberg constant.
FROZEN_LEVELS = {
    (61, 2, 1.5): -924.5302898454316,
    (63, 1, 0.5): -903.4189592726844,
    (59, 3, 2.5): -945.6080011865611,
    (60, 0, 0.5): -1017.2429974783246,
}
HYD = DefectTable.hydrogenic(max_l=60)


@pytest.mark.parametrize("level", sorted(FROZEN_LEVELS))
def test_level_energies_match_independent_evaluation(defects, level):
    e = state_energy(AtomicState(*level, level[2]), defects)
    assert e == pytest.approx(FROZEN_LEVELS[level], rel=1e-12)


def test_forster_defect_sign(defects):
    # 61D3/2 pair sits 33.6 MHz below 63P1/2 + 59F5/2
    e = lambda *lev: state_energy(AtomicState(*lev, lev[2]), defects)
    dE = e(63, 1, 0.5) + e(59, 3, 2.5) - 2 * e(61, 2, 1.5)
    assert dE * 1e3 == pytest.approx(33.619, abs=1e-2)


@pytest.mark.parametrize("n", [1, 5, 20, 61])
def test_hydrogen_energy_and_mean_radius(n):
    for l in sorted({0, n - 1}):
        s = AtomicState(n, l, l + 0.5, l + 0.5)
        assert state_energy(s, HYD) == pytest.approx(-RYDBERG_INF_GHZ / n**2, rel=1e-10)
        r1 = radial_matrix_element(s, s, 1, HYD)
        assert r1 == pytest.approx((3 * n * n - l * (l + 1)) / 2, rel=1e-4)


def test_hydrogen_r2_and_dipole():
    s = AtomicState(20, 3, 3.5, 0.5)
    r2 = radial_matrix_element(s, s, 2, HYD)
    assert r2 == pytest.approx(20**2 * (5 * 20**2 + 1 - 3 * 3 * 4) / 2, rel=1e-4)
    # <1s|r|2p> = 128 sqrt(6) / 243
    d = radial_matrix_element(AtomicState(1, 0, 0.5, 0.5), AtomicState(2, 1, 0.5, 0.5), 1, HYD)
    assert abs(d) == pytest.approx(128 * math.sqrt(6) / 243, rel=1e-4)


def test_wavefunction_normalized_with_right_nodes(defects):
    s = AtomicState(61, 2, 1.5, 1.5)
    wf = radial_wavefunction(s, defects)
    assert wf.expectation(0) == pytest.approx(1.0, abs=1e-8)
    # the defect removes nodes inside the core: about n* - l - 1 remain
    assert wf.n_nodes == round(wf.n_star - 2 - 1)
    h = radial_wavefunction(AtomicState(30, 4, 4.5, 0.5), HYD)
    assert h.n_nodes == 30 - 4 - 1


def test_lande_g():
    assert lande_g(0, 0.5) == pytest.approx(2.0023193, rel=1e-6)
    assert lande_g(2, 1.5) == pytest.approx(0.79954, rel=1e-4)
    assert lande_g(1, 0.5) == pytest.approx(2 / 3 - (2.0023193 - 2) / 3, rel=1e-5)


def test_dipole_matrix_hermitian_and_selection(defects):
    basis = rydberg_basis(range(60, 62), 2, defects)
    for q in (-1, 0, 1):
        d = multipole_matrix(basis, 1, q, defects)
        dm = multipole_matrix(basis, 1, -q, defects)
        # (C_q)^dagger = (-1)^q C_{-q}
        assert np.allclose(d.T, (-1) ** q * dm, atol=1e-12)
        for i, a in enumerate(basis):
            for k, b in enumerate(basis):
                if d[i, k] != 0.0:
                    assert abs(a.l - b.l) == 1 and a.m_j == b.m_j + q


def test_zeeman_and_stark(defects):
    basis = rydberg_basis([61], 2, defects, m_j={1.5})
    H = single_atom_hamiltonian(basis, FieldConfig(B=10.0), defects)
    H0 = single_atom_hamiltonian(basis, FieldConfig(), defects)
    shift = np.diag(H - H0)
    expect = [lande_g(s.l, s.j) * s.m_j * MU_B_MHZ_PER_GAUSS * 10.0 for s in basis]
    assert np.allclose(shift, expect, rtol=1e-12)
    HE = single_atom_hamiltonian(basis, FieldConfig(E=10.0), defects)
    assert np.allclose(HE, HE.T)
    assert np.allclose(np.diag(HE), np.diag(H0))
    assert np.abs(HE - H0).max() > 0


def test_defect_file_validation():
    base = ("schema_version: 1\nspecies:\n  X:\n    mass_u: 10.0\n    channels:\n"
            "      - {l: 0, j: 0.5, delta0: 1.0, delta2: 0.0, delta4: 0.0, valid_n_min: 5,"
            " source_citation: test}\n")
    t = parse_defect_file(base, "X")
    with pytest.raises(OutOfValidityError):
        t.n_star(3, 0, 0.5)
    with pytest.raises(MissingDataError):
        t.n_star(10, 1, 0.5)
    with pytest.raises(MissingDataError):
        parse_defect_file(base, "Y")
    with pytest.raises(DataError):
        parse_defect_file(base.replace("delta4: 0.0", "delta4: 0.0, extra: 1"), "X")
    with pytest.raises(DataError):
        parse_defect_file(base.replace("schema_version: 1", "schema_version: 9"), "X")


def test_data_dir_env(tmp_path, monkeypatch):
    src = load_defect_table()
    text = (open(str(__import__("rydpair").atomic_structure.data_dir() / "quantum_defects.yaml"))
            .read().replace(src.data_version, "custom-1"))
    (tmp_path / "quantum_defects.yaml").write_text(text)
    monkeypatch.setenv("RYDPAIR_DATA_DIR", str(tmp_path))
    assert load_defect_table().data_version == "custom-1"
