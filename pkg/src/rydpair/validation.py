"""Fast invariant checks behind ``rydpair validate``.

Each check returns (name, passed, detail). They use closed forms or
independent evaluations and finish in seconds.
"""

import math

import numpy as np

from . import _accel
from .angular import clebsch_gordan, wigner_3j, wigner_6j
from .atomic_structure import (AtomicState, DefectTable, GridSpec, load_defect_table,
                               radial_matrix_element, state_energy)
from .spin_dynamics import (Lattice, SpinModel, enumerate_truncated_basis, evolve_exact,
                            evolve_spin_model, full_basis)


def check_hydrogen():
    table = DefectTable.hydrogenic(max_l=60)
    worst_e, worst_r = 0.0, 0.0
    for n in (1, 5, 20, 61):
        for l in {0, n - 1}:
            j = l + 0.5
            s = AtomicState(n, l, j, j)
            e = state_energy(s, table)
            exact = -table.rydberg_ghz / n**2
            worst_e = max(worst_e, abs(e / exact - 1))
            r = radial_matrix_element(s, s, 1, table, GridSpec())
            worst_r = max(worst_r, abs(r / ((3 * n * n - l * (l + 1)) / 2) - 1))
    ok = worst_e < 1e-10 and worst_r < 1e-4
    return "hydrogen closed forms", ok, f"energy {worst_e:.1e}, <r> {worst_r:.1e}"


def check_angular():
    # 3j normalization and a 6j sum rule
    err = 0.0
    j1, j2 = 2, 1.5
    for j3 in (0.5, 1.5, 2.5, 3.5):
        s = sum(wigner_3j(j1, j2, j3, m1, m2, -m1 - m2) ** 2
                for m1 in np.arange(-j1, j1 + 1) for m2 in np.arange(-j2, j2 + 1)
                if abs(m1 + m2) <= j3)
        err = max(err, abs(s - 1))
    s = sum((2 * x + 1) * wigner_6j(1, 1, x, 1, 1, 0) ** 2 for x in (0, 1, 2))
    err = max(err, abs(s - 1))
    err = max(err, abs(clebsch_gordan(0.5, 0.5, 0.5, -0.5, 1, 0) - math.sqrt(0.5)))
    return "angular algebra", err < 1e-12, f"max error {err:.1e}"


def check_defect_data():
    t = load_defect_table()
    ok = bool(t.channels) and all(c.delta_coeffs[0] >= 0 for c in t.channels)
    return "defect data", ok, f"{len(t.channels)} channels, version {t.data_version}"


def check_kernels():
    n = 10
    edges = Lattice.ring(n, 1.0).neighbor_edges(1.0)
    a = enumerate_truncated_basis(n, edges, kernels=_accel.numpy_kernels)
    b = enumerate_truncated_basis(n, edges, kernels=_accel.numba_kernels or _accel.numpy_kernels)
    # independent sets of the 10-cycle: Lucas number L_10 = 123
    ok = a.size == b.size == 123 and np.array_equal(a.configurations, b.configurations)
    return "kernel equivalence", ok, f"{a.size} independent sets ({'numba' if _accel.HAS_NUMBA else 'numpy only'})"


def check_propagator():
    rng = np.random.default_rng(7)
    lat = Lattice.ring(6, 5.0)
    U = rng.normal(scale=2.0, size=(6, 6))
    U = U + U.T
    model = SpinModel(lat, 2 * math.pi * 1.2, U)
    basis = full_basis(6)
    t = np.linspace(0, 1.0, 5)
    ref = evolve_exact(model, basis, t, keep_states=True)
    out = evolve_spin_model(model, basis, record_times=t, keep_states=True, dt=1e-4)
    err = max(np.abs(x - y).max() for x, y in zip(ref.states, out.states))
    return "split-step vs exact", err < 1e-6, f"max amplitude error {err:.1e}"


CHECKS = (check_hydrogen, check_angular, check_defect_data, check_kernels, check_propagator)


def run_all():
    results = []
    for fn in CHECKS:
        try:
            results.append(fn())
        except Exception as exc:  # report, keep going
            results.append((fn.__name__, False, f"{type(exc).__name__}: {exc}"))
    return results
