"""Two-atom Rydberg pair potentials.

The pair basis is a window of product states |a b> around a target pair.
The electrostatic interaction is expanded in multipoles (dipole-dipole
~1/R^3, dipole-quadrupole ~1/R^4, quadrupole-quadrupole ~1/R^5) along the
interatomic axis, which is tilted by theta from the field axis z; the
tilt is applied to the operator with Wigner rotation matrices so that the
field terms stay diagonal-friendly.
"""

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .angular import wigner_big_d_matrix
from .atomic_structure import (
    AtomicState,
    FieldConfig,
    GridSpec,
    load_defect_table,
    multipole_matrix,
    radial_wavefunction,
    rydberg_basis,
    single_atom_hamiltonian,
    state_energy,
)
from .constants import BOHR_RADIUS_UM, HARTREE_MHZ
from .errors import ConfigError, NumericalError, OutOfValidityError, ResolutionWarning

log = logging.getLogger(__name__)

# validated electric-field range, mV/cm
VALIDATED_E_MAX = 25.0

DEFAULT_ENERGY_WINDOW_GHZ = 2.0
DEFAULT_N_WINDOW = 4
DEFAULT_L_MAX = 3
DEFAULT_MAX_MULTIPOLE = 2

# bounded caches on a PairBasis (each term set is size^2 per multipole order)
TERMS_CACHE_SIZE = 6
MP_CACHE_SIZE = 64
DRESSED_CACHE_SIZE = 16


@dataclass(frozen=True, order=True)
class PairState:
    a: AtomicState
    b: AtomicState

    @property
    def total_m(self):
        return self.a.m_j + self.b.m_j

    def energy(self, defects):
        """Unperturbed pair energy, h*GHz."""
        return state_energy(self.a, defects) + state_energy(self.b, defects)

    def swapped(self):
        return PairState(self.b, self.a)

    def __str__(self):
        return f"|{self.a}; {self.b}>"


@dataclass(frozen=True)
class Geometry:
    """Interatomic distance ``R`` (um); ``theta`` (rad) from z; azimuth ``phi`` (rad)."""

    R: float
    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not self.R > 0:
            raise ConfigError(f"R must be positive, got {self.R}")
        if not 0.0 <= self.theta <= math.pi + 1e-12:
            raise ConfigError(f"theta must lie in [0, pi], got {self.theta}")


@dataclass(eq=False)
class PairBasis:
    """Product states |a b> of field-dressed single-atom states.

    ``single_states`` are the labels the pair states are built from
    (l <= l_max). In an electric field each label stands for the single-atom
    eigenstate with the largest weight on that bare level, obtained by
    diagonalising over ``dressing_states`` (l <= dressing_l_max), so Stark
    shifts from levels outside the pair basis are still accounted for.
    """

    states: tuple
    target: PairState
    energy_window: float
    n_window: int
    l_max: int
    max_multipole: int
    defects: object = field(repr=False)
    grid_spec: GridSpec = field(default=GridSpec(), repr=False)
    single_states: tuple = field(default=(), repr=False)
    index_a: np.ndarray = field(default=None, repr=False)
    index_b: np.ndarray = field(default=None, repr=False)
    dressing_states: tuple = field(default=(), repr=False)
    dressing_l_max: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def size(self):
        return len(self.states)

    def __len__(self):
        return len(self.states)

    @property
    def target_index(self):
        return self._cache.setdefault("target_index", self.states.index(self.target))

    def _half_target(self):
        return self.target.energy(self.defects) * 1e3 / 2.0

    def unperturbed_energies(self):
        """Zero-field pair energies relative to the target, h*MHz."""
        e1 = self.dressed(FieldConfig())[0]
        return e1[self.index_a] + e1[self.index_b]

    def dressed(self, fields):
        """Single-atom energies and eigenvectors in ``fields``.

        Returns (energies, U): energies (h*MHz, relative to half the
        zero-field target pair energy) of the eigenstates labelled by
        ``single_states``, and U, their components over ``dressing_states``
        (None when the fields leave the bare states unmixed).
        """
        key = ("dressed", fields.B, fields.E)
        if key in self._cache:
            return self._cache[key]
        half = self._half_target()
        if fields.E == 0.0:
            # Zeeman term is diagonal: bare states are eigenstates
            H = single_atom_hamiltonian(self.single_states, fields, self.defects,
                                        self.grid_spec, half)
            out = (np.diag(H).copy(), None)
        else:
            out = self._dress(fields, half)
        self._cache[key] = out
        _evict(self._cache, "dressed", DRESSED_CACHE_SIZE)
        return out

    def _dress(self, fields, half):
        full = self.dressing_states
        H = single_atom_hamiltonian(full, fields, self.defects, self.grid_spec, half)
        pos = {s: i for i, s in enumerate(full)}
        kept = np.array([pos[s] for s in self.single_states])
        label_of = np.full(len(full), -1)
        label_of[kept] = np.arange(kept.size)
        energies = np.zeros(kept.size)
        U = np.zeros((len(full), kept.size))
        m_all = np.array([s.m_j for s in full])
        # E and B along z conserve m_j
        for m in np.unique(m_all):
            idx = np.nonzero(m_all == m)[0]
            w, v = scipy.linalg.eigh(H[np.ix_(idx, idx)])
            weight = v ** 2
            rows, cols = scipy.optimize.linear_sum_assignment(-weight)
            for r, c in zip(rows, cols):
                lab = label_of[idx[r]]
                if lab < 0:
                    continue
                vec = v[:, c] * np.sign(v[r, c])
                if weight[r, c] < 0.5:
                    log.debug("dressed state %s keeps only %.2f of its label",
                              full[idx[r]], weight[r, c])
                energies[lab] = w[c]
                U[idx, lab] = vec
        return energies, U

    def single_multipole(self, kappa, q, fields=None):
        """r^kappa C^kappa_q between the (dressed) single-atom states."""
        U = None if fields is None else self.dressed(fields)[1]
        if U is None:
            key = ("mp", kappa, q)
            if key not in self._cache:
                self._cache[key] = multipole_matrix(self.single_states, kappa, q,
                                                    self.defects, self.grid_spec)
            return self._cache[key]
        key = ("mp", kappa, q, fields.B, fields.E)
        if key not in self._cache:
            full_key = ("full", kappa, q)
            if full_key not in self._cache:
                self._cache[full_key] = multipole_matrix(self.dressing_states, kappa, q,
                                                         self.defects, self.grid_spec)
            self._cache[key] = U.T @ self._cache[full_key] @ U
        return self._cache[key]

    def min_distance(self):
        """LeRoy radius of the target pair in um; below it the atoms' clouds overlap."""
        ra = radial_wavefunction(self.target.a, self.defects, self.grid_spec).expectation(2)
        rb = radial_wavefunction(self.target.b, self.defects, self.grid_spec).expectation(2)
        return 2.0 * (math.sqrt(ra) + math.sqrt(rb)) * BOHR_RADIUS_UM


def build_pair_basis(target, energy_window=DEFAULT_ENERGY_WINDOW_GHZ, n_window=DEFAULT_N_WINDOW,
                     l_max=DEFAULT_L_MAX, max_multipole=DEFAULT_MAX_MULTIPOLE, defects=None,
                     grid_spec=GridSpec(), dressing_l_max=None):
    """All product states within ``energy_window`` (h*GHz) of the target pair energy.

    Single-atom levels are restricted to |n - n_target| <= n_window and
    l <= l_max. The result is closed under atom exchange and ordered by the
    single-atom indices of (a, b). ``dressing_l_max`` (default: every l the
    defect table covers, at least l_max) sets the single-atom basis used for
    field dressing.
    """
    if defects is None:
        defects = load_defect_table()
    if not energy_window >= 0 or n_window < 0 or l_max < 0:
        raise ConfigError("energy_window, n_window and l_max must be non-negative")
    if max_multipole < 1:
        raise ConfigError("max_multipole must be at least 1")
    if isinstance(target, AtomicState):
        target = PairState(target, target)
    if dressing_l_max is None:
        dressing_l_max = max(l_max, defects.max_l)
    if dressing_l_max < l_max:
        raise ConfigError("dressing_l_max must be at least l_max")
    ns = sorted({target.a.n, target.b.n})
    n_range = range(max(1, ns[0] - n_window), ns[-1] + n_window + 1)
    singles = tuple(rydberg_basis(n_range, l_max, defects))
    for s in (target.a, target.b):
        if s not in singles:
            raise ConfigError(f"target state {s} excluded by the n/l windows")
    dressing = tuple(rydberg_basis(n_range, dressing_l_max, defects))
    e = np.array([state_energy(s, defects) for s in singles])
    et = target.energy(defects)
    tol = max(energy_window, 1e-9)
    order = np.argsort(e, kind="stable")
    es = e[order]
    ia, ib = [], []
    for i, ea in enumerate(e):
        lo = np.searchsorted(es, et - ea - tol, side="left")
        hi = np.searchsorted(es, et - ea + tol, side="right")
        for k in np.sort(order[lo:hi]):
            ia.append(i)
            ib.append(k)
    ia = np.array(ia, dtype=np.int64)
    ib = np.array(ib, dtype=np.int64)
    states = tuple(PairState(singles[i], singles[k]) for i, k in zip(ia, ib))
    if target not in states:
        raise ConfigError("pair basis is empty around the target; widen the windows")
    basis = PairBasis(states, target, energy_window, n_window, l_max, max_multipole, defects,
                      grid_spec, singles, ia, ib, dressing, dressing_l_max)
    log.info("pair basis: %d states (%d single-atom states)", basis.size, len(singles))
    return basis


# -- interaction operator -----------------------------------------------------

def _multipole_prefactor(k1, k2, q):
    return ((-1) ** k2 * math.factorial(k1 + k2)
            / math.sqrt(math.factorial(k1 + q) * math.factorial(k1 - q)
                        * math.factorial(k2 + q) * math.factorial(k2 - q)))


def rotated_coupling(k1, k2, theta, phi=0.0):
    """Coefficients W[q1, q2] of A^{k1}_{q1} B^{k2}_{q2} for an axis at (theta, phi).

    Along the axis the expansion couples q and -q components; rotating the
    axis to (theta, phi) mixes lab-frame components through D^k(phi, theta, 0).
    Indices run over q1 = -k1..k1, q2 = -k2..k2.
    """
    D1 = wigner_big_d_matrix(k1, phi, theta)
    D2 = wigner_big_d_matrix(k2, phi, theta)
    W = np.zeros((2 * k1 + 1, 2 * k2 + 1), dtype=complex)
    for q in range(-min(k1, k2), min(k1, k2) + 1):
        c = _multipole_prefactor(k1, k2, q)
        W += c * np.outer(D1[:, q + k1], D2[:, -q + k2])
    if phi == 0.0:
        W = W.real
    return W


def _dressing_key(fields):
    if fields is None or fields.E == 0.0:
        return None
    return (fields.B, fields.E)


def interaction_terms(basis, theta, max_multipole=DEFAULT_MAX_MULTIPOLE, phi=0.0, fields=None):
    """R-independent multipole matrices {order p: M_p} with V(R) = sum_p M_p / R^p.

    M_p is in Hartree * bohr^p; p = k1 + k2 + 1. With ``fields`` the
    operators act between field-dressed single-atom states.
    """
    dkey = _dressing_key(fields)
    key = ("terms", round(theta, 14), round(phi, 14), max_multipole, dkey)
    if key in basis._cache:
        return basis._cache[key]
    dfields = None if dkey is None else fields
    ia, ib = basis.index_a, basis.index_b
    terms = {}
    for k1 in range(1, max_multipole + 1):
        for k2 in range(1, max_multipole + 1):
            W = rotated_coupling(k1, k2, theta, phi)
            M = np.zeros((basis.size, basis.size), dtype=W.dtype)
            for q1 in range(-k1, k1 + 1):
                A = basis.single_multipole(k1, q1, dfields)[np.ix_(ia, ia)]
                if not A.any():
                    continue
                for q2 in range(-k2, k2 + 1):
                    w = W[q1 + k1, q2 + k2]
                    if abs(w) < 1e-15:
                        continue
                    B = basis.single_multipole(k2, q2, dfields)[np.ix_(ib, ib)]
                    M += w * (A * B)
            p = k1 + k2 + 1
            terms[p] = terms.get(p, 0) + M
    basis._cache[key] = terms
    _evict(basis._cache, "terms", TERMS_CACHE_SIZE)
    if dkey is not None:
        _evict(basis._cache, "mp", MP_CACHE_SIZE)
    return terms


def _evict(cache, tag, limit):
    # oldest entries first: dicts keep insertion order
    keys = [k for k in cache if isinstance(k, tuple) and k[0] == tag]
    for k in keys[: max(0, len(keys) - limit)]:
        cache.pop(k, None)


def interaction_hamiltonian(basis, geometry, max_multipole=DEFAULT_MAX_MULTIPOLE, fields=None):
    """Multipole interaction over the pair basis in h*MHz."""
    if max_multipole < 1:
        raise ConfigError("max_multipole must be at least 1")
    r_min = basis.min_distance()
    if geometry.R < r_min:
        raise OutOfValidityError(
            f"R = {geometry.R} um is below the LeRoy radius {r_min:.3f} um of the target pair")
    R_bohr = geometry.R / BOHR_RADIUS_UM
    terms = interaction_terms(basis, geometry.theta, max_multipole, geometry.phi, fields)
    V = sum(M * (HARTREE_MHZ / R_bohr**p) for p, M in terms.items())
    return V


def pair_field_energies(basis, fields):
    """Non-interacting pair energies in ``fields``, h*MHz relative to the zero-field target."""
    e1 = basis.dressed(fields)[0]
    return e1[basis.index_a] + e1[basis.index_b]


def pair_field_hamiltonian(basis, fields):
    """H_single x 1 + 1 x H_single over the pair basis (diagonal in the dressed states)."""
    return np.diag(pair_field_energies(basis, fields))


def single_atom_reference(basis, fields, which="a"):
    """Field shift (h*MHz, relative to the zero-field level) of a target atom."""
    state = basis.target.a if which == "a" else basis.target.b
    e1 = basis.dressed(fields)[0]
    i = basis.single_states.index(state)
    return float(e1[i]) - (state_energy(state, basis.defects) * 1e3 - basis._half_target())


def laser_reference(basis, fields):
    """Field-shifted non-interacting target pair energy (h*MHz): the two-photon resonance."""
    return single_atom_reference(basis, fields, "a") + single_atom_reference(basis, fields, "b")


@dataclass
class PairSpectrumPoint:
    R: float
    eigenvalues: np.ndarray = field(repr=False)
    overlaps: np.ndarray = field(repr=False)
    reference: float = 0.0
    vector_indices: np.ndarray = field(default=None, repr=False)
    eigenvectors: np.ndarray = field(default=None, repr=False)
    theta: float = 0.0
    fields: FieldConfig = FieldConfig()

    @property
    def detunings(self):
        """Eigenvalues relative to the laser two-photon resonance, h*MHz."""
        return self.eigenvalues - self.reference

    @property
    def dominant(self):
        return int(np.argmax(self.overlaps))

    def vectors_for(self, indices):
        pos = np.searchsorted(self.vector_indices, indices)
        return self.eigenvectors[:, pos]


DEGENERACY_TOL_MHZ = 1e-7


def _align_degenerate(w, v, t):
    """Rotate each degenerate eigenspace so one vector carries all of its target weight.

    Eigenvectors inside a degenerate cluster are arbitrary; without this the
    target overlap would be split at random between them.
    """
    gaps = np.diff(w) > DEGENERACY_TOL_MHZ
    starts = np.concatenate([[0], np.nonzero(gaps)[0] + 1])
    ends = np.concatenate([starts[1:], [w.size]])
    for a, b in zip(starts, ends):
        if b - a < 2:
            continue
        c = v[t, a:b].conj()
        norm = np.linalg.norm(c)
        if norm < 1e-14:
            continue
        Q, _ = np.linalg.qr(np.column_stack([c / norm, np.eye(b - a, dtype=c.dtype)]))
        v[:, a:b] = v[:, a:b] @ Q[:, : b - a]


def _diagonalize(H, R, keep, target_index, vector_floor):
    try:
        w, v = scipy.linalg.eigh(H, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"eigensolver failed at R = {R} um: {exc}") from exc
    _align_degenerate(w, v, target_index)
    overlaps = np.abs(v[target_index]) ** 2
    if keep == "all":
        idx = np.arange(w.size)
    elif keep == "overlap":
        idx = np.nonzero(overlaps >= vector_floor)[0]
    else:
        idx = np.zeros(0, dtype=int)
    return w, overlaps, idx, (v[:, idx].copy() if idx.size else None)


def pair_spectrum(basis, fields, theta, R_list, max_multipole=DEFAULT_MAX_MULTIPOLE, phi=0.0,
                  keep_vectors="overlap", vector_floor=1e-6, workers=1, interaction_scale=1.0):
    """Diagonalise the full pair Hamiltonian at each distance in ``R_list``.

    Eigenvalues are in h*MHz relative to the zero-field unperturbed target
    pair energy; ``reference`` on every point holds the laser resonance.
    ``keep_vectors`` is "all", "overlap" (eigenvectors whose target overlap
    is at least ``vector_floor``) or None.
    """
    R_list = np.asarray(R_list, dtype=float)
    if np.any(np.diff(R_list) < 0):
        raise ConfigError("R_list must be sorted ascending")
    if abs(fields.E) > VALIDATED_E_MAX:
        warnings.warn(f"E = {fields.E} mV/cm exceeds the validated range (<= {VALIDATED_E_MAX})",
                      stacklevel=2)
    H0 = pair_field_hamiltonian(basis, fields)
    ref = laser_reference(basis, fields)
    interaction_terms(basis, theta, max_multipole, phi, fields)
    t_idx = basis.target_index

    def one(R):
        V = interaction_hamiltonian(basis, Geometry(R, theta, phi), max_multipole, fields)
        H = H0 + interaction_scale * V
        w, ov, idx, vecs = _diagonalize(H, R, keep_vectors, t_idx, vector_floor)
        return PairSpectrumPoint(float(R), w, ov, ref, idx, vecs, theta, fields)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, R_list))
    return [one(R) for R in R_list]


# -- resonances ----------------------------------------------------------------

@dataclass
class Resonance:
    """An eigenstate other than the dominant curve inside the laser window."""

    R: float
    index: int
    R_start: float
    R_end: float
    overlap: float
    detuning: float


def _resonant_mask(point, window, threshold):
    det = point.detunings
    mask = (np.abs(det) <= window) & (point.overlaps >= threshold)
    mask[point.dominant] = False
    return mask


def resonance_window_count(spectrum, laser_detuning_window=1.2, overlap_threshold=0.05):
    """Number of (R, eigenstate) samples of non-dominant states inside the laser window."""
    return int(sum(_resonant_mask(p, laser_detuning_window, overlap_threshold).sum() for p in spectrum))


def find_resonant_distances(spectrum, laser_detuning_window=1.2, overlap_threshold=0.05,
                            refine=None, tolerance=0.01):
    """Distances where a non-dominant eigenstate becomes laser resonant.

    A state counts when its detuning from the two-photon resonance is within
    ``laser_detuning_window`` (h*MHz) and its overlap with the target pair
    state is at least ``overlap_threshold``. Consecutive resonant grid points
    form one region; the reported ``R`` is the sample of strongest overlap.
    With ``refine`` (a callable R -> PairSpectrumPoint) the region edges are
    bisected down to ``tolerance`` um.
    """
    hits = []
    flags = []
    for p in spectrum:
        mask = _resonant_mask(p, laser_detuning_window, overlap_threshold)
        flags.append(bool(mask.any()))
    for i in range(len(spectrum) - 1):
        a, b = spectrum[i], spectrum[i + 1]
        below_a = np.count_nonzero(a.detunings < 0)
        below_b = np.count_nonzero(b.detunings < 0)
        if abs(below_a - below_b) >= 2:
            warnings.warn(f"{abs(below_a - below_b)} levels cross the laser resonance between "
                          f"R = {a.R} and {b.R} um; refine the R grid", ResolutionWarning, stacklevel=2)

    def edge(r_in, r_out):
        while abs(r_out - r_in) > tolerance:
            mid = 0.5 * (r_in + r_out)
            if _resonant_mask(refine(mid), laser_detuning_window, overlap_threshold).any():
                r_in = mid
            else:
                r_out = mid
        return r_in

    i = 0
    while i < len(spectrum):
        if not flags[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(spectrum) and flags[j + 1]:
            j += 1
        best = None
        for p in spectrum[i: j + 1]:
            mask = _resonant_mask(p, laser_detuning_window, overlap_threshold)
            for k in np.nonzero(mask)[0]:
                if best is None or p.overlaps[k] > best[2]:
                    best = (p.R, int(k), float(p.overlaps[k]), float(p.detunings[k]))
        r_start, r_end = spectrum[i].R, spectrum[j].R
        if refine is not None:
            if i > 0:
                r_start = edge(spectrum[i].R, spectrum[i - 1].R)
            if j + 1 < len(spectrum):
                r_end = edge(spectrum[j].R, spectrum[j + 1].R)
        hits.append(Resonance(best[0], best[1], r_start, r_end, best[2], best[3]))
        i = j + 1
    return hits


# -- perturbative oracle ---------------------------------------------------------

def perturbative_c6(basis, theta=0.0):
    """Second-order dipole-dipole shift of the target pair as C6 in h*MHz*um^6.

    Sums |<pq|V_dd|rr>|^2 / (E_rr - E_pq) over the basis at zero field.
    Only valid when no state degenerate with the target couples to it.
    """
    terms = interaction_terms(basis, theta, 1)
    Vdd = terms[3] * HARTREE_MHZ * BOHR_RADIUS_UM**3  # h*MHz*um^3
    t = basis.target_index
    col = Vdd[:, t]
    dE = -basis.unperturbed_energies()
    mask = np.abs(col) > 1e-14 * np.abs(col).max()
    mask[t] = False
    if np.any(np.abs(dE[mask]) < 1e-9):
        raise NumericalError("degenerate state couples to the target; perturbation sum undefined")
    return float(np.sum(np.abs(col[mask]) ** 2 / dE[mask]))
