"""Single-atom Rydberg structure.

Quantum-defect level energies, Numerov radial wavefunctions on a
square-root radial grid, radial and angular multipole matrix elements, and
the Zeeman and Stark terms for fields along the quantization axis.
"""

import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import _accel
from .angular import wigner_3j, wigner_6j
from .constants import (
    EFIELD_AU_PER_MVCM,
    G_ELECTRON,
    G_ORBITAL,
    HARTREE_MHZ,
    MU_B_MHZ_PER_GAUSS,
    reduced_rydberg_ghz,
)
from .errors import (
    ConfigError,
    ConsistencyError,
    DataError,
    IntegrationError,
    MissingDataError,
    OutOfValidityError,
)

SPIN = 0.5
DATA_ENV = "RYDPAIR_DATA_DIR"
DEFECT_FILE = "quantum_defects.yaml"


@dataclass(frozen=True, order=True)
class AtomicState:
    """One Rydberg level |n l j m_j>."""

    n: int
    l: int
    j: float
    m_j: float

    def __post_init__(self):
        if self.n < 1 or not 0 <= self.l < self.n:
            raise ValueError(f"invalid n, l = {self.n}, {self.l}")
        if self.j not in (self.l - 0.5, self.l + 0.5) or self.j < 0.5:
            raise ValueError(f"j = {self.j} incompatible with l = {self.l}")
        if abs(self.m_j) > self.j or (self.j - self.m_j) % 1:
            raise ValueError(f"m_j = {self.m_j} incompatible with j = {self.j}")
        # normalise numeric types so equal states hash equally
        object.__setattr__(self, "j", float(self.j))
        object.__setattr__(self, "m_j", float(self.m_j))

    @property
    def level(self):
        """(n, l, j) without the magnetic quantum number."""
        return (self.n, self.l, self.j)

    @property
    def parity(self):
        return (-1) ** self.l

    def label(self):
        letters = "SPDFGHIKLM"
        lchar = letters[self.l] if self.l < len(letters) else f"[l={self.l}]"
        return f"{self.n}{lchar}{int(2 * self.j)}/2,m={int(2 * self.m_j)}/2"

    def __str__(self):
        return self.label()


@dataclass(frozen=True)
class QuantumDefectChannel:
    """Rydberg-Ritz defect expansion for one (l, j) channel."""

    l: int
    j: float
    delta_coeffs: tuple
    valid_n_min: int = 1
    source_citation: str = ""

    def defect(self, n):
        d0 = self.delta_coeffs[0]
        x = (n - d0) ** -2
        return d0 + sum(c * x ** (i + 1) for i, c in enumerate(self.delta_coeffs[1:]))

    def n_star(self, n):
        if n < self.valid_n_min:
            raise OutOfValidityError(
                f"n = {n} below valid_n_min = {self.valid_n_min} for channel l={self.l}, j={self.j}")
        return n - self.defect(n)

    def check(self):
        d0 = self.delta_coeffs[0]
        n = max(self.valid_n_min, 1)
        if n - self.defect(n) <= 0:
            raise DataError(f"non-positive effective quantum number at n = {n} (l={self.l}, j={self.j})")
        if len(self.delta_coeffs) > 2 and self.delta_coeffs[2] != 0:
            t2 = abs(self.delta_coeffs[1] / (n - d0) ** 2)
            t4 = abs(self.delta_coeffs[2] / (n - d0) ** 4)
            if not t4 < t2:
                raise DataError(f"defect expansion not convergent at n = {n} (l={self.l}, j={self.j})")


@dataclass(frozen=True)
class DefectTable:
    """Quantum-defect channels of one species plus its mass-corrected Rydberg constant."""

    species: str
    mass_u: float | None
    channels: tuple = field(default_factory=tuple)
    data_version: str = ""
    core_radius: float = 2.0

    @property
    def rydberg_ghz(self):
        return reduced_rydberg_ghz(self.mass_u)

    @property
    def max_l(self):
        return max(c.l for c in self.channels)

    def channel(self, l, j):
        for c in self.channels:
            if c.l == l and c.j == j:
                return c
        raise MissingDataError(f"no quantum-defect data for {self.species} channel l={l}, j={j}")

    def n_star(self, n, l, j):
        return self.channel(l, j).n_star(n)

    @classmethod
    def hydrogenic(cls, max_l=30, mass_u=None):
        """Zero-defect table; ``mass_u=None`` uses the infinite-mass Rydberg constant."""
        chans = []
        for l in range(max_l + 1):
            for j in ((0.5,) if l == 0 else (l - 0.5, l + 0.5)):
                chans.append(QuantumDefectChannel(l, j, (0.0, 0.0, 0.0), 1, "hydrogenic"))
        return cls("H", mass_u, tuple(chans), "hydrogenic", core_radius=0.05)


_CHANNEL_KEYS = {"l", "j", "delta0", "delta2", "delta4", "valid_n_min", "source_citation"}
_SPECIES_KEYS = {"mass_u", "core_radius_bohr", "channels"}
_FILE_KEYS = {"schema_version", "data_version", "species"}


def data_dir():
    env = os.environ.get(DATA_ENV)
    if env:
        return Path(env)
    return Path(str(resources.files("rydpair") / "data"))


def parse_defect_file(text, species="Rb87"):
    """Parse the YAML defect table; unknown keys are rejected."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise DataError(f"malformed quantum-defect file: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataError("quantum-defect file must be a mapping")
    extra = set(doc) - _FILE_KEYS
    if extra:
        raise DataError(f"unknown top-level fields in defect file: {sorted(extra)}")
    if doc.get("schema_version") != 1:
        raise DataError(f"unsupported defect schema_version {doc.get('schema_version')!r}")
    all_species = doc.get("species") or {}
    if species not in all_species:
        raise MissingDataError(f"species {species!r} not in defect file (have {sorted(all_species)})")
    entry = all_species[species]
    extra = set(entry) - _SPECIES_KEYS
    if extra:
        raise DataError(f"unknown fields for species {species}: {sorted(extra)}")
    channels = []
    for rec in entry["channels"]:
        extra = set(rec) - _CHANNEL_KEYS
        if extra:
            raise DataError(f"unknown channel fields {sorted(extra)} in record {rec}")
        missing = _CHANNEL_KEYS - set(rec)
        if missing:
            raise DataError(f"channel record {rec} lacks {sorted(missing)}")
        ch = QuantumDefectChannel(
            int(rec["l"]), float(rec["j"]),
            (float(rec["delta0"]), float(rec["delta2"]), float(rec["delta4"])),
            int(rec["valid_n_min"]), str(rec["source_citation"]))
        ch.check()
        channels.append(ch)
    return DefectTable(species, float(entry["mass_u"]), tuple(channels),
                       str(doc.get("data_version", "")), float(entry.get("core_radius_bohr", 2.0)))


@lru_cache(maxsize=8)
def _load_cached(path, species):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read defect file {path}: {exc}") from exc
    return parse_defect_file(text, species)


def load_defect_table(species="Rb87", path=None):
    if path is None:
        path = data_dir() / DEFECT_FILE
    return _load_cached(str(path), species)


# -- energies --------------------------------------------------------------

def state_energy(state, defects):
    """Level energy in h*GHz below the ionisation threshold (negative)."""
    ns = defects.n_star(state.n, state.l, state.j)
    return -defects.rydberg_ghz / ns**2


def lande_g(l, j, s=SPIN):
    jj, ll, ss = j * (j + 1), l * (l + 1), s * (s + 1)
    return (G_ORBITAL * (jj - ss + ll) + G_ELECTRON * (jj + ss - ll)) / (2 * jj)


# -- radial problem ----------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Square-root radial grid x = sqrt(r), x_k = k * step (shared by all states).

    The inner cutoff is 1e-3 * n*^2 Bohr radii, capped at the species core
    radius. The outer edge sits at ``outer_factor`` * n* (n* + 15), beyond
    the outer classical turning point.
    """

    step: float = 0.005
    inner_scale: float = 1e-3
    outer_factor: float = 2.0


@dataclass(frozen=True)
class RadialSolution:
    grid: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    n_nodes: int
    k0: int
    step: float
    n_star: float
    l: int

    @property
    def x(self):
        return np.sqrt(self.grid)

    def expectation(self, power):
        return _integrate(self, self, power)


def _numerov_radial(n_star, l, r_core, grid_spec):
    h = grid_spec.step
    r_inner = min(grid_spec.inner_scale * n_star**2, r_core)
    r_outer = grid_spec.outer_factor * n_star * (n_star + 15.0)
    k_in = max(1, int(math.floor(math.sqrt(r_inner) / h)))
    k_out = int(math.ceil(math.sqrt(r_outer) / h)) + 1
    x = np.arange(k_in, k_out + 1) * h
    g = (2 * l + 0.5) * (2 * l + 1.5) / x**2 - 8.0 + 4.0 * x**2 / n_star**2
    X = _accel.kernels.numerov_inward(g, h, 1e-12)
    u = np.sqrt(x) * X
    if not np.all(np.isfinite(u)):
        raise IntegrationError(
            f"non-finite Numerov solution (n*={n_star:.6f}, l={l}, r_inner={r_inner:.3g}, "
            f"r_outer={r_outer:.3g}, points={x.size})")
    # classically forbidden core region: discard the part growing towards r = 0
    allowed = np.nonzero(g <= 0)[0]
    if allowed.size and allowed[0] > 0:
        inner = np.abs(u[: allowed[0]])
        kmin = int(np.argmin(inner))
        if kmin > 0 and inner[0] > 10.0 * inner[kmin]:
            u[:kmin] = 0.0
    start = int(np.argmax(u != 0.0))
    if np.argmax(np.abs(u)) == start and start < u.size // 2:
        raise IntegrationError(
            f"wavefunction diverges at the inner boundary (n*={n_star:.6f}, l={l}, "
            f"r_inner={x[start] ** 2:.3g}, |u| there={abs(u[start]):.3g})")
    norm = np.sum(u * u * 2 * x) * h
    u /= math.sqrt(norm)
    big = np.abs(u) > 1e-3 * np.abs(u).max()
    signs = np.sign(u[big])
    nodes = int(np.count_nonzero(signs[1:] != signs[:-1]))
    return RadialSolution(x**2, u, nodes, k_in, h, n_star, l)


@lru_cache(maxsize=4096)
def _cached_radial(n_star, l, r_core, grid_spec):
    return _numerov_radial(n_star, l, r_core, grid_spec)


def radial_wavefunction(state, defects, grid_spec=GridSpec()):
    """Normalized reduced radial wavefunction u(r) = r R(r) of ``state``."""
    ns = defects.n_star(state.n, state.l, state.j)
    return _cached_radial(round(ns, 12), state.l, defects.core_radius, grid_spec)


def _integrate(a, b, power):
    if a.step != b.step:
        raise ConsistencyError(f"radial grids differ in step ({a.step} vs {b.step})")
    lo = max(a.k0, b.k0)
    hi = min(a.k0 + a.u.size, b.k0 + b.u.size)
    if hi <= lo:
        return 0.0
    ua = a.u[lo - a.k0: hi - a.k0]
    ub = b.u[lo - b.k0: hi - b.k0]
    x = np.arange(lo, hi) * a.step
    return float(np.sum(ua * ub * x ** (2 * power) * 2 * x) * a.step)


def radial_matrix_element(s1, s2, power, defects, grid_spec=GridSpec()):
    """<u1| r^power |u2> in Bohr radii^power."""
    return _radial_level(s1.level, s2.level, power, defects, grid_spec)


@lru_cache(maxsize=200_000)
def _radial_level(lev1, lev2, power, defects, grid_spec):
    if lev2 < lev1:
        return _radial_level(lev2, lev1, power, defects, grid_spec)
    a = radial_wavefunction(AtomicState(*lev1, lev1[2]), defects, grid_spec)
    b = radial_wavefunction(AtomicState(*lev2, lev2[2]), defects, grid_spec)
    return _integrate(a, b, power)


# -- angular factors ---------------------------------------------------------

@lru_cache(maxsize=None)
def angular_multipole(l1, j1, m1, l2, j2, m2, kappa, q):
    """<l1 s j1 m1| C^kappa_q |l2 s j2 m2> for the normalised spherical harmonic C."""
    if m1 != m2 + q:
        return 0.0
    lred = wigner_3j(l1, kappa, l2, 0, 0, 0)
    if lred == 0.0:
        return 0.0
    lred *= (-1) ** l1 * math.sqrt((2 * l1 + 1) * (2 * l2 + 1))
    jred = ((-1) ** round(l1 + SPIN + j2 + kappa) * math.sqrt((2 * j1 + 1) * (2 * j2 + 1))
            * wigner_6j(l1, j1, SPIN, j2, l2, kappa) * lred)
    return (-1) ** round(j1 - m1) * wigner_3j(j1, kappa, j2, -m1, q, m2) * jred


def multipole_matrix(basis, kappa, q, defects, grid_spec=GridSpec()):
    """Matrix of r^kappa C^kappa_q over ``basis`` (atomic units)."""
    levels = sorted({s.level for s in basis})
    lev_index = {lev: i for i, lev in enumerate(levels)}
    radial = np.zeros((len(levels), len(levels)))
    for i, a in enumerate(levels):
        for k, b in enumerate(levels[i:], start=i):
            if abs(a[1] - b[1]) > kappa or (a[1] + b[1] + kappa) % 2:
                continue
            radial[i, k] = radial[k, i] = _radial_level(a, b, kappa, defects, grid_spec)
    angs = sorted({(s.l, s.j, s.m_j) for s in basis})
    ang_index = {a: i for i, a in enumerate(angs)}
    angular = np.array([[angular_multipole(*a, *b, kappa, q) for b in angs] for a in angs])
    li = np.array([lev_index[s.level] for s in basis])
    ai = np.array([ang_index[(s.l, s.j, s.m_j)] for s in basis])
    return radial[np.ix_(li, li)] * angular[np.ix_(ai, ai)]


# -- single-atom Hamiltonian ---------------------------------------------------

@dataclass(frozen=True)
class FieldConfig:
    """Magnetic field ``B`` (Gauss) and electric field ``E`` (mV/cm), both along z."""

    B: float = 0.0
    E: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.B) and math.isfinite(self.E)):
            raise ConfigError(f"field values must be finite (B={self.B}, E={self.E})")


def single_atom_hamiltonian(basis, fields, defects, grid_spec=GridSpec(), energy_offset=0.0):
    """Hamiltonian over ``basis`` in h*MHz.

    Diagonal level energies (minus ``energy_offset``, MHz), the linear Zeeman
    shift g_j m_j mu_B B, and the Stark coupling e E z between levels of
    opposite parity with equal m_j.
    """
    energies = np.array([state_energy(s, defects) * 1e3 for s in basis]) - energy_offset
    zeeman = np.array([lande_g(s.l, s.j) * s.m_j for s in basis]) * MU_B_MHZ_PER_GAUSS * fields.B
    H = np.diag(energies + zeeman)
    if fields.E != 0.0:
        z = multipole_matrix(basis, 1, 0, defects, grid_spec)
        H = H + z * (fields.E * EFIELD_AU_PER_MVCM * HARTREE_MHZ)
    return H


def rydberg_basis(n_range, l_max, defects=None, m_j=None):
    """All |n l j m_j> with n in ``n_range`` and l <= l_max, ordered by (n, l, j, m_j)."""
    out = []
    for n in n_range:
        for l in range(min(l_max, n - 1) + 1):
            for j in ((0.5,) if l == 0 else (l - 0.5, l + 0.5)):
                if defects is not None:
                    try:
                        defects.channel(l, j)
                    except MissingDataError:
                        continue
                for tm in range(-int(2 * j), int(2 * j) + 1, 2):
                    if m_j is None or tm / 2 in m_j:
                        out.append(AtomicState(n, l, j, tm / 2))
    return out
