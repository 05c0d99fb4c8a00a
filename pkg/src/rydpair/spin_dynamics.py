"""Quench dynamics: the transverse-field Ising model and the two-atom multilevel model.

Units inside this module: time in microseconds, angular frequencies in
rad/us, couplings U_ij in h*MHz (so the phase of a configuration with
energy U over a time t is 2*pi*U*t). Configurations are uint64 bitmasks
with bit i set when atom i is in the Rydberg state.

The spin Hamiltonian is

    H/hbar = sum_i Omega/2 sigma_x^i - Delta sum_i n_i + 2*pi sum_{i<j} U_ij n_i n_j

evolved with symmetric (Strang) splitting: per-atom flip rotations forward,
the exact diagonal phase, then the flip rotations in reverse order.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from . import _accel
from .errors import ConfigError, NumericalError, ResourceError
from .pair_interaction import pair_spectrum

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_MEMORY_BUDGET = 2 * 1024**3
NORM_TOL = 1e-6
DT_FACTOR = 0.005


# -- geometry --------------------------------------------------------------

@dataclass(frozen=True)
class Lattice:
    """Atom positions (um) in the x-z plane; z is the quantization axis."""

    positions: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "positions", pos)
        if pos.shape[0] == 0:
            raise ConfigError("lattice has no atoms")
        if pos.shape[0] > 64:
            raise ConfigError("at most 64 atoms are supported")
        d = self.distances()
        if pos.shape[0] > 1 and not np.all(d[np.triu_indices(len(pos), 1)] > 0):
            raise ConfigError("two atoms share a position")

    @property
    def n_sites(self):
        return self.positions.shape[0]

    @classmethod
    def ring(cls, n, spacing, phase=0.0):
        """Regular polygon with nearest-neighbour distance ``spacing``."""
        if n < 2:
            raise ConfigError("a ring needs at least two atoms")
        rho = spacing / (2.0 * math.sin(math.pi / n))
        a = phase + TWO_PI * np.arange(n) / n
        return cls(np.column_stack([rho * np.cos(a), rho * np.sin(a)]), f"ring{n}")

    @classmethod
    def square(cls, rows, cols, spacing):
        """Rectangular grid; rows run along z, columns along x."""
        r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
        pos = np.column_stack([c.ravel() * spacing, r.ravel() * spacing])
        return cls(pos, f"square{rows}x{cols}")

    @classmethod
    def pair(cls, R, theta):
        return cls([[0.0, 0.0], [R * math.sin(theta), R * math.cos(theta)]], "pair")

    def distances(self):
        diff = self.positions[None, :, :] - self.positions[:, None, :]
        return np.hypot(diff[..., 0], diff[..., 1])

    def angles(self):
        """theta_ij in [0, pi] between r_j - r_i and the z axis."""
        diff = self.positions[None, :, :] - self.positions[:, None, :]
        d = np.hypot(diff[..., 0], diff[..., 1])
        with np.errstate(invalid="ignore", divide="ignore"):
            c = np.where(d > 0, diff[..., 1] / d, 1.0)
        return np.arccos(np.clip(c, -1.0, 1.0))

    def neighbor_edges(self, max_distance, tol=1e-6):
        """All pairs closer than ``max_distance`` (um)."""
        d = self.distances()
        i, j = np.nonzero(np.triu(d <= max_distance + tol, 1))
        return frozenset(zip(i.tolist(), j.tolist()))


@dataclass
class SpinModel:
    lattice: Lattice
    omega: float
    couplings: np.ndarray
    detuning: float = 0.0

    def __post_init__(self):
        U = np.asarray(self.couplings, dtype=float)
        n = self.lattice.n_sites
        if U.shape != (n, n):
            raise ConfigError(f"couplings must be {n}x{n}")
        if not np.allclose(U, U.T, rtol=0, atol=1e-12 * max(1.0, np.abs(U).max())):
            raise ConfigError("couplings must be symmetric")
        U = 0.5 * (U + U.T)
        np.fill_diagonal(U, 0.0)
        self.couplings = U
        if not (math.isfinite(self.omega) and self.omega >= 0):
            raise ConfigError("omega must be finite and non-negative")

    @property
    def n_sites(self):
        return self.lattice.n_sites

    @classmethod
    def from_potential(cls, lattice, potential, omega, detuning=0.0):
        """U_ij = potential(R_ij, theta_ij) in h*MHz."""
        n = lattice.n_sites
        d, th = lattice.distances(), lattice.angles()
        U = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                U[i, j] = U[j, i] = potential(d[i, j], th[i, j])
        return cls(lattice, omega, U, detuning)


def blockade_edges(couplings, omega, factor=1.0):
    """Pairs with |U_ij| > factor * hbar*Omega (U in h*MHz, omega in rad/us)."""
    U = np.abs(np.asarray(couplings))
    limit = factor * omega / TWO_PI
    i, j = np.nonzero(np.triu(U > limit, 1))
    return frozenset(zip(i.tolist(), j.tolist()))


def build_blockade_graph(lattice, potential, omega, factor=1.0):
    """Blockade graph of ``lattice`` under ``potential``, anisotropy included."""
    return blockade_edges(SpinModel.from_potential(lattice, potential, omega).couplings,
                          omega, factor)


# -- truncated basis ------------------------------------------------------------

@dataclass(eq=False)
class TruncatedBasis:
    configurations: np.ndarray
    edges: frozenset
    n_sites: int
    _flips: list = field(default=None, repr=False)

    @property
    def size(self):
        return self.configurations.size

    def __len__(self):
        return self.size

    def index(self, config):
        k = int(np.searchsorted(self.configurations, np.uint64(config)))
        if k >= self.size or self.configurations[k] != np.uint64(config):
            raise KeyError(f"configuration {config:#x} is not in the basis")
        return k

    def popcounts(self):
        return np.bitwise_count(self.configurations).astype(np.int64)

    def flip_tables(self):
        """Per site, index arrays (src, dst) with dst = src + atom i excited."""
        if self._flips is None:
            cfg = self.configurations
            flips = []
            for i in range(self.n_sites):
                bit = np.uint64(1) << np.uint64(i)
                src = np.nonzero((cfg & bit) == 0)[0]
                target = cfg[src] | bit
                pos = np.searchsorted(cfg, target)
                pos = np.minimum(pos, cfg.size - 1)
                ok = cfg[pos] == target
                flips.append((src[ok].astype(np.int64), pos[ok].astype(np.int64)))
            self._flips = flips
        return self._flips


def _lower_neighbors(n_sites, edges):
    lower = np.zeros(n_sites, dtype=np.uint64)
    for i, j in edges:
        a, b = min(i, j), max(i, j)
        if not 0 <= a < b < n_sites:
            raise ConfigError(f"edge {(i, j)} outside 0..{n_sites - 1}")
        lower[b] |= np.uint64(1) << np.uint64(a)
    return lower


def estimate_basis_bytes(count, n_sites):
    # configs + state + work vector + energies + flip tables (about half the sites per config)
    return int(count * (8 + 16 + 16 + 8 + 8 * n_sites))


def enumerate_truncated_basis(n_sites, edges=frozenset(), memory_budget=DEFAULT_MEMORY_BUDGET,
                              kernels=None):
    """All independent sets of the blockade graph, ascending by bitmask.

    The count is computed first; if the estimated memory exceeds
    ``memory_budget`` bytes a ResourceError is raised before allocating.
    """
    if not 1 <= n_sites <= 64:
        raise ConfigError("n_sites must be between 1 and 64")
    edges = frozenset((min(i, j), max(i, j)) for i, j in edges)
    lower = _lower_neighbors(n_sites, edges)
    count = _accel.count_independent_sets(n_sites, lower)
    need = estimate_basis_bytes(count, n_sites)
    if need > memory_budget:
        raise ResourceError(f"truncated basis has {count} configurations (~{need / 2**30:.1f} GiB), "
                            f"over the budget of {memory_budget / 2**30:.1f} GiB")
    k = kernels or _accel.kernels
    configs = k.independent_sets(n_sites, lower)
    if configs.size != count:
        raise NumericalError(f"enumerated {configs.size} configurations, expected {count}")
    log.info("truncated basis: %d configurations over %d sites", count, n_sites)
    return TruncatedBasis(configs, edges, n_sites)


def full_basis(n_sites, memory_budget=DEFAULT_MEMORY_BUDGET):
    return enumerate_truncated_basis(n_sites, frozenset(), memory_budget)


def configuration_energies(model, basis):
    """Diagonal energies 2*pi*(sum U_ij n_i n_j) - Delta*sum n_i in rad/us."""
    cfg = basis.configurations
    E = np.zeros(cfg.size)
    U = model.couplings
    n = model.n_sites
    bits = [((cfg >> np.uint64(i)) & np.uint64(1)).astype(bool) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if U[i, j] != 0.0:
                E[bits[i] & bits[j]] += U[i, j]
    E *= TWO_PI
    if model.detuning:
        E -= model.detuning * basis.popcounts()
    return E


# -- trajectories -------------------------------------------------------------------

@dataclass
class QuenchTrajectory:
    times: np.ndarray
    omega: float
    f_R: np.ndarray
    P_rr: np.ndarray
    P_kplus: np.ndarray
    norm_error: np.ndarray
    site_occupation: np.ndarray = field(default=None, repr=False)
    states: list = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def pulse_area(self):
        return self.omega * self.times

    def P_plus(self, k):
        """Probability of at least k excitations."""
        if k <= 0:
            return np.ones_like(self.f_R)
        if k >= self.P_kplus.shape[1]:
            return np.zeros_like(self.f_R)
        return self.P_kplus[:, k]

    def records(self):
        out = []
        for i, t in enumerate(self.times):
            out.append({
                "pulse_area": float(self.omega * t),
                "time_us": float(t),
                "f_R": float(self.f_R[i]),
                "P_rr": float(self.P_rr[i]),
                "P_3plus": float(self.P_plus(3)[i]),
                "P_5plus": float(self.P_plus(5)[i]),
                "norm_error": float(self.norm_error[i]),
            })
        return out


def observables(psi, basis, kernels=None):
    """(f_R, P_rr, P_k+ for k = 0..N, per-site <n_i>) for one normalized state."""
    k = kernels or _accel.kernels
    probs = np.abs(psi) ** 2
    occ = k.site_occupations(probs, basis.configurations, basis.n_sites)
    pc = basis.popcounts()
    hist = np.bincount(pc, weights=probs, minlength=basis.n_sites + 1)
    kplus = np.cumsum(hist[::-1])[::-1]
    f_R = float(occ.sum() / basis.n_sites)
    p_rr = float(kplus[2]) if basis.n_sites >= 2 else 0.0
    return f_R, p_rr, kplus, occ


def _record_grid(t_final, record_times):
    if record_times is None:
        record_times = [t_final]
    rec = np.asarray(record_times, dtype=float)
    if rec.ndim != 1 or rec.size == 0:
        raise ConfigError("record_times must be a non-empty 1-d list")
    if np.any(rec < 0) or np.any(np.diff(rec) < 0):
        raise ConfigError("record_times must be non-negative and ascending")
    if t_final is not None and rec[-1] > t_final * (1 + 1e-12):
        raise ConfigError(f"record time {rec[-1]} beyond t_final {t_final}")
    return rec


def default_dt(model, basis=None):
    """0.005 over the largest frequency in cycles/us (Omega/2pi or the coupling scale)."""
    U = np.abs(model.couplings).copy()
    if basis is not None:
        for i, j in basis.edges:
            U[i, j] = U[j, i] = 0.0
    u_max = U.sum(axis=1).max() if U.size else 0.0
    f = max(model.omega / TWO_PI, u_max, abs(model.detuning) / TWO_PI)
    return DT_FACTOR / f if f > 0 else math.inf


def _collect(trajs, psi, basis, t, kernels, keep_states):
    f, prr, kp, occ = observables(psi, basis, kernels)
    trajs["f"].append(f)
    trajs["prr"].append(prr)
    trajs["kp"].append(kp)
    trajs["occ"].append(occ)
    trajs["norm"].append(abs(float(np.vdot(psi, psi).real) - 1.0))
    if keep_states:
        trajs["states"].append(psi.copy())


def _finish(times, omega, acc, keep_states, meta):
    return QuenchTrajectory(np.asarray(times), omega, np.array(acc["f"]), np.array(acc["prr"]),
                            np.array(acc["kp"]), np.array(acc["norm"]), np.array(acc["occ"]),
                            acc["states"] if keep_states else None, meta)


def initial_state(basis):
    psi = np.zeros(basis.size, dtype=complex)
    psi[basis.index(0)] = 1.0
    return psi


def evolve_spin_model(model, basis, t_final=None, dt=None, record_times=None, psi0=None,
                      keep_states=False, kernels=None):
    """Split-step evolution from the all-ground state (or ``psi0``).

    Times are in us. Each interval between record times is split into equal
    steps no longer than ``dt`` (default: :func:`default_dt`). Drive terms
    into configurations absent from ``basis`` are dropped.
    """
    if basis.n_sites != model.n_sites:
        raise ConfigError("basis and model disagree on the number of atoms")
    rec = _record_grid(t_final, record_times)
    k = kernels or _accel.kernels
    if dt is None:
        dt = default_dt(model, basis)
    if not dt > 0:
        raise ConfigError("dt must be positive")
    psi = initial_state(basis) if psi0 is None else np.array(psi0, dtype=complex)
    energies = configuration_energies(model, basis)
    flips = basis.flip_tables()
    acc = {"f": [], "prr": [], "kp": [], "occ": [], "norm": [], "states": []}
    t = 0.0
    cache = {}
    steps_total = 0
    for tr in rec:
        span = tr - t
        if span > 0:
            n = max(1, math.ceil(span / dt - 1e-9))
            h = span / n
            if h not in cache:
                a = model.omega * h / 4.0
                cache[h] = (math.cos(a), math.sin(a), np.exp(-1j * energies * h))
            c, s, phase = cache[h]
            for _ in range(n):
                for src, dst in flips:
                    k.apply_flip_rotation(psi, src, dst, c, s)
                psi *= phase
                for src, dst in reversed(flips):
                    k.apply_flip_rotation(psi, src, dst, c, s)
            steps_total += n
            t = tr
        _collect(acc, psi, basis, t, k, keep_states)
        if acc["norm"][-1] > NORM_TOL:
            raise NumericalError(f"norm drift {acc['norm'][-1]:.2e} at t = {t} us; reduce dt")
    meta = {"dt": float(dt), "steps": steps_total, "basis_size": basis.size,
            "kernel": k.name}
    return _finish(rec, model.omega, acc, keep_states, meta)


def spin_hamiltonian(model, basis):
    """Dense H/hbar (rad/us) over the basis; for oracle use on small systems."""
    H = np.diag(configuration_energies(model, basis)).astype(complex)
    for src, dst in basis.flip_tables():
        H[src, dst] += model.omega / 2.0
        H[dst, src] += model.omega / 2.0
    return H


def evolve_exact(model, basis, record_times, psi0=None, keep_states=False, max_dim=4096):
    """Exact evolution by dense diagonalization (oracle for the split-step)."""
    if basis.size > max_dim:
        raise ResourceError(f"dense oracle limited to {max_dim} states, basis has {basis.size}")
    rec = _record_grid(None, record_times)
    w, v = scipy.linalg.eigh(spin_hamiltonian(model, basis))
    psi0 = initial_state(basis) if psi0 is None else np.asarray(psi0, dtype=complex)
    c0 = v.conj().T @ psi0
    acc = {"f": [], "prr": [], "kp": [], "occ": [], "norm": [], "states": []}
    for t in rec:
        psi = v @ (np.exp(-1j * w * t) * c0)
        _collect(acc, psi, basis, t, None, keep_states)
    return _finish(rec, model.omega, acc, keep_states, {"method": "dense"})


def sparse_spin_hamiltonian(model, basis):
    """H/hbar (rad/us) as a CSR matrix."""
    rows, cols = [], []
    for src, dst in basis.flip_tables():
        rows += [src, dst]
        cols += [dst, src]
    n = basis.size
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        off = scipy.sparse.csr_matrix((np.full(r.size, model.omega / 2.0), (r, c)), shape=(n, n))
    else:
        off = scipy.sparse.csr_matrix((n, n))
    return (off + scipy.sparse.diags(configuration_energies(model, basis))).tocsr()


def _lanczos_propagate(H, psi, t, krylov_dim, tol):
    """exp(-i H t) psi with adaptive Lanczos steps; per-step error estimate below ``tol``."""
    done = 0.0
    psi = psi.astype(complex)
    n_mv = 0
    while done < t * (1 - 1e-14):
        beta0 = np.linalg.norm(psi)
        m = min(krylov_dim, psi.size)
        V = np.empty((m + 1, psi.size), dtype=complex)
        alpha = np.zeros(m)
        beta = np.zeros(m)
        V[0] = psi / beta0
        k = m
        for j in range(m):
            w = H @ V[j]
            n_mv += 1
            alpha[j] = np.vdot(V[j], w).real
            w -= alpha[j] * V[j]
            if j:
                w -= beta[j - 1] * V[j - 1]
            # full re-orthogonalization keeps the small basis clean
            w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
            beta[j] = np.linalg.norm(w)
            if beta[j] < 1e-13 * max(1.0, abs(alpha[j])):
                k = j + 1
                break
            V[j + 1] = w / beta[j]
        if k == 1:
            ev, evec = np.array([alpha[0]]), np.ones((1, 1))
        else:
            ev, evec = scipy.linalg.eigh_tridiagonal(alpha[:k], beta[: k - 1])
        e1 = evec[0].conj()
        resid = beta[k - 1] if k == m else 0.0
        step = t - done
        while True:
            c = evec @ (np.exp(-1j * ev * step) * e1)
            if resid * abs(c[-1]) <= tol or step < 1e-15 * t:
                break
            step *= 0.5
        psi = beta0 * (V[:k].T @ c)
        done += step
    return psi, n_mv


def evolve_krylov(model, basis, record_times, psi0=None, krylov_dim=40, tol=1e-11,
                  keep_states=False):
    """Sparse Krylov evolution; an oracle independent of the split-step for larger systems."""
    rec = _record_grid(None, record_times)
    H = sparse_spin_hamiltonian(model, basis)
    psi = initial_state(basis) if psi0 is None else np.asarray(psi0, dtype=complex)
    acc = {"f": [], "prr": [], "kp": [], "occ": [], "norm": [], "states": []}
    t = 0.0
    total = 0
    for tr in rec:
        if tr > t:
            psi, n_mv = _lanczos_propagate(H, psi, tr - t, krylov_dim, tol)
            total += n_mv
            t = tr
        _collect(acc, psi, basis, t, None, keep_states)
    return _finish(rec, model.omega, acc, keep_states, {"method": "krylov", "matvecs": total})


def _spectral_bounds(H):
    """Gershgorin interval containing the spectrum of the Hermitian CSR matrix ``H``."""
    d = H.diagonal().real
    off = np.asarray(abs(H).sum(axis=1)).ravel() - np.abs(d)
    return float((d - off).min()), float((d + off).max())


def _chebyshev_propagate(H, psi, t, bounds, tol=1e-13):
    """exp(-i H t) psi by Chebyshev expansion over the interval ``bounds``."""
    from scipy.special import jv

    e_min, e_max = bounds
    half = max(0.5 * (e_max - e_min), 1e-12)
    mid = 0.5 * (e_max + e_min)
    tau = half * t
    k_max = int(tau + 12.0 * tau ** (1.0 / 3.0) + 30)
    ks = np.arange(k_max + 1)
    coef = jv(ks, tau) * (-1j) ** (ks % 4)
    coef[1:] *= 2.0
    prev = psi.astype(complex)
    cur = (H @ prev - mid * prev) / half
    out = coef[0] * prev + coef[1] * cur
    n_mv = 1
    for k in range(2, k_max + 1):
        nxt = 2.0 * (H @ cur - mid * cur) / half - prev
        n_mv += 1
        out += coef[k] * nxt
        prev, cur = cur, nxt
        if k > tau and abs(coef[k]) < tol:
            break
    return out * np.exp(-1j * mid * t), n_mv


def evolve_chebyshev(model, basis, record_times, psi0=None, tol=1e-13, keep_states=False):
    """Chebyshev-expansion evolution; exact to ``tol`` for any coupling strength.

    Cost grows with (spectral width) x (time), so it suits moderately large
    bases where the dense oracle is out of reach.
    """
    rec = _record_grid(None, record_times)
    H = sparse_spin_hamiltonian(model, basis)
    bounds = _spectral_bounds(H)
    psi = initial_state(basis) if psi0 is None else np.asarray(psi0, dtype=complex)
    acc = {"f": [], "prr": [], "kp": [], "occ": [], "norm": [], "states": []}
    t = 0.0
    total = 0
    for tr in rec:
        if tr > t:
            psi, n_mv = _chebyshev_propagate(H, psi, tr - t, bounds, tol)
            total += n_mv
            t = tr
        _collect(acc, psi, basis, t, None, keep_states)
    return _finish(rec, model.omega, acc, keep_states, {"method": "chebyshev", "matvecs": total})


def lattice_symmetries(lattice, tol=1e-6):
    """Site permutations induced by in-plane isometries of the lattice.

    Candidates map site 0 onto every site at the same distance from the
    centroid, with and without a mirror. Only maps that send every atom
    onto an atom are kept.
    """
    pos = lattice.positions - lattice.positions.mean(axis=0)
    n = len(pos)
    rad = np.hypot(pos[:, 0], pos[:, 1])
    anchor = int(np.argmax(rad))
    if rad[anchor] < tol:
        return [tuple(range(n))]
    perms = set()
    for mirror in (False, True):
        p = pos * np.array([-1.0, 1.0]) if mirror else pos
        a0 = math.atan2(p[anchor, 1], p[anchor, 0])
        for j in np.nonzero(np.abs(rad - rad[anchor]) < tol)[0]:
            ang = math.atan2(pos[j, 1], pos[j, 0]) - a0
            c, s = math.cos(ang), math.sin(ang)
            q = p @ np.array([[c, s], [-s, c]])
            d = np.hypot(q[:, None, 0] - pos[None, :, 0], q[:, None, 1] - pos[None, :, 1])
            img = d.argmin(axis=1)
            if np.all(d[np.arange(n), img] < tol) and len(set(img.tolist())) == n:
                perms.add(tuple(img.tolist()))
    return sorted(perms)


def _permute_configs(cfg, perm):
    out = np.zeros_like(cfg)
    one = np.uint64(1)
    for i, j in enumerate(perm):
        out |= ((cfg >> np.uint64(i)) & one) << np.uint64(j)
    return out


def evolve_symmetric_exact(model, record_times, perms=None, max_dim=12000):
    """Exact full 2^N evolution inside the symmetric sector of the initial state.

    The all-ground start is invariant under every site permutation that
    leaves the couplings unchanged, so the state never leaves the sector
    spanned by normalized orbit sums. The sector Hamiltonian is dense
    diagonalized, which makes the oracle exact for any coupling strength.
    """
    n = model.n_sites
    U = model.couplings
    if perms is None:
        perms = lattice_symmetries(model.lattice)
    perms = [p for p in perms if np.allclose(U[np.ix_(p, p)], U, rtol=1e-12, atol=0)]
    cfg = np.arange(2 ** n, dtype=np.uint64)
    images = np.stack([_permute_configs(cfg, p) for p in perms])
    rep = images.min(axis=0)
    reps, orbit = np.unique(rep, return_inverse=True)
    dim = reps.size
    if dim > max_dim:
        raise ResourceError(f"symmetric sector has {dim} states (limit {max_dim})")
    size = np.bincount(orbit, minlength=dim).astype(float)
    full = TruncatedBasis(cfg, frozenset(), n)
    energy = configuration_energies(model, full)
    H = np.zeros((dim, dim))
    for i in range(n):
        dst = orbit[(cfg ^ np.uint64(1 << i)).astype(np.int64)]
        np.add.at(H, (dst, orbit), model.omega / 2.0)
    H /= np.sqrt(np.outer(size, size))
    H[np.arange(dim), np.arange(dim)] += energy[reps.astype(np.int64)]
    w, v = scipy.linalg.eigh(H, overwrite_a=True, check_finite=False, driver="evd")
    del H
    c0 = v[orbit[0]].copy()
    pc = np.bitwise_count(reps).astype(np.int64)
    rec = _record_grid(None, record_times)
    f, prr, kp, occ, norm = [], [], [], [], []
    for t in rec:
        probs = np.abs(v @ (np.exp(-1j * w * t) * c0)) ** 2
        hist = np.bincount(pc, weights=probs, minlength=n + 1)
        kplus = np.cumsum(hist[::-1])[::-1]
        f.append(float(probs @ pc) / n)
        prr.append(float(kplus[2]) if n >= 2 else 0.0)
        kp.append(kplus)
        # configurations within an orbit share its population evenly
        occ.append(_accel.kernels.site_occupations((probs / size)[orbit], cfg, n))
        norm.append(abs(probs.sum() - 1.0))
    return QuenchTrajectory(rec, model.omega, np.array(f), np.array(prr), np.array(kp),
                            np.array(norm), np.array(occ), None,
                            {"method": "symmetric-dense", "sector_dim": dim, "group_order": len(perms)})


# -- two-atom multilevel model ---------------------------------------------------------

@dataclass
class TwoAtomModel:
    """Eigen-decomposed Hamiltonian over {gg, g r, r g, coupled pair eigenstates}."""

    omega: float
    detunings: np.ndarray
    couplings: np.ndarray
    energies: np.ndarray = field(repr=False)
    vectors: np.ndarray = field(repr=False)
    pair_count: int = 0
    basis_size: int = 0

    def amplitudes(self, t):
        c0 = self.vectors[0].conj()
        return self.vectors @ (np.exp(-1j * self.energies * t) * c0)


def build_two_atom_model(basis, omega, geometry, fields, max_multipole=None, interaction_scale=1.0,
                         overlap_floor=1e-12):
    """Two-atom Hamiltonian in the frame of the field-shifted |g> -> |r> resonance.

    The laser drives the target level of each atom with Rabi frequency
    ``omega`` (rad/us); pair eigenstates |k> of the full pair Hamiltonian
    enter with their detuning from twice the single-atom resonance and
    couple to |g r> and |r g> through <k|r r>. Eigenstates with
    |<k|rr>|^2 below ``overlap_floor`` decouple and are dropped.
    """
    if basis.target.a != basis.target.b:
        raise ConfigError("the two-atom model needs both atoms in the same target state")
    try:
        i_r = basis.single_states.index(basis.target.a)
    except ValueError as exc:  # pragma: no cover
        raise ConfigError("pair basis lacks the laser target state") from exc
    kw = {} if max_multipole is None else {"max_multipole": max_multipole}
    point = pair_spectrum(basis, fields, geometry.theta, [geometry.R], phi=geometry.phi,
                          keep_vectors="all", interaction_scale=interaction_scale, **kw)[0]
    amp = point.eigenvectors[basis.target_index].conj()
    keep = np.abs(amp) ** 2 >= overlap_floor
    amp = amp[keep]
    det = point.detunings[keep]
    _, U = basis.dressed(fields)
    if U is None:
        weight = 1.0
    else:
        pos = basis.dressing_states.index(basis.target.a)
        weight = float(U[pos, i_r])
    half = 0.5 * omega * weight
    m = amp.size
    H = np.zeros((3 + m, 3 + m), dtype=complex)
    H[0, 1] = H[1, 0] = H[0, 2] = H[2, 0] = half
    H[1, 3:] = half * amp
    H[2, 3:] = half * amp
    H[3:, 1] = np.conj(H[1, 3:])
    H[3:, 2] = np.conj(H[2, 3:])
    H[3:, 3:] = np.diag(TWO_PI * det)
    w, v = scipy.linalg.eigh(H)
    return TwoAtomModel(omega, det, amp, w, v, m, basis.size)


def evolve_two_atom_full_model(basis, omega, geometry, fields, record_times, t_final=None,
                               interaction_scale=1.0, model=None, keep_states=False):
    """P_rr and single-excitation observables of the full two-atom model.

    Time evolution is exact (one diagonalization); readout counts any pair
    eigenstate as doubly excited.
    """
    rec = _record_grid(t_final, record_times)
    if model is None:
        model = build_two_atom_model(basis, omega, geometry, fields,
                                     interaction_scale=interaction_scale)
    p_rr, f_R, p1, norms, states = [], [], [], [], []
    for t in rec:
        a = model.amplitudes(t)
        prob = np.abs(a) ** 2
        prr = float(prob[3:].sum())
        single = float(prob[1] + prob[2])
        p_rr.append(prr)
        p1.append(single + prr)
        f_R.append(0.5 * single + prr)
        norms.append(abs(prob.sum() - 1.0))
        if keep_states:
            states.append(a)
    p_rr = np.array(p_rr)
    kplus = np.column_stack([np.ones_like(p_rr), np.array(p1), p_rr])
    meta = {"pair_states": model.basis_size, "coupled_states": model.pair_count,
            "R_um": geometry.R, "theta": geometry.theta, "B": fields.B, "E": fields.E}
    return QuenchTrajectory(rec, omega, np.array(f_R), p_rr, kplus, np.array(norms), None,
                            states if keep_states else None, meta)


def two_atom_spin_model(R, theta, U, omega):
    """Spin-1/2 model of a single pair with coupling ``U`` (h*MHz)."""
    lat = Lattice.pair(R, theta)
    return SpinModel(lat, omega, np.array([[0.0, U], [U, 0.0]]))


def pulse_area_times(omega, areas):
    """Convert pulse areas Omega*tau to times in us."""
    if omega <= 0:
        raise ConfigError("omega must be positive to convert pulse areas")
    return np.asarray(areas, dtype=float) / omega
