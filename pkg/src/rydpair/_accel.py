"""Hot inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin with the same signature. The backend is
picked once at import time: numba is used unless the environment variable
``RYDPAIR_NUMBA`` is set to ``0`` (or numba is not importable). Both sets
stay reachable as :data:`numpy_kernels` and :data:`numba_kernels` so the
benchmark and the equivalence tests can drive them side by side.
"""

import os
from types import SimpleNamespace

import numpy as np

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("RYDPAIR_NUMBA", "1") != "0"


# -- numpy reference implementations -------------------------------------

def _numerov_inward_np(g, h, x_start):
    """Integrate X'' = g X inward from the last grid point.

    Returns the solution array, with X[-1] = 0 and X[-2] = ``x_start``.
    The recursion is sequential, so this twin is a plain Python loop.
    """
    n = g.shape[0]
    out = np.zeros(n)
    f = 1.0 - h * h * g / 12.0
    out[n - 2] = x_start
    for k in range(n - 2, 0, -1):
        out[k - 1] = ((12.0 - 10.0 * f[k]) * out[k] - f[k + 1] * out[k + 1]) / f[k - 1]
    return out


def _independent_sets_np(n_sites, lower_neighbors):
    """All independent sets as ascending uint64 bitmasks.

    ``lower_neighbors[v]`` is the bitmask of neighbours of v with index < v.
    Adding sites in increasing order keeps the list sorted: configurations
    gaining bit v are all larger than the ones that do not.
    """
    configs = np.zeros(1, dtype=np.uint64)
    for v in range(n_sites):
        mask = np.uint64(lower_neighbors[v])
        ok = configs[(configs & mask) == 0]
        configs = np.concatenate([configs, ok | np.uint64(1 << v)])
    return configs


def _apply_flip_rotation_np(psi, src, dst, c, s):
    """In place: (a, b) -> (c a - i s b, -i s a + c b) on index pairs."""
    a = psi[src]
    b = psi[dst]
    psi[src] = c * a - 1j * s * b
    psi[dst] = c * b - 1j * s * a


def _site_occupations_np(probs, configs, n_sites):
    out = np.empty(n_sites)
    for i in range(n_sites):
        bit = ((configs >> np.uint64(i)) & np.uint64(1)).astype(bool)
        out[i] = probs[bit].sum()
    return out


def _count_independent_sets_np(n_sites, lower_neighbors):
    # frontier dynamic programme, generic in the site ordering
    last_use = list(range(n_sites))
    for v in range(n_sites):
        m = int(lower_neighbors[v])
        u = 0
        while m:
            if m & 1:
                last_use[u] = max(last_use[u], v)
            m >>= 1
            u += 1
    states = {0: 1}
    for v in range(n_sites):
        lower = int(lower_neighbors[v])
        new = {}
        for occ, cnt in states.items():
            new[occ] = new.get(occ, 0) + cnt
            if not occ & lower:
                key = occ | (1 << v)
                new[key] = new.get(key, 0) + cnt
        # forget sites that no later site can conflict with
        drop = 0
        for u in range(v + 1):
            if last_use[u] <= v:
                drop |= 1 << u
        states = {}
        for occ, cnt in new.items():
            key = occ & ~drop
            states[key] = states.get(key, 0) + cnt
    return sum(states.values())


numpy_kernels = SimpleNamespace(
    name="numpy",
    numerov_inward=_numerov_inward_np,
    independent_sets=_independent_sets_np,
    apply_flip_rotation=_apply_flip_rotation_np,
    site_occupations=_site_occupations_np,
)


# -- numba versions ------------------------------------------------------

if HAS_NUMBA:
    @numba.njit(cache=True)
    def _numerov_inward_nb(g, h, x_start):
        n = g.shape[0]
        out = np.zeros(n)
        f = 1.0 - h * h * g / 12.0
        out[n - 2] = x_start
        for k in range(n - 2, 0, -1):
            out[k - 1] = ((12.0 - 10.0 * f[k]) * out[k] - f[k + 1] * out[k + 1]) / f[k - 1]
        return out

    @numba.njit(cache=True)
    def _independent_sets_nb(n_sites, lower_neighbors):
        # grow site by site, same ordering as the numpy twin
        counts = 1
        buf = np.zeros(1, dtype=np.uint64)
        for v in range(n_sites):
            mask = lower_neighbors[v]
            add = 0
            for i in range(counts):
                if buf[i] & mask == 0:
                    add += 1
            new = np.empty(counts + add, dtype=np.uint64)
            new[:counts] = buf[:counts]
            k = counts
            bit = np.uint64(1) << np.uint64(v)
            for i in range(counts):
                if buf[i] & mask == 0:
                    new[k] = buf[i] | bit
                    k += 1
            buf = new
            counts += add
        return buf

    @numba.njit(cache=True)
    def _apply_flip_rotation_nb(psi, src, dst, c, s):
        for k in range(src.shape[0]):
            i = src[k]
            j = dst[k]
            a = psi[i]
            b = psi[j]
            psi[i] = c * a - 1j * s * b
            psi[j] = c * b - 1j * s * a

    @numba.njit(cache=True)
    def _site_occupations_nb(probs, configs, n_sites):
        out = np.zeros(n_sites)
        for k in range(configs.shape[0]):
            c = configs[k]
            p = probs[k]
            i = 0
            while c:
                if c & np.uint64(1):
                    out[i] += p
                c >>= np.uint64(1)
                i += 1
        return out

    numba_kernels = SimpleNamespace(
        name="numba",
        numerov_inward=_numerov_inward_nb,
        independent_sets=_independent_sets_nb,
        apply_flip_rotation=_apply_flip_rotation_nb,
        site_occupations=_site_occupations_nb,
    )
else:  # pragma: no cover
    numba_kernels = None


kernels = numba_kernels if USE_NUMBA else numpy_kernels


def count_independent_sets(n_sites, lower_neighbors):
    """Exact number of independent sets, without materialising them."""
    return _count_independent_sets_np(n_sites, np.asarray(lower_neighbors, dtype=np.uint64))
