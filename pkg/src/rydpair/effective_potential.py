"""Single-curve reduction of pair spectra and anisotropic C6 fits.

The curve that follows |rr> is picked at the largest distance (where it is
the maximal-overlap eigenstate) and followed inward by eigenvector
continuity. Its energy relative to the field-shifted non-interacting pair
is the effective interaction U(R, theta) of the spin-1/2 model.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .atomic_structure import AtomicState, FieldConfig
from .errors import ConfigError, InsufficientDataError, RydpairError, TrackingWarning
from .pair_interaction import DEFAULT_MAX_MULTIPOLE, PairState, build_pair_basis, pair_spectrum

log = logging.getLogger(__name__)

DEFAULT_R_GRID = tuple(np.round(np.arange(6.0, 20.0 + 1e-9, 0.25), 6))
DEFAULT_OVERLAP_FLOOR = 0.5
DEFAULT_FIT_RMIN = 8.0
MIN_FIT_SAMPLES = 5


@dataclass
class EffectiveCurve:
    """Tracked potential ``U`` (h*MHz) against ``R`` (um) at one angle."""

    theta: float
    R: np.ndarray
    U: np.ndarray
    overlap: np.ndarray
    fields: FieldConfig = FieldConfig()
    offset: float = 0.0
    ambiguous: np.ndarray = None

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        self.U = np.asarray(self.U, dtype=float)
        self.overlap = np.asarray(self.overlap, dtype=float)
        if self.ambiguous is None:
            self.ambiguous = np.zeros(self.R.size, dtype=bool)
        if np.any(np.diff(self.R) <= 0):
            raise ConfigError("curve samples must be sorted by strictly increasing R")
        if not np.all(np.isfinite(self.U)):
            raise RydpairError("effective curve has non-finite samples")

    @property
    def samples(self):
        return list(zip(self.R.tolist(), self.U.tolist(), self.overlap.tolist()))

    def __call__(self, R):
        return np.interp(R, self.R, self.U)


@dataclass(frozen=True)
class C6Fit:
    theta: float
    c6: float
    fit_window_Rmin: float
    max_relative_residual: float
    n_samples: int

    def __call__(self, R):
        return self.c6 / np.asarray(R, dtype=float) ** 6


def _continuity_pick(point, prev_vec):
    if prev_vec is None or point.eigenvectors is None:
        return point.dominant, None
    proj = np.abs(prev_vec @ point.eigenvectors) ** 2
    j = int(np.argmax(proj))
    return int(point.vector_indices[j]), point.eigenvectors[:, j]


def track_dominant_curve(spectrum, overlap_floor=DEFAULT_OVERLAP_FLOOR):
    """Follow the |rr> curve from the largest R inward.

    Needs eigenvectors on the spectrum points (``keep_vectors`` other than
    None) for continuity; without them the maximal-overlap state is taken at
    every R. Samples whose overlap falls below ``overlap_floor`` are flagged
    in ``ambiguous`` and reported with a TrackingWarning.
    """
    if not spectrum:
        raise InsufficientDataError("empty spectrum")
    pts = sorted(spectrum, key=lambda p: p.R)
    n = len(pts)
    U = np.empty(n)
    ov = np.empty(n)
    far = pts[-1]
    k = far.dominant
    if far.overlaps[k] < 0.99:
        warnings.warn(f"largest-R overlap is only {far.overlaps[k]:.3f}; extend the R grid",
                      TrackingWarning, stacklevel=2)
    vec = None
    if far.eigenvectors is not None:
        vec = far.vectors_for(np.array([k]))[:, 0]
    U[-1] = far.detunings[k]
    ov[-1] = far.overlaps[k]
    for i in range(n - 2, -1, -1):
        p = pts[i]
        k, new = _continuity_pick(p, vec)
        if new is not None:
            vec = new
        U[i] = p.detunings[k]
        ov[i] = p.overlaps[k]
    bad = ov < overlap_floor
    if bad.any():
        warnings.warn(f"tracked overlap below {overlap_floor} at R = {np.round([p.R for p, b in zip(pts, bad) if b], 3).tolist()} um",
                      TrackingWarning, stacklevel=2)
    return EffectiveCurve(far.theta, [p.R for p in pts], U, ov, far.fields, far.reference, bad)


def fit_c6(curve, R_min=DEFAULT_FIT_RMIN):
    """Least-squares U = C6 x with x = 1/R^6 over samples with R >= R_min."""
    sel = curve.R >= R_min - 1e-12
    if sel.sum() < MIN_FIT_SAMPLES:
        raise InsufficientDataError(
            f"{int(sel.sum())} samples with R >= {R_min} um; at least {MIN_FIT_SAMPLES} needed")
    x = curve.R[sel] ** -6.0
    u = curve.U[sel]
    c6 = float(x @ u / (x @ x))
    with np.errstate(divide="ignore", invalid="ignore"):
        res = np.abs(u - c6 * x) / np.abs(u)
    res = np.where(u == 0, np.where(c6 * x == 0, 0.0, np.inf), res)
    return C6Fit(curve.theta, c6, float(R_min), float(res.max()), int(sel.sum()))


@dataclass
class ProfileEntry:
    theta: float
    c6: float = math.nan
    U_eval: float = math.nan
    fit: C6Fit = None
    curve: EffectiveCurve = field(default=None, repr=False)
    error: str = None


def c6_angular_profile(target, fields, theta_list, R_eval=9.0, R_grid=DEFAULT_R_GRID,
                       R_min=DEFAULT_FIT_RMIN, basis=None, max_multipole=DEFAULT_MAX_MULTIPOLE,
                       workers=1, **basis_kw):
    """Spectrum, tracking and C6 fit for every angle in ``theta_list`` (radians).

    ``U_eval`` is the tracked potential at ``R_eval`` when it lies inside the
    R grid, else the fitted C6/R_eval^6. A failing angle is reported in its
    entry's ``error`` and the sweep continues.
    """
    if basis is None:
        if isinstance(target, AtomicState):
            target = PairState(target, target)
        basis = build_pair_basis(target, max_multipole=max_multipole, **basis_kw)
    out = []
    for theta in theta_list:
        entry = ProfileEntry(float(theta))
        try:
            spec = pair_spectrum(basis, fields, theta, R_grid, max_multipole, workers=workers)
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", TrackingWarning)
                curve = track_dominant_curve(spec)
            for w in caught:
                log.warning("theta = %.2f deg: %s", math.degrees(theta), w.message)
            fit = fit_c6(curve, R_min)
            entry.curve, entry.fit, entry.c6 = curve, fit, fit.c6
            if curve.R[0] <= R_eval <= curve.R[-1]:
                entry.U_eval = float(curve(R_eval))
            else:
                entry.U_eval = float(fit(R_eval))
        except RydpairError as exc:
            entry.error = f"{type(exc).__name__}: {exc}"
            log.error("theta = %.2f deg failed: %s", math.degrees(theta), exc)
        out.append(entry)
    return out


class EffectivePotential:
    """U(R, theta) in h*MHz from tracked curves at a set of angles.

    Inside a curve's R range the exact tracked value is used, outside it
    the curve's C6/R^6; between angle nodes values are interpolated
    linearly. With ``fold`` angles above pi/2 map to pi - theta, which is
    exact for fields along z.
    """

    def __init__(self, thetas, curves, fits, fold=True):
        order = np.argsort(thetas)
        self.thetas = np.asarray(thetas, dtype=float)[order]
        self.curves = [curves[i] for i in order]
        self.fits = [fits[i] for i in order]
        self.fold = fold
        if self.thetas.size == 0:
            raise ConfigError("effective potential needs at least one angle")

    @classmethod
    def from_profile(cls, entries, fold=True):
        good = [e for e in entries if e.error is None]
        if not good:
            raise InsufficientDataError("no angle of the profile succeeded")
        return cls([e.theta for e in good], [e.curve for e in good], [e.fit for e in good], fold)

    @classmethod
    def van_der_waals(cls, thetas, c6_values, fold=True):
        """Pure C6(theta)/R^6 potential from tabulated coefficients."""
        fits = [C6Fit(t, float(c), math.nan, math.nan, 0) for t, c in zip(thetas, c6_values)]
        return cls(list(thetas), [None] * len(fits), fits, fold)

    def _node(self, i, R):
        curve = self.curves[i]
        if curve is not None and curve.R[0] <= R <= curve.R[-1]:
            return float(curve(R))
        return float(self.fits[i](R))

    def c6(self, theta):
        theta = self._fold(theta)
        return float(np.interp(theta, self.thetas, [f.c6 for f in self.fits]))

    def _fold(self, theta):
        theta = abs(float(theta)) % (2 * math.pi)
        if theta > math.pi:
            theta = 2 * math.pi - theta
        if self.fold and theta > math.pi / 2:
            theta = math.pi - theta
        return theta

    def __call__(self, R, theta):
        theta = self._fold(theta)
        t = self.thetas
        if theta <= t[0] or t.size == 1:
            return self._node(0, R)
        if theta >= t[-1]:
            return self._node(t.size - 1, R)
        i = int(np.searchsorted(t, theta)) - 1
        w = (theta - t[i]) / (t[i + 1] - t[i])
        return (1 - w) * self._node(i, R) + w * self._node(i + 1, R)


def build_effective_potential(target, fields, theta_list=None, R_grid=DEFAULT_R_GRID,
                              R_min=DEFAULT_FIT_RMIN, basis=None, workers=1, **basis_kw):
    """Tracked-curve potential over an angle grid (default 0..90 deg, 15 deg steps).

    With both fields along z the pair spectrum is invariant under atom
    exchange (n -> -n) and under rotations about z, so U(theta) equals
    U(pi - theta) at any B and E and angles above pi/2 are folded back.
    """
    if theta_list is None:
        theta_list = np.radians(np.arange(0.0, 90.0 + 1e-9, 15.0))
    entries = c6_angular_profile(target, fields, theta_list, R_grid=R_grid, R_min=R_min,
                                 basis=basis, workers=workers, **basis_kw)
    return EffectivePotential.from_profile(entries), entries
