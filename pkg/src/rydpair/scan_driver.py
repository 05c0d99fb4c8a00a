"""Parameter scans of the long-time double-excitation probability.

A scan point runs the full two-atom model at fixed (B, theta, R) and
averages P_rr over a pulse-area window. With the worst-case policy the
electric field is scanned on a grid and the largest average is kept.
Completed points are appended to a JSON-lines checkpoint so an
interrupted scan resumes where it stopped.
"""

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field

import numpy as np

from .atomic_structure import AtomicState, FieldConfig
from .errors import ConfigError, RydpairError
from .pair_interaction import Geometry, PairState, build_pair_basis
from .spin_dynamics import evolve_two_atom_full_model, pulse_area_times

log = logging.getLogger(__name__)

DEFAULT_WINDOW = (4 * math.pi, 8 * math.pi)
DEFAULT_WINDOW_SAMPLES = 64
DEFAULT_E_RANGE = (0.0, 20.0)
DEFAULT_E_STEP = 2.0


@dataclass(frozen=True)
class EPolicy:
    """``fixed`` at ``value`` or ``maximize`` over [E_min, E_max] in steps (mV/cm)."""

    kind: str = "fixed"
    value: float = 0.0
    E_min: float = DEFAULT_E_RANGE[0]
    E_max: float = DEFAULT_E_RANGE[1]
    step: float = DEFAULT_E_STEP

    def __post_init__(self):
        if self.kind not in ("fixed", "maximize"):
            raise ConfigError(f"unknown E policy {self.kind!r}")
        if self.kind == "maximize" and (self.step <= 0 or self.E_max < self.E_min):
            raise ConfigError("maximize policy needs step > 0 and E_max >= E_min")

    def values(self):
        if self.kind == "fixed":
            return [float(self.value)]
        return e_grid(self.E_min, self.E_max, self.step)


def e_grid(E_min, E_max, step):
    n = int(math.floor((E_max - E_min) / step + 1e-9))
    return [round(E_min + k * step, 10) for k in range(n + 1)]


@dataclass
class ScanSpec:
    B_grid: list
    theta_grid: list
    R: float
    omega: float
    E_policy: EPolicy = EPolicy()
    window: tuple = DEFAULT_WINDOW
    window_samples: int = DEFAULT_WINDOW_SAMPLES
    target: tuple = (61, 2, 1.5, 1.5)
    basis: dict = field(default_factory=dict)

    def __post_init__(self):
        self.B_grid = [float(b) for b in self.B_grid]
        self.theta_grid = [float(t) for t in self.theta_grid]
        if not self.B_grid or not self.theta_grid:
            raise ConfigError("scan grids must be non-empty")
        if not self.R > 0 or not self.omega > 0:
            raise ConfigError("R and omega must be positive")
        lo, hi = self.window
        if not 0 <= lo < hi or self.window_samples < 2:
            raise ConfigError("averaging window must satisfy 0 <= start < end with >= 2 samples")

    def key(self):
        """Hash identifying the physics of the scan (used to validate checkpoints)."""
        d = asdict(self)
        d["E_policy"] = asdict(self.E_policy)
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class PointResult:
    i_B: int
    i_theta: int
    B: float
    theta: float
    prr_mean: float = math.nan
    E_star: float = math.nan
    prr_by_E: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    basis_size: int = 0
    coupled_states: int = 0

    def to_json(self):
        d = asdict(self)
        d["prr_by_E"] = {repr(k): v for k, v in self.prr_by_E.items()}
        d["failures"] = {repr(k): v for k, v in self.failures.items()}
        return d

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        d["prr_by_E"] = {float(k): v for k, v in d.get("prr_by_E", {}).items()}
        d["failures"] = {float(k): v for k, v in d.get("failures", {}).items()}
        return cls(**d)


@dataclass
class ScanResult:
    spec: ScanSpec
    points: dict

    def matrix(self, attr="prr_mean"):
        out = np.full((len(self.spec.B_grid), len(self.spec.theta_grid)), np.nan)
        for (i, j), p in self.points.items():
            out[i, j] = getattr(p, attr)
        return out

    def fixed_matrix(self, E=0.0):
        out = np.full((len(self.spec.B_grid), len(self.spec.theta_grid)), np.nan)
        for (i, j), p in self.points.items():
            out[i, j] = p.prr_by_E.get(float(E), math.nan)
        return out


class TwoAtomScanner:
    """Shares one pair basis between all points of a scan."""

    def __init__(self, target=(61, 2, 1.5, 1.5), basis=None, **basis_kw):
        if basis is None:
            state = AtomicState(*target)
            basis = build_pair_basis(PairState(state, state), **basis_kw)
        self.basis = basis

    def long_time_prr(self, B, theta, E, R, omega, window=DEFAULT_WINDOW,
                      samples=DEFAULT_WINDOW_SAMPLES, interaction_scale=1.0):
        """Mean P_rr over ``samples`` uniform pulse areas in ``window``."""
        areas = np.linspace(window[0], window[1], samples)
        times = pulse_area_times(omega, areas)
        traj = evolve_two_atom_full_model(self.basis, omega, Geometry(R, theta), FieldConfig(B, E),
                                          times, interaction_scale=interaction_scale)
        return float(traj.P_rr.mean()), traj

    def worst_case_efield(self, B, theta, R, omega, E_range=DEFAULT_E_RANGE, E_step=DEFAULT_E_STEP,
                          window=DEFAULT_WINDOW, samples=DEFAULT_WINDOW_SAMPLES, E_values=None):
        """Grid search over E; ties resolve to the smallest maximizing E.

        Returns (E*, mean P_rr at E*, {E: mean P_rr}, {E: error message}).
        """
        if E_values is None:
            E_values = e_grid(E_range[0], E_range[1], E_step)
        values, failures = {}, {}
        for E in E_values:
            try:
                values[float(E)] = self.long_time_prr(B, theta, E, R, omega, window, samples)[0]
            except RydpairError as exc:
                failures[float(E)] = f"{type(exc).__name__}: {exc}"
                log.error("B=%g theta=%.2f E=%g failed: %s", B, math.degrees(theta), E, exc)
        if not values:
            return math.nan, math.nan, values, failures
        best = max(values.values())
        E_star = min(e for e, v in values.items() if v == best)
        return E_star, best, values, failures

    def point(self, spec, i, j):
        B, theta = spec.B_grid[i], spec.theta_grid[j]
        res = PointResult(i, j, B, theta, basis_size=self.basis.size)
        E_star, best, values, failures = self.worst_case_efield(
            B, theta, spec.R, spec.omega, window=spec.window, samples=spec.window_samples,
            E_values=spec.E_policy.values())
        res.prr_mean, res.E_star, res.prr_by_E, res.failures = best, E_star, values, failures
        return res


def _read_checkpoint(path, spec_key):
    done = {}
    if not path or not os.path.exists(path):
        return done
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                # a torn final line from an interrupted write
                log.warning("checkpoint %s line %d unreadable; ignored", path, n)
                continue
            if rec.get("spec_key") != spec_key:
                raise ConfigError(f"checkpoint {path} belongs to a different scan spec")
            p = PointResult.from_json(rec["point"])
            done[(p.i_B, p.i_theta)] = p
    return done


def _append_checkpoint(fh, spec_key, point):
    fh.write(json.dumps({"spec_key": spec_key, "point": point.to_json()}) + "\n")
    fh.flush()
    os.fsync(fh.fileno())


def grid_scan(spec, checkpoint=None, workers=1, scanner=None, stop_after=None):
    """Evaluate every (B, theta) point of ``spec``; resumable through ``checkpoint``.

    Points run on a thread pool of ``workers``; only the calling thread
    writes the checkpoint. ``stop_after`` limits the number of new points
    (used to exercise resumption).
    """
    if scanner is None:
        scanner = TwoAtomScanner(spec.target, **spec.basis)
    key = spec.key()
    points = _read_checkpoint(checkpoint, key)
    todo = [(i, j) for i in range(len(spec.B_grid)) for j in range(len(spec.theta_grid))
            if (i, j) not in points]
    if stop_after is not None:
        todo = todo[:stop_after]
    fh = open(checkpoint, "a") if checkpoint else None
    try:
        if workers and workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futs = {pool.submit(scanner.point, spec, i, j): (i, j) for i, j in todo}
                for fut in as_completed(futs):
                    p = fut.result()
                    points[(p.i_B, p.i_theta)] = p
                    if fh:
                        _append_checkpoint(fh, key, p)
        else:
            for i, j in todo:
                p = scanner.point(spec, i, j)
                points[(i, j)] = p
                if fh:
                    _append_checkpoint(fh, key, p)
                log.info("scan point B=%g theta=%.1f deg: <P_rr> = %.4f (E* = %g)",
                         p.B, math.degrees(p.theta), p.prr_mean, p.E_star)
    finally:
        if fh:
            fh.close()
    return ScanResult(spec, points)
