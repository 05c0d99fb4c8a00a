"""Command-line entry point: ``rydpair MODE [CONFIG] [overrides]``.

Exit codes: 0 ok, 1 unexpected, 2 config, 3 data, 4 numerical, 5 resource.
"""

import argparse
import dataclasses
import logging
import math
import os
import sys
import time

import numpy as np

from .config import MODES, ExperimentConfig, apply_overrides, parse_config
from .errors import ConfigError, RydpairError

log = logging.getLogger("rydpair")

# convenience flags mapped onto config keys
_FLAG_KEYS = {
    "B": "fields.B", "E": "fields.E", "R": "geometry.R", "theta": "geometry.theta",
    "omega": "omega", "l_max": "basis.l_max", "energy_window": "basis.energy_window",
    "out": "output.dir",
}


def _parser():
    p = argparse.ArgumentParser(prog="rydpair", description="Rydberg pair potentials and blockade dynamics")
    p.add_argument("mode", choices=MODES + ("validate",))
    p.add_argument("config", nargs="?", help="YAML experiment config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a scalar config key, e.g. --set fields.B=3.5")
    p.add_argument("--B", type=float, help="magnetic field (G)")
    p.add_argument("--E", type=float, help="electric field (mV/cm)")
    p.add_argument("--R", type=float, help="interatomic distance (um)")
    p.add_argument("--theta", type=float, help="angle to the quantization axis (deg)")
    p.add_argument("--omega", type=float, help="Rabi frequency Omega/2pi (MHz)")
    p.add_argument("--l-max", dest="l_max", type=int)
    p.add_argument("--energy-window", dest="energy_window", type=float, help="pair basis window (GHz)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="worker pool size (default: available cores)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(args):
    if args.config:
        cfg = parse_config(args.config)
    else:
        cfg = ExperimentConfig()
    overrides = {}
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = val
    for flag, key in _FLAG_KEYS.items():
        v = getattr(args, flag, None)
        if v is not None:
            overrides[key] = v
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.mode != "validate":
        overrides["mode"] = args.mode
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def _workers(cfg):
    return cfg.workers or os.cpu_count() or 1


def _path(cfg, name):
    base = f"{cfg.output.prefix}{name}"
    return os.path.join(cfg.output.dir, base)


def _defects(cfg):
    from .atomic_structure import load_defect_table
    return load_defect_table(cfg.species, cfg.data_file)


def _pair_basis(cfg, defects):
    from .atomic_structure import AtomicState
    from .pair_interaction import PairState, build_pair_basis
    s = AtomicState(*cfg.target.as_tuple())
    return build_pair_basis(PairState(s, s), defects=defects, **cfg.basis.kwargs())


def _c6_grid(cfg):
    """R grid for tracked curves: geometry.R_min up to c6.R_grid_max."""
    c = cfg.c6
    return np.round(np.arange(cfg.geometry.R_min, c.R_grid_max + 1e-9, c.R_grid_step), 6)


def run_pair_spectrum(cfg, h):
    from .atomic_structure import FieldConfig
    from .io import write_json, write_spectrum
    from .pair_interaction import find_resonant_distances, pair_spectrum, resonance_window_count
    defects = _defects(cfg)
    basis = _pair_basis(cfg, defects)
    fields = FieldConfig(cfg.fields.B, cfg.fields.E)
    spec = pair_spectrum(basis, fields, cfg.theta_rad, cfg.geometry.R_grid(),
                         cfg.basis.max_multipole, workers=_workers(cfg))
    res = find_resonant_distances(spec)
    out = [write_spectrum(_path(cfg, "spectrum.csv"), spec, h),
           write_json(_path(cfg, "resonances.json"), "resonances",
                      {"theta_deg": cfg.geometry.theta, "B_G": cfg.fields.B, "E_mV_cm": cfg.fields.E,
                       "window_count": resonance_window_count(spec),
                       "resonances": [dataclasses.asdict(r) for r in res]},
                      h)]
    return out, {"pair_basis": basis.size}, defects


def run_c6(cfg, h):
    from .atomic_structure import FieldConfig
    from .effective_potential import c6_angular_profile
    from .io import write_c6_profile
    defects = _defects(cfg)
    basis = _pair_basis(cfg, defects)
    c = cfg.c6
    entries = c6_angular_profile(None, FieldConfig(cfg.fields.B, cfg.fields.E),
                                 np.radians(c.thetas), R_eval=c.R_eval, R_grid=_c6_grid(cfg),
                                 R_min=c.R_fit_min, basis=basis,
                                 max_multipole=cfg.basis.max_multipole, workers=_workers(cfg))
    out = [write_c6_profile(_path(cfg, "c6_profile.csv"), entries, h)]
    failed = [e for e in entries if e.error]
    if failed and len(failed) == len(entries):
        raise failed_error(failed[0].error)
    return out, {"pair_basis": basis.size}, defects


def failed_error(msg):
    from .errors import NumericalError
    return NumericalError(f"every angle failed; first error: {msg}")


def run_quench_spin(cfg, h):
    from .atomic_structure import FieldConfig
    from .effective_potential import build_effective_potential
    from .io import write_trajectory
    from .spin_dynamics import (SpinModel, blockade_edges, enumerate_truncated_basis,
                                evolve_spin_model)
    defects = _defects(cfg)
    basis = _pair_basis(cfg, defects)
    fields = FieldConfig(cfg.fields.B, cfg.fields.E)
    thetas = np.radians(cfg.spin.thetas) if cfg.spin.thetas else None
    lattice = cfg.geometry.lattice.build()
    pot, _ = build_effective_potential(None, fields, thetas, R_grid=_c6_grid(cfg), R_min=cfg.c6.R_fit_min,
                                       basis=basis, workers=_workers(cfg))
    model = SpinModel.from_potential(lattice, pot, cfg.omega_rad)
    edges = blockade_edges(model.couplings, model.omega, cfg.spin.blockade_factor)
    tb = enumerate_truncated_basis(lattice.n_sites, edges,
                                   memory_budget=int(cfg.spin.memory_budget_gb * 1024**3))
    times = cfg.time.pulse_areas() / cfg.omega_rad
    traj = evolve_spin_model(model, tb, record_times=times, dt=cfg.time.dt)
    out = [write_trajectory(_path(cfg, "trajectory.csv"), traj, h)]
    return out, {"pair_basis": basis.size, "spin_basis": tb.size, "blockade_edges": len(edges)}, defects


def run_quench_full(cfg, h):
    from .atomic_structure import FieldConfig
    from .io import write_trajectory
    from .pair_interaction import Geometry
    from .spin_dynamics import evolve_two_atom_full_model
    defects = _defects(cfg)
    basis = _pair_basis(cfg, defects)
    times = cfg.time.pulse_areas() / cfg.omega_rad
    traj = evolve_two_atom_full_model(basis, cfg.omega_rad, Geometry(cfg.geometry.R, cfg.theta_rad),
                                      FieldConfig(cfg.fields.B, cfg.fields.E), times)
    out = [write_trajectory(_path(cfg, "trajectory.csv"), traj, h)]
    return out, {"pair_basis": basis.size, "coupled_states": traj.meta.get("coupled_states", 0)}, defects


def run_scan(cfg, h):
    from .io import write_scan
    from .scan_driver import EPolicy, ScanSpec, TwoAtomScanner, grid_scan
    defects = _defects(cfg)
    basis = _pair_basis(cfg, defects)
    s = cfg.scan
    spec = ScanSpec(s.B_grid, [math.radians(t) for t in s.theta_grid], cfg.geometry.R, cfg.omega_rad,
                    EPolicy(**vars(s.E_policy)), (s.window[0] * math.pi, s.window[1] * math.pi),
                    s.window_samples, cfg.target.as_tuple(), cfg.basis.kwargs())
    ckpt = _path(cfg, "scan_checkpoint.jsonl") if cfg.output.checkpoint else None
    if ckpt:
        os.makedirs(cfg.output.dir, exist_ok=True)
    result = grid_scan(spec, ckpt, workers=_workers(cfg), scanner=TwoAtomScanner(basis=basis))
    out = list(write_scan(_path(cfg, "scan.json"), _path(cfg, "scan_points.csv"), result, h))
    return out, {"pair_basis": basis.size}, defects


RUNNERS = {
    "pair-spectrum": run_pair_spectrum,
    "c6": run_c6,
    "quench-spin": run_quench_spin,
    "quench-full": run_quench_full,
    "scan": run_scan,
}


def run(cfg):
    """Execute ``cfg.mode``; returns the list of files written (manifest last)."""
    from .config import serialize_config
    from .io import _atomic_write, write_manifest
    h = cfg.config_hash()
    t0 = time.perf_counter()
    artifacts, sizes, defects = RUNNERS[cfg.mode](cfg, h)
    cfg_path = _path(cfg, "config.resolved.yaml")
    _atomic_write(cfg_path, serialize_config(cfg))
    artifacts.append(cfg_path)
    manifest = write_manifest(_path(cfg, "manifest.json"), h, cfg.mode, artifacts,
                              defects.data_version, time.perf_counter() - t0, sizes,
                              {"species": cfg.species})
    return artifacts + [manifest]


def run_validate():
    from .validation import run_all
    results = run_all()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return 0 if all(ok for _, ok, _ in results) else 4


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.captureWarnings(True)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.mode == "validate":
            if args.config:
                load_config(args)
            return run_validate()
        if not args.config:
            raise ConfigError(f"mode {args.mode} needs a config file")
        cfg = load_config(args)
        for path in run(cfg):
            print(path)
        return 0
    except RydpairError as exc:
        print(f"rydpair: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except MemoryError as exc:
        print(f"rydpair: error: out of memory: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
