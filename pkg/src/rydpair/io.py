"""Versioned CSV/JSON writers and the run manifest.

Every artifact carries ``schema_version`` and the hash of the config that
produced it. Data files are written atomically (temp file + rename) and are
deterministic for a given config, so re-running only ever overwrites with
identical content. Wall time lives in the manifest alone.
"""

import csv
import io
import json
import math
import os
import platform
import tempfile

import numpy as np

SCHEMA_VERSION = 1


def _clean(x):
    """JSON-safe conversion; NaN and inf become null."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, kind, payload, config_hash):
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind, "config_hash": config_hash}
    doc.update(_clean(payload))
    _atomic_write(path, json.dumps(doc, indent=1, sort_keys=False) + "\n")
    return path


def write_csv(path, kind, columns, rows, config_hash):
    """CSV with two ``#`` header lines naming schema version, kind and config hash."""
    buf = io.StringIO()
    buf.write(f"# schema_version={SCHEMA_VERSION} kind={kind}\n")
    buf.write(f"# config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    _atomic_write(path, buf.getvalue())
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path):
    """Inverse of write_csv: (meta dict, column names, rows as lists of str)."""
    meta = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            for tok in line[1:].split():
                k, _, v = tok.partition("=")
                meta[k] = v
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]


# -- per-pipeline emitters ------------------------------------------------------------------

def spectrum_rows(spectrum, max_states=None):
    """Long-format rows (R, index, energy, detuning, overlap) of a pair spectrum."""
    rows = []
    for p in spectrum:
        order = np.argsort(p.eigenvalues)
        det = p.detunings
        for k in order[:max_states] if max_states else order:
            rows.append((p.R, int(k), float(p.eigenvalues[k]), float(det[k]), float(p.overlaps[k])))
    return rows


def write_spectrum(path, spectrum, config_hash):
    return write_csv(path, "pair_spectrum",
                     ["R_um", "state", "energy_MHz", "detuning_MHz", "overlap_rr"],
                     spectrum_rows(spectrum), config_hash)


def write_c6_profile(path, entries, config_hash):
    rows = []
    for e in entries:
        fit = e.fit
        rows.append((math.degrees(e.theta),
                     fit.c6 if fit else math.nan,
                     fit.max_relative_residual if fit else math.nan,
                     e.U_eval if e.U_eval is not None else math.nan,
                     fit.fit_window_Rmin if fit else math.nan,
                     int(fit.n_samples) if fit else 0,
                     e.error or ""))
    return write_csv(path, "c6_profile",
                     ["theta_deg", "C6_MHz_um6", "max_rel_residual", "U_eval_MHz", "fit_R_min_um",
                      "n_samples", "error"], rows, config_hash)


def write_trajectory(path, traj, config_hash):
    recs = traj.records()
    cols = list(recs[0].keys()) if recs else ["pulse_area", "time_us", "f_R", "P_rr"]
    return write_csv(path, "trajectory", cols, [[r[c] for c in cols] for r in recs], config_hash)


def write_scan(json_path, csv_path, result, config_hash):
    spec = result.spec
    mat = result.matrix()
    payload = {
        "B_G": spec.B_grid,
        "theta_deg": [math.degrees(t) for t in spec.theta_grid],
        "R_um": spec.R,
        "omega_MHz": spec.omega / (2 * math.pi),
        "E_policy": {"kind": spec.E_policy.kind, "values_mV_cm": spec.E_policy.values()},
        "prr_mean": mat,
        "E_star": result.matrix("E_star"),
        "spec_key": spec.key(),
    }
    write_json(json_path, "scan_matrix", payload, config_hash)
    rows = []
    for (i, j) in sorted(result.points):
        p = result.points[(i, j)]
        for E, v in sorted(p.prr_by_E.items()):
            rows.append((i, j, p.B, math.degrees(p.theta), E, v, int(E == p.E_star)))
        for E, msg in sorted(p.failures.items()):
            rows.append((i, j, p.B, math.degrees(p.theta), E, math.nan, 0))
    write_csv(csv_path, "scan_points",
              ["i_B", "i_theta", "B_G", "theta_deg", "E_mV_cm", "prr_mean", "is_worst_case"],
              rows, config_hash)
    return json_path, csv_path


def write_manifest(path, config_hash, mode, artifacts, data_version, wall_time_s, basis_sizes,
                   extra=None):
    payload = {
        "mode": mode,
        "artifacts": sorted(os.path.basename(a) for a in artifacts),
        "data_version": data_version,
        "wall_time_s": round(float(wall_time_s), 3),
        "basis_sizes": basis_sizes,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    if extra:
        payload.update(extra)
    return write_json(path, "manifest", payload, config_hash)
