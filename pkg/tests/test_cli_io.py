import json
import math
import os

import pytest

from rydpair.cli import main
from rydpair.config import (ExperimentConfig, apply_overrides, config_from_dict, parse_config,
                            parse_config_text, serialize_config)
from rydpair.errors import ConfigError
from rydpair.io import read_csv

SMALL = "basis: {energy_window: 1.0, n_window: 2}\n"


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_minimal_config_gets_defaults():
    cfg = parse_config_text("mode: pair-spectrum\n")
    assert cfg.basis.l_max == 3 and cfg.basis.energy_window == 2.0 and cfg.basis.n_window == 4
    assert cfg.omega == 1.2 and cfg.target.as_tuple() == (61, 2, 1.5, 1.5)
    assert cfg.omega_rad == pytest.approx(2 * math.pi * 1.2)


def test_round_trip():
    cfg = parse_config_text("mode: scan\nfields: {B: 3.5, E: 20}\ngeometry:\n  lattice: {kind: grid, rows: 4, cols: 4, spacing: 6.1}\n")
    again = parse_config_text(serialize_config(cfg))
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("mode: c6\nfields:\n  B: 1.0\n  Bz: 2.0\n")
    assert exc.value.line == 4 and exc.value.field == "fields.Bz"


def test_negative_R_names_R():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("geometry:\n  R: -2.0\n")
    assert "geometry.R" in str(exc.value) and exc.value.line == 2


def test_type_and_syntax_errors():
    with pytest.raises(ConfigError, match="expected a number"):
        parse_config_text("omega: fast\n")
    with pytest.raises(ConfigError) as exc:
        parse_config_text("mode: c6\nfields: {B: [1, \n")
    assert exc.value.line is not None
    with pytest.raises(ConfigError, match="mode"):
        parse_config_text("mode: plot\n")


def test_quench_full_parameters_accepted():
    text = ("mode: quench-full\nfields: {B: 3.5, E: 20}\ngeometry: {R: 6.5, theta: 78}\n"
            "omega: 1.2\n")
    cfg = parse_config_text(text)
    assert cfg.mode == "quench-full" and cfg.theta_rad == pytest.approx(math.radians(78))


def test_overrides():
    cfg = apply_overrides(ExperimentConfig(), {"fields.B": "3.5", "geometry.theta": 45})
    assert cfg.fields.B == 3.5 and cfg.geometry.theta == 45.0
    with pytest.raises(ConfigError):
        apply_overrides(cfg, {"fields.X": "1"})
    with pytest.raises(ConfigError):
        apply_overrides(cfg, {"geometry.R": "-1"})


def test_quench_spin_needs_lattice():
    with pytest.raises(ConfigError, match="lattice"):
        config_from_dict({"mode": "quench-spin"})


# -- CLI ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(os.listdir(os.path.join(os.path.dirname(__file__), "..", "configs"))))
def test_shipped_configs_parse(name):
    cfg = parse_config(os.path.join(os.path.dirname(__file__), "..", "configs", name))
    assert parse_config_text(serialize_config(cfg)) == cfg


def test_exit_codes(tmp_path, monkeypatch, capsys):
    assert main(["scan", str(tmp_path / "missing.yaml")]) == 2
    bad = _write(tmp_path, "geometry: {R: -1}\n")
    assert main(["pair-spectrum", bad]) == 2
    good = _write(tmp_path, SMALL + f"output: {{dir: {tmp_path / 'o'}}}\n", "good.yaml")
    monkeypatch.setenv("RYDPAIR_DATA_DIR", str(tmp_path / "nowhere"))
    assert main(["pair-spectrum", good]) == 3
    monkeypatch.delenv("RYDPAIR_DATA_DIR")
    # a basis too large for the budget is a resource failure
    q = _write(tmp_path, SMALL + "geometry:\n  lattice: {kind: grid, rows: 6, cols: 6, spacing: 30}\n"
               "spin: {memory_budget_gb: 0.001, thetas: [0, 90]}\n"
               "c6: {R_grid_max: 12, R_grid_step: 1}\n"
               f"output: {{dir: {tmp_path / 'q'}}}\n", "q.yaml")
    assert main(["quench-spin", q, "--set", "geometry.R_min=8"]) == 5


def test_pair_spectrum_run_is_reproducible(tmp_path):
    out = tmp_path / "ps"
    cfg = _write(tmp_path, SMALL + "geometry: {R_min: 6.0, R_max: 7.0, R_step: 0.5}\n"
                 f"output: {{dir: {out}}}\n")
    assert main(["pair-spectrum", cfg, "--B", "6.9", "--workers", "1"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    meta, cols, rows = read_csv(out / "spectrum.csv")
    assert meta["config_hash"] == man["config_hash"] and meta["schema_version"] == "1"
    assert cols[:2] == ["R_um", "state"] and len(rows) == 3 * man["basis_sizes"]["pair_basis"]
    first = (out / "spectrum.csv").read_bytes()
    assert main(["pair-spectrum", cfg, "--B", "6.9", "--workers", "1"]) == 0
    assert (out / "spectrum.csv").read_bytes() == first
    # the resolved config reproduces the run's hash
    again = parse_config(str(out / "config.resolved.yaml"))
    assert again.config_hash() == man["config_hash"]


def test_c6_mode_emits_profile(tmp_path):
    out = tmp_path / "c6"
    cfg = _write(tmp_path, SMALL + "fields: {B: 3.5}\ngeometry: {R_min: 8.0}\n"
                 "c6: {thetas: [0, 90], R_grid_max: 14, R_grid_step: 1.0}\n"
                 f"output: {{dir: {out}}}\n")
    assert main(["c6", cfg]) == 0
    meta, cols, rows = read_csv(out / "c6_profile.csv")
    assert meta["kind"] == "c6_profile" and len(rows) == 2
    assert all(float(r[cols.index("C6_MHz_um6")]) < 0 for r in rows)
    assert os.path.exists(out / "manifest.json")


def test_quench_spin_mode_emits_trajectory(tmp_path):
    out = tmp_path / "qs"
    cfg = _write(tmp_path, SMALL + "fields: {B: 3.5}\n"
                 "geometry:\n  R_min: 6.0\n  lattice: {kind: ring, n: 8, spacing: 6.5}\n"
                 "c6: {R_grid_max: 14, R_grid_step: 1.0}\nspin: {thetas: [0, 45, 90]}\n"
                 "time: {pulse_area_max: 4, samples: 9}\n"
                 f"output: {{dir: {out}}}\n")
    assert main(["quench-spin", cfg]) == 0
    meta, cols, rows = read_csv(out / "trajectory.csv")
    assert "f_R" in cols and "P_5plus" in cols and len(rows) == 9
    man = json.loads((out / "manifest.json").read_text())
    assert man["basis_sizes"]["spin_basis"] == 47


def test_scan_single_point(tmp_path):
    out = tmp_path / "sc"
    cfg = _write(tmp_path, SMALL + "geometry: {R: 6.1}\n"
                 "scan: {B_grid: [3.5], theta_grid: [78], window_samples: 8,"
                 " E_policy: {kind: maximize, E_min: 0, E_max: 2, step: 2}}\n"
                 f"output: {{dir: {out}}}\n")
    assert main(["scan", cfg]) == 0
    doc = json.loads((out / "scan.json").read_text())
    assert doc["schema_version"] == 1 and len(doc["prr_mean"]) == 1 and len(doc["prr_mean"][0]) == 1
    meta, cols, rows = read_csv(out / "scan_points.csv")
    assert len(rows) == 2 and sum(int(r[-1]) for r in rows) == 1


def test_quench_full_mode(tmp_path):
    out = tmp_path / "qf"
    cfg = _write(tmp_path, SMALL + "fields: {B: 3.5, E: 20}\ngeometry: {R: 6.5, theta: 78}\n"
                 "time: {pulse_area_max: 6, samples: 7}\n"
                 f"output: {{dir: {out}}}\n")
    assert main(["quench-full", cfg]) == 0
    meta, cols, rows = read_csv(out / "trajectory.csv")
    assert "P_rr" in cols and len(rows) == 7


def test_validate_mode(capsys):
    assert main(["validate"]) == 0
    assert "FAIL" not in capsys.readouterr().out
