"""Experiment configuration: YAML parsing, validation, defaults and hashing.

Angles are given in degrees and frequencies as nu = omega / 2 pi (MHz) in
the file; the accessors convert to radians and rad/us for the modules.
"""

import copy
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .pair_interaction import (DEFAULT_ENERGY_WINDOW_GHZ, DEFAULT_L_MAX, DEFAULT_MAX_MULTIPOLE,
                               DEFAULT_N_WINDOW)

MODES = ("pair-spectrum", "c6", "quench-spin", "quench-full", "scan")
CONFIG_SCHEMA_VERSION = 1


@dataclass
class TargetCfg:
    n: int = 61
    l: int = 2
    j: float = 1.5
    m_j: float = 1.5

    def validate(self):
        if self.n < 1 or not 0 <= self.l < self.n:
            raise ConfigError(f"target: invalid n, l = {self.n}, {self.l}")
        if self.j not in (self.l - 0.5, self.l + 0.5) or self.j < 0.5:
            raise ConfigError(f"target.j = {self.j} incompatible with l = {self.l}")
        if abs(self.m_j) > self.j or (self.m_j - self.j) % 1:
            raise ConfigError(f"target.m_j = {self.m_j} incompatible with j = {self.j}")

    def as_tuple(self):
        return (self.n, self.l, self.j, self.m_j)


@dataclass
class FieldsCfg:
    B: float = 0.0  # G
    E: float = 0.0  # mV/cm

    def validate(self):
        for k in ("B", "E"):
            if not math.isfinite(getattr(self, k)):
                raise ConfigError(f"fields.{k} must be finite")


@dataclass
class LatticeCfg:
    kind: str = "ring"  # ring | grid | explicit
    n: int = 8
    spacing: float = 6.5  # um
    rows: int = 4
    cols: int = 4
    phase: float = 0.0  # deg, ring orientation
    coordinates: list = field(default_factory=list)  # [[x, z], ...] um

    def validate(self):
        if self.kind not in ("ring", "grid", "explicit"):
            raise ConfigError(f"geometry.lattice.kind must be ring, grid or explicit, got {self.kind!r}")
        if self.kind != "explicit" and not self.spacing > 0:
            raise ConfigError("geometry.lattice.spacing must be positive")
        if self.kind == "ring" and self.n < 2:
            raise ConfigError("geometry.lattice.n must be at least 2")
        if self.kind == "grid" and (self.rows < 1 or self.cols < 1):
            raise ConfigError("geometry.lattice.rows and cols must be positive")
        if self.kind == "explicit":
            if not self.coordinates or any(len(c) != 2 for c in self.coordinates):
                raise ConfigError("geometry.lattice.coordinates must be a list of [x, z] pairs")

    def build(self):
        from .spin_dynamics import Lattice
        if self.kind == "ring":
            return Lattice.ring(self.n, self.spacing, math.radians(self.phase))
        if self.kind == "grid":
            return Lattice.square(self.rows, self.cols, self.spacing)
        return Lattice([[float(x), float(z)] for x, z in self.coordinates], "explicit")


@dataclass
class GeometryCfg:
    R: float = 6.5  # um
    theta: float = 78.0  # deg
    R_min: float = 6.0
    R_max: float = 12.0
    R_step: float = 0.25
    lattice: LatticeCfg | None = None

    def validate(self):
        if not self.R > 0:
            raise ConfigError(f"geometry.R must be positive, got {self.R}")
        if not 0.0 <= self.theta <= 180.0:
            raise ConfigError(f"geometry.theta must lie in [0, 180] deg, got {self.theta}")
        if not 0 < self.R_min <= self.R_max or not self.R_step > 0:
            raise ConfigError("geometry: need 0 < R_min <= R_max and R_step > 0")
        if self.lattice is not None:
            self.lattice.validate()

    def R_grid(self):
        n = int(math.floor((self.R_max - self.R_min) / self.R_step + 1e-9))
        return [round(self.R_min + k * self.R_step, 10) for k in range(n + 1)]


@dataclass
class BasisCfg:
    l_max: int = DEFAULT_L_MAX
    energy_window: float = DEFAULT_ENERGY_WINDOW_GHZ  # GHz
    n_window: int = DEFAULT_N_WINDOW
    max_multipole: int = DEFAULT_MAX_MULTIPOLE

    def validate(self):
        if self.l_max < 0 or self.n_window < 0:
            raise ConfigError("basis.l_max and basis.n_window must be non-negative")
        if not self.energy_window > 0:
            raise ConfigError("basis.energy_window must be positive")
        if self.max_multipole < 1:
            raise ConfigError("basis.max_multipole must be at least 1")

    def kwargs(self):
        return {"l_max": self.l_max, "energy_window": self.energy_window,
                "n_window": self.n_window, "max_multipole": self.max_multipole}


@dataclass
class C6Cfg:
    thetas: list = field(default_factory=lambda: [0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0])  # deg
    R_fit_min: float = 8.0
    R_eval: float = 9.0
    R_grid_max: float = 20.0
    R_grid_step: float = 0.25

    def validate(self):
        if not self.thetas or any(not 0 <= t <= 180 for t in self.thetas):
            raise ConfigError("c6.thetas must be a non-empty list of angles in [0, 180] deg")
        if not (self.R_fit_min > 0 and self.R_eval > 0 and self.R_grid_step > 0):
            raise ConfigError("c6: R_fit_min, R_eval and R_grid_step must be positive")


@dataclass
class TimeCfg:
    pulse_area_max: float = 4.0  # in units of pi
    samples: int = 65
    dt: float | None = None  # us; None picks the default step

    def validate(self):
        if not self.pulse_area_max > 0 or self.samples < 2:
            raise ConfigError("time: need pulse_area_max > 0 and samples >= 2")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("time.dt must be positive")

    def pulse_areas(self):
        import numpy as np
        return np.linspace(0.0, self.pulse_area_max * math.pi, self.samples)


@dataclass
class SpinCfg:
    blockade_factor: float = 1.0
    memory_budget_gb: float = 2.0
    thetas: list | None = None  # deg grid for the effective potential

    def validate(self):
        if not self.blockade_factor > 0 or not self.memory_budget_gb > 0:
            raise ConfigError("spin: blockade_factor and memory_budget_gb must be positive")


@dataclass
class EPolicyCfg:
    kind: str = "maximize"
    value: float = 0.0
    E_min: float = 0.0
    E_max: float = 20.0
    step: float = 2.0

    def validate(self):
        if self.kind not in ("fixed", "maximize"):
            raise ConfigError(f"scan.E_policy.kind must be fixed or maximize, got {self.kind!r}")
        if self.kind == "maximize" and (not self.step > 0 or self.E_max < self.E_min):
            raise ConfigError("scan.E_policy: need step > 0 and E_max >= E_min")


@dataclass
class ScanCfg:
    B_grid: list = field(default_factory=lambda: [-8.0, -4.0, 0.0, 4.0, 8.0])  # G
    theta_grid: list = field(default_factory=lambda: [0.0, 22.5, 45.0, 67.5, 90.0])  # deg
    E_policy: EPolicyCfg = field(default_factory=EPolicyCfg)
    window: list = field(default_factory=lambda: [4.0, 8.0])  # pulse area in units of pi
    window_samples: int = 64

    def validate(self):
        if not self.B_grid or not self.theta_grid:
            raise ConfigError("scan.B_grid and scan.theta_grid must be non-empty")
        if any(not 0 <= t <= 180 for t in self.theta_grid):
            raise ConfigError("scan.theta_grid angles must lie in [0, 180] deg")
        if len(self.window) != 2 or not 0 <= self.window[0] < self.window[1]:
            raise ConfigError("scan.window must be [start, end] with 0 <= start < end")
        if self.window_samples < 2:
            raise ConfigError("scan.window_samples must be at least 2")
        self.E_policy.validate()


@dataclass
class OutputCfg:
    dir: str = "rydpair_out"
    prefix: str = ""
    checkpoint: bool = True


@dataclass
class ExperimentConfig:
    mode: str = "pair-spectrum"
    species: str = "Rb87"
    data_file: str | None = None
    target: TargetCfg = field(default_factory=TargetCfg)
    fields: FieldsCfg = field(default_factory=FieldsCfg)
    geometry: GeometryCfg = field(default_factory=GeometryCfg)
    omega: float = 1.2  # MHz, omega / 2 pi
    basis: BasisCfg = field(default_factory=BasisCfg)
    c6: C6Cfg = field(default_factory=C6Cfg)
    time: TimeCfg = field(default_factory=TimeCfg)
    spin: SpinCfg = field(default_factory=SpinCfg)
    scan: ScanCfg = field(default_factory=ScanCfg)
    output: OutputCfg = field(default_factory=OutputCfg)
    workers: int | None = None

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        if not (math.isfinite(self.omega) and self.omega > 0):
            raise ConfigError(f"omega must be positive, got {self.omega}")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be at least 1")
        for sub in (self.target, self.fields, self.geometry, self.basis, self.c6, self.time,
                    self.spin, self.scan):
            sub.validate()
        if self.mode == "quench-spin" and self.geometry.lattice is None:
            raise ConfigError("quench-spin mode needs geometry.lattice")
        return self

    # internal units
    @property
    def omega_rad(self):
        """Rabi angular frequency in rad/us."""
        return 2.0 * math.pi * self.omega

    @property
    def theta_rad(self):
        return math.radians(self.geometry.theta)

    def to_dict(self):
        return dataclasses.asdict(self)

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# -- generic dataclass <-> mapping -------------------------------------------------------

def _key_lines(node, path=(), out=None):
    """Map key paths to 1-based source lines of a composed YAML node."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (str(k.value),)
            out[p] = k.start_mark.line + 1
            _key_lines(v, p, out)
    return out


def _type_name(tp):
    return getattr(tp, "__name__", str(tp))


def _coerce(value, tp, where):
    """Convert a YAML scalar/list to the annotated field type."""
    origin = getattr(tp, "__args__", None)
    if origin and type(None) in origin:
        if value is None:
            return None
        tp = next(a for a in origin if a is not type(None))
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping")
        return _build(tp, value, where)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not (isinstance(value, int) or
                                           (isinstance(value, float) and value.is_integer())):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if tp is list or getattr(tp, "__origin__", None) is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported type {_type_name(tp)}")


def _build(cls, data, prefix=""):
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        key = f"{prefix}.{unknown[0]}" if prefix else unknown[0]
        raise ConfigError(f"unknown key {key!r}", field=key)
    kw = {}
    for k, v in data.items():
        where = f"{prefix}.{k}" if prefix else k
        kw[k] = _coerce(v, _field_type(cls, k), where)
    return cls(**kw)


def _field_type(cls, name):
    import typing
    return typing.get_type_hints(cls)[name]


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return _build(ExperimentConfig, copy.deepcopy(data)).validate()


def _locate(exc, lines):
    key = getattr(exc, "field", None)
    if key is None:
        # validation messages start with the dotted key they refer to
        head = str(exc).split(":")[0].split()[-1] if str(exc) else ""
        for cand in (str(exc).split()[0].rstrip(":"), head):
            if tuple(cand.split(".")) in lines:
                key = cand
                break
    if key is not None and tuple(key.split(".")) in lines:
        return key, lines[tuple(key.split("."))]
    return key, None


def parse_config_text(text, source="<string>"):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"{source}: malformed YAML: {getattr(exc, 'problem', exc)}",
                          line=line) from None
    data = {} if data is None else data
    lines = _key_lines(node) if node is not None else {}
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        key, line = _locate(exc, lines)
        where = f"{source}:{line}" if line else source
        raise ConfigError(f"{where}: {exc}", field=key, line=line) from None


def parse_config(path):
    """Read, validate and default-complete a YAML experiment config."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))


def serialize_config(cfg):
    """YAML text with every default resolved; parse_config_text inverts it."""
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def apply_overrides(cfg, overrides):
    """Set scalar keys from ``{"fields.B": "3.5", ...}`` and re-validate."""
    data = cfg.to_dict()
    for key, raw in overrides.items():
        parts = key.split(".")
        node = data
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                if p in node and node[p] is None:
                    node[p] = {}
                else:
                    raise ConfigError(f"unknown key {key!r}", field=key)
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"unknown key {key!r}", field=key)
        if isinstance(node[parts[-1]], (dict, list)):
            raise ConfigError(f"{key} is not a scalar key", field=key)
        node[parts[-1]] = yaml.safe_load(raw) if isinstance(raw, str) else raw
    return config_from_dict(data)
