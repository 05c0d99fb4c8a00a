"""Rydberg pair potentials, effective blockade interactions and many-body quench dynamics."""

from .atomic_structure import AtomicState, FieldConfig, load_defect_table
from .config import ExperimentConfig, parse_config
from .effective_potential import EffectivePotential, build_effective_potential, c6_angular_profile, fit_c6
from .errors import (ConfigError, DataError, NumericalError, ResourceError, RydpairError)
from .pair_interaction import Geometry, PairState, build_pair_basis, pair_spectrum
from .spin_dynamics import Lattice, SpinModel, evolve_spin_model

__version__ = "0.1.0"
