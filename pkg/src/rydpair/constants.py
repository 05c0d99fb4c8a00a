"""Physical constants and unit conversions (CODATA values via scipy.constants).

Energies are reported in h*MHz (or h*GHz for absolute level energies),
fields in Gauss and mV/cm, lengths in micrometres. Internally the radial
problem and the multipole operators work in atomic units.
"""

from scipy.constants import physical_constants as _pc

RYDBERG_INF_GHZ = _pc["Rydberg constant times c in Hz"][0] * 1e-9
HARTREE_MHZ = _pc["hartree-hertz relationship"][0] * 1e-6
BOHR_RADIUS_UM = _pc["Bohr radius"][0] * 1e6
ELECTRON_MASS_U = _pc["electron mass in u"][0]
G_ELECTRON = abs(_pc["electron g factor"][0])
G_ORBITAL = 1.0

# mu_B / h, MHz per Gauss (1 G = 1e-4 T)
MU_B_MHZ_PER_GAUSS = _pc["Bohr magneton in Hz/T"][0] * 1e-4 * 1e-6

# field of 1 mV/cm (= 0.1 V/m) in atomic units
EFIELD_AU_PER_MVCM = 0.1 / _pc["atomic unit of electric field"][0]


def reduced_rydberg_ghz(mass_u):
    """Mass-corrected Rydberg constant in h*GHz for an atom of mass ``mass_u``.

    The core (nucleus plus inner electrons) mass is the atomic mass minus one
    electron. ``mass_u=None`` means infinite nuclear mass.
    """
    if mass_u is None:
        return RYDBERG_INF_GHZ
    core = mass_u - ELECTRON_MASS_U
    return RYDBERG_INF_GHZ / (1.0 + ELECTRON_MASS_U / core)


def um_to_bohr(r_um):
    return r_um / BOHR_RADIUS_UM
