"""Physical constants (CODATA, via scipy) and unit helpers."""

import math

from scipy import constants as _c

E = _c.e
H = _c.h
HBAR = _c.hbar
EPS0 = _c.epsilon_0
MU0 = _c.mu_0
PHI0 = H / (2 * E)
R_K = H / E**2

MEV = 1e-3 * E

# reporting units
PF_PER_CM = 1e-12 / 1e-2
NH_PER_CM = 1e-9 / 1e-2
AF_PER_UM = 1e-18 / 1e-6
PH_PER_UM = 1e-12 / 1e-6


def reduced_flux_quantum() -> float:
    return PHI0 / (2 * math.pi)
