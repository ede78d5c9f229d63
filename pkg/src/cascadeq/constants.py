"""Physical constants (SI, CODATA 2018; the first four are exact by definition)."""

HBAR = 1.054571817e-34  # J s
H_PLANCK = 6.62607015e-34  # J s
E_CHARGE = 1.602176634e-19  # C
C_LIGHT = 299792458.0  # m / s
EPS0 = 8.8541878128e-12  # F / m
