"""Closed-form conversion efficiency and the CQD-cavity coupling estimate."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .constants import C_LIGHT, E_CHARGE, EPS0, HBAR


@dataclass(frozen=True)
class AnalyticParams:
    """Rates as rate/2pi in MHz. Only ratios enter the formula."""

    gamma_fg_t: float
    gamma_eg_t: float
    g_c: float

    def __post_init__(self):
        if not self.gamma_fg_t > 0:
            raise ValueError("gamma_fg_t must be positive")
        if self.gamma_eg_t < 0 or self.g_c < 0:
            raise ValueError("gamma_eg_t and g_c must be non-negative")


def mean_output_field(p: AnalyticParams) -> complex:
    """Normalized mean reflected field on the F -> G transition.

    b = 1 - 2 Gamma_EG / (4 g^2 / Gamma_FG + Gamma_EG - i g)
    """
    if p.gamma_eg_t == 0:
        return 1 + 0j
    denom = 4 * p.g_c**2 / p.gamma_fg_t + p.gamma_eg_t - 1j * p.g_c
    return 1 - 2 * p.gamma_eg_t / denom


def efficiency(p: AnalyticParams) -> float:
    """zeta = 1 - |b|^2, clipped against rounding into [0, 1]."""
    b = mean_output_field(p)
    return min(1.0, max(0.0, 1.0 - (b.real**2 + b.imag**2)))


def optimal_gamma_eg(gamma_fg_t: float, g_c: float) -> float:
    """Gamma_EG maximizing zeta: sqrt((4 g^2 / Gamma_FG)^2 + g^2).

    The real-part cancellation 4 g^2 / Gamma_FG = Gamma_EG is only the limit
    of this for g << 4 g^2 / Gamma_FG.
    """
    if not (gamma_fg_t > 0 and g_c > 0):
        raise ValueError("gamma_fg_t and g_c must be positive")
    a = 4 * g_c**2 / gamma_fg_t
    return math.hypot(a, g_c)


def balanced_gamma_eg(gamma_fg_t: float, g_c: float) -> float:
    return 4 * g_c**2 / gamma_fg_t


@dataclass(frozen=True)
class DeviceParams:
    """SI geometry of the high-impedance resonator and the CQD.

    z_cav [Ohm], gap d and enhanced gap d_prime [m], cavity length [m],
    resonance freq_ghz = omega_c / 2pi [GHz], dot separation a [m].
    """

    z_cav: float = 2000.0
    d: float = 7e-6
    d_prime: float = 200e-9
    length: float = 3e-3
    freq_ghz: float = 11.0
    a: float = 10e-9
    eps_gaas: float = 13.0

    def __post_init__(self):
        for name in ("z_cav", "d", "d_prime", "length", "freq_ghz", "eps_gaas"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.a < 0:
            raise ValueError("a must be non-negative")
        if not self.d_prime < self.d:
            raise ValueError("d_prime must be smaller than d")

    @property
    def omega_c(self) -> float:
        return 2 * math.pi * self.freq_ghz * 1e9


def vacuum_field_thermo(freq_ghz: float, eps_eff: float, v_eff: float) -> float:
    """sqrt(hbar omega_c / (2 eps0 eps_eff V_eff)) in V/m; V_eff in m^3."""
    if freq_ghz < 0 or not (eps_eff > 0 and v_eff > 0):
        raise ValueError("need freq >= 0 and positive eps_eff, v_eff")
    omega = 2 * math.pi * freq_ghz * 1e9
    return math.sqrt(HBAR * omega / (2 * EPS0 * eps_eff * v_eff))


def vacuum_field_impedance(dev: DeviceParams) -> float:
    """sqrt(Z hbar omega_c^2 / (pi d^2)) in V/m."""
    return math.sqrt(dev.z_cav * HBAR * dev.omega_c**2 / (math.pi * dev.d**2))


def dipole_moment(a: float) -> float:
    """p = a e / 2 in C m."""
    return a * E_CHARGE / 2


def effective_permittivity(dev: DeviceParams) -> float:
    return (math.pi * C_LIGHT / (dev.length * dev.omega_c)) ** 2


@dataclass(frozen=True)
class CouplingReport:
    p: float
    eps_eff: float
    enhancement: float
    e_rms: float
    g_c_mhz: float


def coupling_report(dev: DeviceParams) -> CouplingReport:
    p = dipole_moment(dev.a)
    eps_eff = effective_permittivity(dev)
    if eps_eff < dev.eps_gaas:
        warnings.warn(f"eps_eff = {eps_eff:.3g} < eps_GaAs = {dev.eps_gaas:g}: field enhancement factor below one",
                      stacklevel=2)
    enhancement = math.sqrt(eps_eff / dev.eps_gaas) * dev.d / dev.d_prime
    e_rms = vacuum_field_impedance(dev)
    g_hz = p * enhancement * e_rms / (2 * math.pi * HBAR)
    return CouplingReport(p=p, eps_eff=eps_eff, enhancement=enhancement, e_rms=e_rms, g_c_mhz=g_hz * 1e-6)


def coupling_strength(dev: DeviceParams) -> float:
    """g_c / 2pi in MHz."""
    return coupling_report(dev).g_c_mhz
