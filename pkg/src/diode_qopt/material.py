"""Physical constants, 4H-SiC material parameters and equilibrium carrier statistics.

Energies are in eV, densities in cm^-3, temperatures in K.  Everything in
this module is a pure function of its inputs.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import constants as sc

Q = sc.e
K_B = sc.k
HBAR = sc.hbar
H_PLANCK = sc.h
M_E = sc.m_e
EPS0_CODATA = sc.epsilon_0
EPS0_PRINTED = 8.99e-12
MU0_VACUUM = sc.mu_0
MU_B = sc.physical_constants["Bohr magneton"][0]

# Largest exponent whose exp() is still a normal double.
EXP_LIMIT = 308.0 * math.log(10.0)


class DomainError(ValueError):
    """Raised when an input lies outside the domain of a model formula."""


class UnderflowWarning(RuntimeWarning):
    """Emitted when a result underflows to zero."""


def thermal_energy(T: float) -> float:
    """k_B T in eV."""
    return K_B * T / Q


@dataclass(frozen=True)
class MobilityFit:
    mu_min: float = 40.0
    mu_max: float = 950.0
    N_ref: float = 2e17
    alpha_fit: float = 0.76
    v_sat: float = 2.4e7
    beta_fit: float = 0.85

    def __post_init__(self):
        if not (self.mu_max >= self.mu_min > 0):
            raise DomainError("mobility bounds must satisfy mu_max >= mu_min > 0")
        if self.N_ref <= 0 or self.v_sat <= 0 or self.beta_fit <= 0:
            raise DomainError("N_ref, v_sat and beta_fit must be positive")


@dataclass(frozen=True)
class TrapParams:
    N_t: float = 1e17
    sigma_n: float = 1e-15
    sigma_p: float = 1e-15
    eps_t0: float = 1.63
    D_depth: float = 5.0
    fwhm: float = 5.0

    def __post_init__(self):
        if self.N_t < 0:
            raise DomainError("N_t must be non-negative")
        if self.sigma_n <= 0 or self.sigma_p <= 0:
            raise DomainError("capture cross-sections must be positive")
        if not (self.D_depth >= self.fwhm > 0):
            raise DomainError("need D_depth >= fwhm > 0")


@dataclass(frozen=True)
class MaterialParams:
    """Semiconductor parameter block (4H-SiC defaults).

    ``eps_a``/``eps_d`` (Al acceptor 0.20 eV above the valence band, N donor
    0.07 eV below the conduction band) and the density-of-states masses
    ``m_c``/``m_v`` are literature values for 4H-SiC, not fitted quantities.
    ``printed_eps0`` swaps CODATA epsilon_0 for 8.99e-12 F/m.
    """

    kappa: float = 9.66
    E_g: float = 3.26
    eps_c: float = 3.26
    eps_v: float = 0.0
    eps_a: float = 0.20
    eps_d: float = 3.19
    m_c: float = 0.77
    m_v: float = 1.0
    m_star: float = 0.37
    E_BD: float = 1.9e6
    lattice_const: float = 0.1
    mobility: MobilityFit = field(default_factory=MobilityFit)
    trap: TrapParams = field(default_factory=TrapParams)
    printed_eps0: bool = False

    def __post_init__(self):
        if self.kappa <= 0 or self.E_g <= 0:
            raise DomainError("kappa and E_g must be positive")
        if abs((self.eps_c - self.eps_v) - self.E_g) > 1e-9:
            raise DomainError("E_g must equal eps_c - eps_v")
        if not (self.eps_v < self.eps_a < self.eps_d < self.eps_c):
            raise DomainError("need eps_v < eps_a < eps_d < eps_c")
        if min(self.m_c, self.m_v, self.m_star) <= 0:
            raise DomainError("effective masses must be positive")
        if self.E_BD <= 0 or self.lattice_const <= 0:
            raise DomainError("E_BD and lattice_const must be positive")
        if not (self.eps_v < self.trap.eps_t0 < self.eps_c):
            raise DomainError("trap level must lie inside the gap")

    @property
    def eps0(self) -> float:
        return EPS0_PRINTED if self.printed_eps0 else EPS0_CODATA

    @property
    def permittivity(self) -> float:
        """Absolute permittivity in F/m."""
        return self.kappa * self.eps0


def effective_dos(T: float, m: float) -> float:
    """Effective density of states (1/4)(2 m k_B T / (pi hbar^2))^{3/2} in cm^-3."""
    if not (T > 0 and m > 0):
        raise DomainError(f"effective_dos needs T > 0 and m > 0 (got T={T}, m={m})")
    arg = 2.0 * m * M_E * K_B * T / (math.pi * HBAR**2)
    return 0.25 * arg**1.5 * 1e-6


def intrinsic_carrier_density(T: float, E_g: float, material: MaterialParams | None = None) -> float:
    """n_i = sqrt(N_c P_v) exp(-E_g / 2 k_B T) in cm^-3.

    Returns 0 with an UnderflowWarning when the exponential underflows.
    """
    if T <= 0 or E_g < 0:
        raise DomainError("intrinsic_carrier_density needs T > 0 and E_g >= 0")
    material = material or MaterialParams()
    log_ni = 0.5 * (math.log(effective_dos(T, material.m_c)) + math.log(effective_dos(T, material.m_v)))
    log_ni -= E_g / (2.0 * thermal_energy(T))
    if log_ni < -745.0:
        warnings.warn(f"n_i underflows at T={T} K, E_g={E_g} eV", UnderflowWarning, stacklevel=2)
        return 0.0
    return math.exp(log_ni)


def intrinsic_fermi_energy(T: float, material: MaterialParams) -> float:
    """eps_i = (eps_c + eps_v)/2 + (k_B T / 2) ln(P_v / N_c) in eV."""
    if T <= 0:
        raise DomainError("intrinsic_fermi_energy needs T > 0")
    # the DOS ratio reduces to the mass ratio
    return 0.5 * (material.eps_c + material.eps_v) + 0.75 * thermal_energy(T) * math.log(material.m_v / material.m_c)


def low_field_mobility(total_doping, mobility: MobilityFit):
    """Caughey-Thomas low-field mobility in cm^2/(V s)."""
    ratio = np.asarray(total_doping, dtype=float) / mobility.N_ref
    return mobility.mu_min + (mobility.mu_max - mobility.mu_min) / (1.0 + ratio**mobility.alpha_fit)
