"""Reverse leakage through field-enhanced trap emission and the surface noise it feeds.

Trap-assisted tunnelling (Hurkx) multiplies the SRH thermal emission rates,
the Poole-Frenkel effect lowers the trap level, and the resulting generation
rate is integrated over the depletion region.  Carriers in transit give an
effective density that is spread over a thin surface layer as a
half-Gaussian; fluctuating dipoles in that layer broaden the line
electrically (Gaussian, from the field variance) and magnetically
(Lorentzian, from Johnson noise of the Drude sheet).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad, simpson, trapezoid

from .linewidth import GAUSS_FACTOR, SpinCenterParams
from .material import (
    H_PLANCK,
    HBAR,
    K_B,
    M_E,
    MU0_VACUUM,
    MU_B,
    Q,
    DomainError,
    MaterialParams,
    effective_dos,
    low_field_mobility,
    thermal_energy,
)
from .poisson import DepletionProfile, DiodeDesign, PotentialSolution, depletion_profile

DEPTH_POINTS = 1024


class ClampWarning(RuntimeWarning):
    """The Poole-Frenkel shifted trap level was clamped to a band edge."""


class EmissionRates(NamedTuple):
    e_n: np.ndarray
    e_p: np.ndarray
    clamped: bool


@dataclass
class DepthProfile:
    x: np.ndarray          # depth below the surface (nm)
    n_V: np.ndarray        # carrier density (cm^-3)
    n_eff: float
    D_depth: float


@dataclass
class LeakageResult:
    J_tat: float
    n_eff: float
    profile: DepthProfile
    gamma_E_surface: float
    gamma_B_surface: float


def _tunnel_constant(E_abs, material: MaterialParams):
    """K = (4/3) sqrt(2 m*) (eps_c - eps_v)^{3/2} / (e hbar |E|) with E in V/cm."""
    gap = material.E_g * Q
    return (4.0 / 3.0) * math.sqrt(2.0 * material.m_star * M_E) * gap**1.5 / (Q * HBAR * E_abs * 100.0)


def log_field_enhancement(E: float, T: float, material: MaterialParams) -> float:
    """Natural log of the Hurkx factor; -inf at zero field."""
    if T <= 0:
        raise DomainError("T must be positive")
    E_abs = abs(float(E))
    if E_abs == 0.0:
        return -math.inf
    b = material.E_g / thermal_energy(T)
    K = _tunnel_constant(E_abs, material)
    f = lambda u: b * u - K * u**1.5
    # interior maximum of the exponent (if any) anchors the log-domain quadrature
    u_star = min((2.0 * b / (3.0 * K)) ** 2, 1.0)
    peak = max(f(u_star), 0.0)
    width = 1.0 / math.sqrt(max(b, 1.0))
    points = sorted({max(u_star - 5 * width, 0.0), u_star, min(u_star + 5 * width, 1.0)} - {0.0, 1.0})
    val, _ = quad(lambda u: math.exp(f(u) - peak), 0.0, 1.0, points=points or None,
                  epsabs=0.0, epsrel=1e-12, limit=200)
    return math.log(b) + peak + math.log(val)


def field_enhancement_factor(E, T: float, material: MaterialParams | None = None):
    """Hurkx enhancement Gamma = (D/kT) int_0^1 exp(D u/kT - K u^{3/2}) du, D = E_g; E in V/cm."""
    material = material or MaterialParams()
    E_arr = np.atleast_1d(np.asarray(E, dtype=float))
    out = np.array([math.exp(min(log_field_enhancement(e, T, material), 709.0)) if e != 0 else 0.0
                    for e in E_arr])
    return out if np.ndim(E) else float(out[0])


def poole_frenkel_shift(E, material: MaterialParams):
    """Barrier lowering beta_PF sqrt(E) in eV (E in V/cm)."""
    E_si = np.abs(np.asarray(E, dtype=float)) * 100.0
    return np.sqrt(Q / (math.pi * material.permittivity)) * np.sqrt(E_si)


def emission_rates(E, T: float, material: MaterialParams | None = None,
                   enhancement=None) -> EmissionRates:
    """Electron and hole emission rates (1/s) of the trap at field E (V/cm)."""
    material = material or MaterialParams()
    if T <= 0:
        raise DomainError("T must be positive")
    trap = material.trap
    kT = thermal_energy(T)
    eps_t = trap.eps_t0 - poole_frenkel_shift(E, material)
    clamped = bool(np.any((eps_t <= material.eps_v) | (eps_t >= material.eps_c)))
    if clamped:
        warnings.warn("Poole-Frenkel shift pushed the trap level to a band edge", ClampWarning, stacklevel=2)
        eps_t = np.clip(eps_t, material.eps_v, material.eps_c)
    v_th = math.sqrt(3.0 * K_B * T / (material.m_star * M_E)) * 100.0
    c_n, c_p = v_th * trap.sigma_n, v_th * trap.sigma_p
    N_c, N_v = effective_dos(T, material.m_c), effective_dos(T, material.m_v)
    if enhancement is None:
        enhancement = field_enhancement_factor(E, T, material)
    boost = 1.0 + np.asarray(enhancement)
    e_n = c_n * N_c * np.exp(-(material.eps_c - eps_t) / kT) * boost
    e_p = c_p * N_v * np.exp(-(eps_t - material.eps_v) / kT) * boost
    return EmissionRates(e_n, e_p, clamped)


def trap_occupation(e_n: float, e_p: float, N_t: float, n_t0: float, t="steady"):
    """Occupied trap density (cm^-3) at time t (s), or the steady state for t='steady'."""
    if e_n < 0 or e_p < 0 or e_n + e_p <= 0:
        raise DomainError("rates must be non-negative with a positive sum")
    if not (0.0 <= n_t0 <= N_t):
        raise DomainError("n_t0 must lie in [0, N_t]")
    steady = N_t * e_p / (e_n + e_p)
    if t is None or t == "steady":
        return steady
    return steady + (n_t0 - steady) * np.exp(-(e_n + e_p) * np.asarray(t, dtype=float))


def _harmonic(e_n, e_p):
    with np.errstate(invalid="ignore", divide="ignore"):
        g = e_n * e_p / (e_n + e_p)
    return np.where((e_n + e_p) > 0, g, 0.0)


def generation_rate(z, solution: PotentialSolution, material: MaterialParams | None = None):
    """Trap-assisted generation rate (cm^-3 s^-1) at positions z (um)."""
    material = material or MaterialParams()
    E = np.interp(np.asarray(z, dtype=float), solution.z, solution.E_field)
    T = solution.design.T if solution.design is not None else 300.0
    rates = emission_rates(E, T, material)
    return material.trap.N_t * _harmonic(rates.e_n, rates.e_p)


def _depletion_window(solution, design, depletion):
    lo = -depletion.d_p
    hi = depletion.dn_tilde + depletion.d_n_plus
    inside = (solution.z > lo) & (solution.z < hi)
    return np.concatenate(([lo], solution.z[inside], [hi]))


def leakage_current(design: DiodeDesign, solution: PotentialSolution, material: MaterialParams | None = None,
                    depletion: DepletionProfile | None = None) -> float:
    """J = q int G dz over the depletion region, in A/cm^2."""
    material = material or MaterialParams()
    depletion = depletion or depletion_profile(solution, design, material)
    zq = _depletion_window(solution, design, depletion)
    G = generation_rate(zq, solution, material)
    return Q * float(trapezoid(G, zq * 1e-4))


def drift_velocity(E, total_doping, material: MaterialParams | None = None):
    """Carrier drift speed (cm/s) with velocity saturation; E in V/cm."""
    material = material or MaterialParams()
    fit = material.mobility
    E = np.abs(np.asarray(E, dtype=float))
    mu0 = low_field_mobility(total_doping, fit)
    mu = mu0 / (1.0 + (mu0 * E / fit.v_sat) ** fit.beta_fit) ** (1.0 / fit.beta_fit)
    return mu * E


def _total_doping(z, design: DiodeDesign):
    return np.where(z < 0, design.N_a, np.where(z < design.d, design.N_n, design.N_d))


def half_gaussian_profile(n_eff: float, trap, n_points: int = DEPTH_POINTS) -> DepthProfile:
    """Half-Gaussian density peaked at the surface with integral n_eff * D over [0, D]."""
    x = np.linspace(0.0, trap.D_depth, n_points)
    sigma = trap.fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    shape = np.exp(-0.5 * (x / sigma) ** 2)
    norm = simpson(shape, x=x)
    n_V = n_eff * trap.D_depth * shape / norm
    return DepthProfile(x=x, n_V=n_V, n_eff=n_eff, D_depth=trap.D_depth)


def effective_density(design: DiodeDesign, solution: PotentialSolution, material: MaterialParams | None = None,
                      depletion: DepletionProfile | None = None):
    """n_eff = (1/W) int (1/v_d) [int G dz'] dz over the depletion span; returns (n_eff, profile)."""
    material = material or MaterialParams()
    depletion = depletion or depletion_profile(solution, design, material)
    zq = _depletion_window(solution, design, depletion)
    W = zq[-1] - zq[0]
    if W <= 0:
        raise DomainError("no depletion region: W = 0")
    G = generation_rate(zq, solution, material)
    n_eff = _transit_average(zq * 1e-4, G, np.interp(zq, solution.z, solution.E_field),
                             _total_doping(zq, design), material)
    return n_eff, half_gaussian_profile(n_eff, material.trap)


def _transit_average(z_cm, G, E, doping, material):
    flux = cumulative_trapezoid(G, z_cm, initial=0.0)
    v = drift_velocity(E, doping, material)
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(flux > 0, flux / v, 0.0)
    return float(trapezoid(integrand, z_cm) / (z_cm[-1] - z_cm[0]))


def _check_depth(x_def, profile: DepthProfile):
    x_def = np.asarray(x_def, dtype=float)
    if np.any(x_def <= profile.D_depth):
        raise DomainError("x_def must lie below the trap layer (x_def > D_depth)")
    return x_def


def _depth_kernel(x_def, profile: DepthProfile, power: int):
    """int_0^D n_V(x') / |x - x'|^power dx' in SI (m^-3 m^{1-power})."""
    x = profile.x * 1e-9
    n = profile.n_V * 1e6
    xd = np.atleast_1d(x_def) * 1e-9
    return np.array([simpson(n / np.abs(xi - x) ** power, x=x) for xi in xd])


def surface_electric_linewidth(profile: DepthProfile, x_def, spin: SpinCenterParams | None = None,
                               material: MaterialParams | None = None):
    """Gaussian linewidth (MHz) from surface dipole fluctuations at depth x_def (nm)."""
    spin = spin or SpinCenterParams()
    material = material or MaterialParams()
    x_def = _check_depth(x_def, profile)
    angular = 8.0 / 3.0 if spin.theta is None else 3.0 + math.cos(2.0 * spin.theta)
    coulomb = Q / (4.0 * math.pi * material.permittivity)
    a = math.pi * angular / 8.0 * coulomb**2 * _depth_kernel(x_def, profile, 4)
    variance = spin.dipole_var * 1e-18 * a          # (V/m)^2
    gamma = GAUSS_FACTOR * spin.mu_z * np.sqrt(variance) / 100.0 / 1e6
    return gamma if np.ndim(x_def) else float(gamma[0])


def scattering_time(material: MaterialParams, total_doping: float) -> float:
    """Drude scattering time mu_0 m* / e in s."""
    mu0 = float(low_field_mobility(total_doping, material.mobility)) * 1e-4
    return mu0 * material.m_star * M_E / Q


def surface_magnetic_linewidth(profile: DepthProfile, x_def, spin: SpinCenterParams | None = None,
                               material: MaterialParams | None = None, T: float = 300.0,
                               total_doping: float | None = None):
    """Lorentzian linewidth (MHz) from Johnson magnetic noise of the surface carriers."""
    spin = spin or SpinCenterParams()
    material = material or MaterialParams()
    x_def = _check_depth(x_def, profile)
    if spin.tau_e is not None:
        tau = spin.tau_e
    else:
        tau = scattering_time(material, total_doping if total_doping is not None else material.mobility.N_ref)
    m_c = material.m_c * M_E
    S_B = K_B * T * MU0_VACUUM**2 * Q**2 * tau / (8.0 * math.pi * m_c) * _depth_kernel(x_def, profile, 2)
    eta = 8.0 * math.pi * MU_B**2 * spin.g_eff**2 / H_PLANCK**2
    gamma = eta * S_B / 1e6
    return gamma if np.ndim(x_def) else float(gamma[0])


def leakage_report(design: DiodeDesign, solution: PotentialSolution, material: MaterialParams | None = None,
                   spin: SpinCenterParams | None = None) -> LeakageResult:
    material = material or MaterialParams()
    spin = spin or SpinCenterParams()
    depletion = depletion_profile(solution, design, material)
    J = leakage_current(design, solution, material, depletion)
    n_eff, profile = effective_density(design, solution, material, depletion)
    gE = surface_electric_linewidth(profile, spin.x_def, spin, material)
    gB = surface_magnetic_linewidth(profile, spin.x_def, spin, material, design.T, design.N_n)
    return LeakageResult(J_tat=J, n_eff=n_eff, profile=profile, gamma_E_surface=gE, gamma_B_surface=gB)
