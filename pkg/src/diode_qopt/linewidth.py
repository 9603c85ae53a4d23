"""Optical linewidth of a spin center from majority-carrier charge noise.

Fluctuating dopant dipoles in the non-depleted parts of the diode produce a
random electric field at the defect.  Each undepleted slab contributes

    |dE|^2 = (e / 4 pi eps)^2 * d_i^2 * (pi / 3 Omega) * (a^-3 - b^-3)

where a and b are the near and far distances of the slab, Omega = 1/N and
d_i = Omega^(1/3).  A defect sitting inside the undepleted light-n layer sees
the bulk value e N^(2/3) / (sqrt(2) pi eps) instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .material import Q, DomainError, MaterialParams
from .poisson import DepletionProfile, DiodeDesign, GridConfig, depletion_profile, solve_poisson

GAUSS_FACTOR = math.sqrt(2.0 * math.log(2.0) / math.pi)
# Stark susceptibility (Hz per V/cm) calibrated so that the baseline diode at
# V = -5 V gives a 11.1 MHz linewidth at z_def = 0.85 um (default material,
# 2001-node grid).  Regenerate with ``calibrate_stark_susceptibility``.
CALIBRATED_MU_Z = 9.5291998e5
COARSE_SCAN_POINTS = 512


@dataclass(frozen=True)
class SpinCenterParams:
    mu_z: float = CALIBRATED_MU_Z
    g_eff: float = 2.0
    z_def: float = 0.85
    x_def: float = 100.0
    theta: float | None = None
    dipole_var: float = 0.01
    tau_e: float | None = None

    def __post_init__(self):
        if self.mu_z <= 0 or self.g_eff <= 0:
            raise DomainError("mu_z and g_eff must be positive")
        if self.theta is not None and not (0.0 <= self.theta <= math.pi):
            raise DomainError("theta must lie in [0, pi]")
        if self.dipole_var < 0:
            raise DomainError("dipole_var must be non-negative")


@dataclass
class LinewidthReport:
    gamma_majority: float
    components: dict = field(default_factory=dict)
    z_def: float = float("nan")
    z_opt: float = float("nan")
    gamma_opt: float = float("nan")


def _shell_field(density_cm3: float, near_um: float, far_um: float, eps: float, label: str) -> float:
    """Field spread (V/m) from an undepleted slab spanning distances [near, far] from the defect."""
    N = density_cm3 * 1e6
    near, far = near_um * 1e-6, far_um * 1e-6
    if near <= 0:
        raise DomainError(f"{label}: defect touches the undepleted region (distance {near_um} um)")
    bracket = near**-3 - far**-3
    if bracket < -1e-12 * near**-3:
        raise DomainError(f"{label}: negative bracket, far edge {far_um} um closer than near edge {near_um} um")
    bracket = max(bracket, 0.0)
    d_i = N ** (-1.0 / 3.0)
    return Q / (4 * math.pi * eps) * d_i * math.sqrt(math.pi * N / 3.0) * math.sqrt(bracket)


def bulk_field(density_cm3: float, eps: float) -> float:
    """Field spread (V/m) for a defect inside an undepleted layer."""
    return Q / (math.sqrt(2.0) * math.pi * eps) * (density_cm3 * 1e6) ** (2.0 / 3.0)


def delta_E_total(design: DiodeDesign, depletion: DepletionProfile, z_def: float,
                  material: MaterialParams | None = None):
    """Return (|dE| in V/cm, components in V/cm) at position z_def (um)."""
    material = material or MaterialParams()
    if not (0.0 < z_def < design.d):
        raise DomainError(f"z_def={z_def} um outside the light-n layer (0, {design.d})")
    eps = material.permittivity
    dep = depletion
    e_p = _shell_field(design.N_a, dep.d_p + z_def, design.d_l + z_def, eps, "p shell")
    e_np = _shell_field(design.N_d, design.d + dep.d_n_plus - z_def, design.d + design.d_r - z_def, eps,
                        "n+ shell")
    e_bulk = bulk_field(design.N_n, eps)
    if z_def < dep.dn_tilde:
        e_n = _shell_field(design.N_n, dep.dn_tilde - z_def, design.d - z_def, eps, "n shell")
        e_light = e_n
    else:
        e_n = math.inf
        e_light = e_bulk
    total = math.sqrt(e_p**2 + e_np**2 + e_light**2) / 100.0
    components = {"p": e_p / 100.0, "n_plus": e_np / 100.0, "n_shell": e_n / 100.0, "n_bulk": e_bulk / 100.0}
    return total, components


def delta_E_profile(design: DiodeDesign, depletion: DepletionProfile, z, material: MaterialParams):
    """Vectorized |dE| (V/cm) over an array of positions inside (0, d)."""
    z = np.asarray(z, dtype=float) * 1e-6
    eps = material.permittivity
    pref = Q / (4 * math.pi * eps) * math.sqrt(math.pi / 3.0)

    def shell(N_cm3, near, far):
        N = N_cm3 * 1e6
        with np.errstate(divide="ignore", invalid="ignore"):
            br = np.clip(near**-3 - far**-3, 0.0, None)
        return pref * N ** (1.0 / 6.0) * np.sqrt(br)

    um = 1e-6
    e_p = shell(design.N_a, depletion.d_p * um + z, design.d_l * um + z)
    e_np = shell(design.N_d, (design.d + depletion.d_n_plus) * um - z, (design.d + design.d_r) * um - z)
    e_bulk = bulk_field(design.N_n, eps)
    edge = depletion.dn_tilde * um
    with np.errstate(divide="ignore", invalid="ignore"):
        e_n = np.where(z < edge, shell(design.N_n, edge - z, design.d * um - z), np.inf)
    e_light = np.where(z < edge, e_n, e_bulk)
    return np.sqrt(e_p**2 + e_np**2 + e_light**2) / 100.0


def linewidth_majority(delta_E: float, spin: SpinCenterParams) -> float:
    """Gaussian linewidth (MHz) from the total field spread |dE| (V/cm), isotropic noise."""
    if np.any(np.asarray(delta_E) < 0):
        raise DomainError("delta_E must be non-negative")
    return GAUSS_FACTOR * spin.mu_z * (np.asarray(delta_E) / math.sqrt(3.0)) / 1e6


def _golden_section(f, a, b, tol):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def minimize_over_position(design: DiodeDesign, depletion: DepletionProfile, material: MaterialParams,
                           spin: SpinCenterParams, n_scan: int = COARSE_SCAN_POINTS, rel_tol: float = 1e-9):
    """Coarse scan over (0, d) followed by golden-section refinement; returns (z_opt, gamma_opt)."""
    d = design.d
    zs = d * (np.arange(n_scan) + 0.5) / n_scan
    gam = linewidth_majority(delta_E_profile(design, depletion, zs, material), spin)
    k = int(np.argmin(gam))
    lo = zs[k - 1] if k > 0 else 0.5 * zs[0]
    hi = zs[k + 1] if k < n_scan - 1 else 0.5 * (zs[-1] + d)
    f = lambda z: float(linewidth_majority(delta_E_profile(design, depletion, np.array([z]), material)[0], spin))
    z_opt, g_opt = _golden_section(f, lo, hi, rel_tol * d)
    if gam[k] < g_opt:
        z_opt, g_opt = float(zs[k]), float(gam[k])
    return z_opt, g_opt


def optimal_defect_position(design: DiodeDesign, material: MaterialParams | None = None,
                            spin: SpinCenterParams | None = None, grid: GridConfig | None = None,
                            solution=None):
    """Position in (0, d) that minimizes the majority-carrier linewidth, and that linewidth (MHz)."""
    material = material or MaterialParams()
    spin = spin or SpinCenterParams()
    solution = solution or solve_poisson(design, material, grid)
    depletion = depletion_profile(solution, design, material)
    return minimize_over_position(design, depletion, material, spin)


def linewidth_report(design: DiodeDesign, material: MaterialParams | None = None,
                     spin: SpinCenterParams | None = None, grid: GridConfig | None = None) -> LinewidthReport:
    material = material or MaterialParams()
    spin = spin or SpinCenterParams()
    solution = solve_poisson(design, material, grid)
    depletion = depletion_profile(solution, design, material)
    dE, comps = delta_E_total(design, depletion, spin.z_def, material)
    z_opt, g_opt = minimize_over_position(design, depletion, material, spin)
    return LinewidthReport(gamma_majority=float(linewidth_majority(dE, spin)), components=comps,
                           z_def=spin.z_def, z_opt=z_opt, gamma_opt=g_opt)


def calibrate_stark_susceptibility(target_mhz: float = 11.1, design: DiodeDesign | None = None,
                                   z_def: float = 0.85, material: MaterialParams | None = None,
                                   grid: GridConfig | None = None) -> float:
    """mu_z (Hz per V/cm) that reproduces ``target_mhz`` at ``z_def`` for ``design``."""
    material = material or MaterialParams()
    design = design or DiodeDesign(V=-5.0)
    solution = solve_poisson(design, material, grid)
    dE, _ = delta_E_total(design, depletion_profile(solution, design, material), z_def, material)
    return target_mhz * 1e6 / (GAUSS_FACTOR * dE / math.sqrt(3.0))


def lineshape_eval(omega, kind: str, width_param: float):
    """Unit-normalized Gaussian or Lorentzian lineshape (s) at angular frequency omega."""
    if width_param <= 0:
        raise DomainError("width_param must be positive")
    omega = np.asarray(omega, dtype=float)
    g = width_param
    if kind == "gaussian":
        return np.exp(-(omega**2) / (4 * g * g)) / (2 * math.sqrt(math.pi) * g)
    if kind == "lorentzian":
        return g / (math.pi * (g * g + omega**2))
    raise DomainError(f"unknown lineshape kind {kind!r}")
