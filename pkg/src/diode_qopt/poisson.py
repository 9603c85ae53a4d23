"""Regularized 1D Poisson solver for a p-n-n+ diode.

The unknown is the dimensionless potential

    psi = (e*phi + mu_l - eps_i - E_g/2) / (k_B T)

on a piecewise-uniform grid over [-d_l, d + d_r] with nodes on both
junctions (z = 0 is the p/n junction, z = d the n/n+ junction).  Every
exponential argument in the charge density goes through
``sigmoid_regulator`` so no iterate can overflow a double.  The
discrete problem is solved by damped Newton iterations on a tridiagonal
Jacobian, with a voltage ladder for large reverse bias.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq
from scipy.special import expit, logsumexp

from .material import (
    EXP_LIMIT,
    Q,
    DomainError,
    MaterialParams,
    effective_dos,
    intrinsic_fermi_energy,
    thermal_energy,
)

LN10 = math.log(10.0)
LN2 = math.log(2.0)
DEPLETION_THRESHOLD = 0.01
PLATEAU_FIELD_FRACTION = 0.01
MIN_LAYER_CELLS = 8


class ConvergenceError(RuntimeError):
    """Newton iteration failed; carries the last iterate and residual."""

    def __init__(self, message, psi=None, residual=float("nan")):
        super().__init__(message)
        self.psi = psi
        self.residual = residual


class BracketError(RuntimeError):
    """A boundary neutrality root could not be bracketed."""


@dataclass(frozen=True)
class DiodeDesign:
    N_a: float = 7e18
    N_n: float = 4e15
    N_d: float = 1.01e19
    d_l: float = 0.4
    d: float = 10.0
    d_r: float = 0.4
    V: float = 0.0
    T: float = 300.0

    def __post_init__(self):
        for name in ("N_a", "N_n", "N_d", "d_l", "d", "d_r", "T"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive and finite (got {value})")
        if not np.isfinite(self.V):
            raise DomainError("V must be finite")

    @property
    def length(self) -> float:
        return self.d_l + self.d + self.d_r

    def with_values(self, **changes) -> "DiodeDesign":
        return replace(self, **changes)


@dataclass(frozen=True)
class GridConfig:
    """Piecewise-uniform grid with nodes on both junctions.

    Cells are shared out among the three layers in proportion to their
    lengths (at least ``MIN_LAYER_CELLS`` each) unless ``layer_cells`` pins the
    counts.  Pinned counts make the discretization a smooth function of the
    layer lengths, which finite-difference gradients rely on.
    """

    n_points: int = 2001
    newton_tol: float = 1e-11
    newton_max_iter: int = 400
    damping: float = 1.0
    regulator: float = 308.0
    continuation_step: float = 100.0
    layer_cells: tuple | None = None

    def __post_init__(self):
        if self.n_points < 101:
            raise DomainError("n_points must be at least 101")
        if self.newton_tol <= 0:
            raise DomainError("newton_tol must be positive")
        if not (0 < self.damping <= 1):
            raise DomainError("damping must lie in (0, 1]")
        if self.layer_cells is not None:
            cells = tuple(int(c) for c in self.layer_cells)
            if len(cells) != 3 or min(cells) < MIN_LAYER_CELLS:
                raise DomainError(f"layer_cells needs three counts of at least {MIN_LAYER_CELLS}")
            object.__setattr__(self, "layer_cells", cells)
            object.__setattr__(self, "n_points", sum(cells) + 1)

    def cells(self, design: DiodeDesign) -> tuple:
        """Cell counts in the p, light-n and n+ layers."""
        if self.layer_cells is not None:
            return self.layer_cells
        total = self.n_points - 1
        lengths = np.array([design.d_l, design.d, design.d_r])
        spare = total - 3 * MIN_LAYER_CELLS
        share = spare * lengths / lengths.sum()
        counts = np.floor(share).astype(int)
        # largest remainders take the leftover cells
        for k in np.argsort(counts - share)[: spare - counts.sum()]:
            counts[k] += 1
        return tuple(int(c) + MIN_LAYER_CELLS for c in counts)

    def pinned(self, design: DiodeDesign) -> "GridConfig":
        return replace(self, layer_cells=self.cells(design))

    def nodes(self, design: DiodeDesign) -> np.ndarray:
        n_p, n_n, n_r = self.cells(design)
        return np.concatenate([
            np.linspace(-design.d_l, 0.0, n_p + 1),
            np.linspace(0.0, design.d, n_n + 1)[1:],
            np.linspace(design.d, design.d + design.d_r, n_r + 1)[1:],
        ])

    def spacing(self, design: DiodeDesign) -> tuple:
        """Node spacing (um) in the p, light-n and n+ layers."""
        return tuple(length / c for length, c in zip((design.d_l, design.d, design.d_r), self.cells(design)))


@dataclass
class PotentialSolution:
    z: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    E_field: np.ndarray
    rho_c: np.ndarray
    n_e: np.ndarray
    p_h: np.ndarray
    mu_l: float
    phi_inf: float
    converged: bool
    residual: float
    iterations: int = 0
    design: DiodeDesign | None = field(default=None, repr=False)


@dataclass(frozen=True)
class DepletionProfile:
    d_p: float
    dn_tilde: float
    d_n_plus: float
    fully_depleted_n: bool
    d_n_analytic: float
    V_c: float


def sigmoid_regulator(x, a: float = 308.0):
    """a ln10 tanh(x / (a ln10)); identity near 0, bounded by a ln10."""
    if a <= 0:
        raise DomainError("regulator bound must be positive")
    scale = a * LN10
    return scale * np.tanh(np.asarray(x, dtype=float) / scale)


def _regulator_slope(x, a: float):
    t = np.tanh(np.asarray(x, dtype=float) / (a * LN10))
    return 1.0 - t * t


# exp() results below this exponent are subnormal and slow; they are far below
# double resolution of any doping term, so they are flushed to zero.
FLUSH_EXPONENT = -700.0


def _flushed_exp(s):
    return np.where(s > FLUSH_EXPONENT, np.exp(np.maximum(s, FLUSH_EXPONENT)), 0.0)


def _occupancy(s):
    """1 / (2 e^s + 1) without subnormal intermediates."""
    arg = -(s + LN2)
    return np.where(arg > FLUSH_EXPONENT, expit(np.maximum(arg, FLUSH_EXPONENT)), 0.0)


class _ChargeModel:
    """Dimensionless charge density r(psi) = rho / (e N0) for one design."""

    def __init__(self, design: DiodeDesign, material: MaterialParams, a: float = 308.0):
        self.design = design
        self.material = material
        self.a = a
        T = design.T
        self.kT = thermal_energy(T)
        eps_i = intrinsic_fermi_energy(T, material)
        self.eps_i = eps_i
        self.n0 = max(design.N_a, design.N_n, design.N_d)
        nc = effective_dos(T, material.m_c)
        pv = effective_dos(T, material.m_v)
        self.log_band = 0.5 * (math.log(nc) + math.log(pv)) - math.log(self.n0)
        self.band = math.exp(self.log_band)
        self.g = material.E_g / self.kT
        self.v = design.V / self.kT
        self.c_a = (material.eps_a - eps_i - 0.5 * material.E_g) / self.kT
        self.c_d = (0.5 * material.E_g - material.eps_d + eps_i + design.V) / self.kT
        self.w_a = design.N_a / self.n0
        self.w_n = design.N_n / self.n0
        self.w_d = design.N_d / self.n0

    def terms(self, psi):
        """Regulated exponents and occupancies shared by r and dr/dpsi."""
        a = self.a
        x_e = psi + self.v
        x_h = -psi - self.g
        x_a = -psi + self.c_a
        x_d = psi + self.c_d
        s_e = sigmoid_regulator(x_e, a)
        s_h = sigmoid_regulator(x_h, a)
        s_a = sigmoid_regulator(x_a, a)
        s_d = sigmoid_regulator(x_d, a)
        with np.errstate(over="ignore"):
            electrons = self.band * _flushed_exp(s_e)
            holes = self.band * _flushed_exp(s_h)
        f_a = _occupancy(s_a)
        f_d = _occupancy(s_d)
        return (x_e, x_h, x_a, x_d), electrons, holes, f_a, f_d

    def density(self, psi, weights):
        wp, wn, wd = weights
        _, electrons, holes, f_a, f_d = self.terms(psi)
        with np.errstate(invalid="ignore"):
            return holes - electrons - self.w_a * wp * f_a + (self.w_n * wn + self.w_d * wd) * f_d

    def density_and_slope(self, psi, weights):
        wp, wn, wd = weights
        (x_e, x_h, x_a, x_d), electrons, holes, f_a, f_d = self.terms(psi)
        a = self.a
        donors = self.w_n * wn + self.w_d * wd
        r = holes - electrons - self.w_a * wp * f_a + donors * f_d
        dr = (
            -holes * _regulator_slope(x_h, a)
            - electrons * _regulator_slope(x_e, a)
            - self.w_a * wp * f_a * (1.0 - f_a) * _regulator_slope(x_a, a)
            - donors * f_d * (1.0 - f_d) * _regulator_slope(x_d, a)
        )
        return r, dr

    def log_balance(self, psi: float, region: str, regularized: bool = True) -> float:
        """log(positive charge) - log(negative charge) in a pure region; decreasing in psi."""
        reg = (lambda x: float(sigmoid_regulator(x, self.a))) if regularized else (lambda x: x)
        log_e = self.log_band + reg(psi + self.v)
        log_h = self.log_band + reg(-psi - self.g)
        pos, neg = [log_h], [log_e]
        if region == "p":
            neg.append(math.log(self.w_a) - np.logaddexp(0.0, reg(-psi + self.c_a) + LN2))
        else:
            w = self.w_n if region == "n" else self.w_d
            pos.append(math.log(w) - np.logaddexp(0.0, reg(psi + self.c_d) + LN2))
        return float(logsumexp(pos) - logsumexp(neg))

    def neutral_psi(self, region: str, regularized: bool = True) -> float:
        f = lambda x: self.log_balance(x, region, regularized)
        span = self.g + abs(self.v) + 50.0
        lo, hi = -span, span
        if not (f(lo) > 0 > f(hi)):
            raise BracketError(f"neutrality root for the {region} region is not bracketed in [{lo}, {hi}]")
        return brentq(f, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=500)


def boundary_levels(design: DiodeDesign, material: MaterialParams, regularized: bool = True,
                    a: float = 308.0) -> tuple[float, float]:
    """Return (mu_l in eV, phi_inf in V) from charge neutrality at both contacts.

    With ``regularized=False`` the neutrality conditions use plain exponentials;
    the default uses the same regulated density as the solver so that the end
    nodes are exactly neutral.
    """
    model = _ChargeModel(design, material, a)
    try:
        psi_left = model.neutral_psi("p", regularized)
    except BracketError as exc:
        raise BracketError(f"left boundary (p contact): {exc}") from None
    try:
        psi_right = model.neutral_psi("n+", regularized)
    except BracketError as exc:
        raise BracketError(f"right boundary (n+ contact): {exc}") from None
    mu_l = model.kT * psi_left + model.eps_i + 0.5 * material.E_g
    phi_inf = model.kT * (psi_right - psi_left)
    return mu_l, phi_inf


def _heaviside(x):
    return np.where(x > 0, 1.0, np.where(x < 0, 0.0, 0.5))


def charge_density(psi, z, design: DiodeDesign, material: MaterialParams, a: float = 308.0):
    """Regularized charge density rho(z, psi) in C/cm^3 (point evaluation of the windows)."""
    z = np.asarray(z, dtype=float)
    tol = 1e-12 * design.length
    if np.any(z < -design.d_l - tol) or np.any(z > design.d + design.d_r + tol):
        raise DomainError("z outside [-d_l, d + d_r]")
    model = _ChargeModel(design, material, a)
    # contacts belong to their outer layers
    wp = np.where(z <= -design.d_l, 1.0, _heaviside(z + design.d_l) * _heaviside(-z))
    wd = np.where(z >= design.d + design.d_r, 1.0, _heaviside(z - design.d) * _heaviside(design.d + design.d_r - z))
    wn = _heaviside(z) * _heaviside(design.d - z)
    r = model.density(np.asarray(psi, dtype=float), (wp, wn, wd))
    return Q * model.n0 * r


def _cell_weights(z, edges):
    """Fraction of each node's control volume lying in each layer."""
    mid = 0.5 * (z[1:] + z[:-1])
    left = np.concatenate(([z[0]], mid))
    right = np.concatenate((mid, [z[-1]]))
    width = right - left
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        overlap = np.clip(np.minimum(right, hi) - np.maximum(left, lo), 0.0, None)
        out.append(overlap / width)
    return tuple(out)


def _node_gradient(f, z):
    """Derivative at nodes as the width-weighted mean of the adjacent cell slopes.

    Central (second order) inside each uniform layer.  The trapezoid integral
    of the result telescopes exactly to f[-1] - f[0].
    """
    h = np.diff(z)
    slope = np.diff(f) / h
    out = np.empty_like(f)
    out[0], out[-1] = slope[0], slope[-1]
    out[1:-1] = (h[:-1] * slope[:-1] + h[1:] * slope[1:]) / (h[:-1] + h[1:])
    return out


class _Discretization:
    """Finite-volume form of psi'' = -lambda r(psi), scaled by the widest spacing."""

    def __init__(self, design, material, grid: GridConfig):
        self.design = design
        self.model = _ChargeModel(design, material, grid.regulator)
        self.z = grid.nodes(design)
        edges = (-design.d_l, 0.0, design.d, design.d + design.d_r)
        self.weights = _cell_weights(self.z, edges)
        h = np.diff(self.z)
        self.h_ref = float(h.max())
        self.h_minus, self.h_plus = h[:-1], h[1:]
        self.upper = self.h_ref / self.h_plus
        self.lower = self.h_ref / self.h_minus
        eps = material.permittivity
        kT_joule = self.model.kT * Q
        lam = Q * Q * self.model.n0 * 1e6 / (eps * kT_joule) * 1e-12   # 1/um^2
        self.lam_h2 = lam * self.h_ref * self.h_ref
        # control-volume width relative to h_ref
        self.volume = 0.5 * (self.h_minus + self.h_plus) / self.h_ref

    def residual(self, psi):
        r = self.model.density(psi[1:-1], tuple(w[1:-1] for w in self.weights))
        with np.errstate(over="ignore", invalid="ignore"):
            return (self.upper * (psi[2:] - psi[1:-1]) - self.lower * (psi[1:-1] - psi[:-2])
                    + self.lam_h2 * self.volume * r)

    def jacobian(self, psi):
        inner = tuple(w[1:-1] for w in self.weights)
        r, dr = self.model.density_and_slope(psi[1:-1], inner)
        F = (self.upper * (psi[2:] - psi[1:-1]) - self.lower * (psi[1:-1] - psi[:-2])
             + self.lam_h2 * self.volume * r)
        ab = np.zeros((3, F.size))
        ab[0, 1:] = self.upper[:-1]
        ab[1, :] = -(self.upper + self.lower) + self.lam_h2 * self.volume * dr
        ab[2, :-1] = self.lower[1:]
        return F, ab

    def scaled_norm(self, F) -> float:
        with np.errstate(over="ignore"):
            return float(np.sqrt(np.mean(F * F)) / self.lam_h2)

    def neutral_guess(self, psi_left, psi_right):
        psi_n = self.model.neutral_psi("n")
        wp, wn, wd = self.weights
        return wp * psi_left + wn * psi_n + wd * psi_right


def _newton(disc: _Discretization, psi, grid: GridConfig):
    floor = 2.0 ** -20
    F, ab = disc.jacobian(psi)
    norm = disc.scaled_norm(F)
    for it in range(1, grid.newton_max_iter + 1):
        delta = solve_banded((1, 1), ab, -F, check_finite=False)
        if float(np.max(np.abs(delta))) <= grid.newton_tol * max(1.0, float(np.max(np.abs(psi)))):
            psi = psi.copy()
            psi[1:-1] += delta
            return psi, disc.scaled_norm(disc.residual(psi)), it
        t = grid.damping
        while True:
            trial = psi.copy()
            trial[1:-1] += t * delta
            F_t = disc.residual(trial)
            norm_t = disc.scaled_norm(F_t) if np.all(np.isfinite(F_t)) else math.inf
            if norm_t < norm or t <= floor:
                break
            t *= 0.5
        if not math.isfinite(norm_t):
            raise ConvergenceError("Newton iterate left the finite range", psi, norm)
        psi = trial
        F, ab = disc.jacobian(psi)
        norm = disc.scaled_norm(F)
    raise ConvergenceError(f"Newton did not converge in {grid.newton_max_iter} iterations (residual {norm:.3e})",
                           psi, norm)


def _solve_fixed(design, material, grid, guess=None):
    """Newton solve at a single bias; returns (disc, psi, residual, iterations, levels)."""
    levels = boundary_levels(design, material, a=grid.regulator)
    disc = _Discretization(design, material, grid)
    model = disc.model
    psi_left = (levels[0] - model.eps_i - 0.5 * material.E_g) / model.kT
    psi_right = psi_left + levels[1] / model.kT
    if guess is None:
        psi = disc.neutral_guess(psi_left, psi_right)
    else:
        # shift a neighbouring solution onto the new boundary values with a linear ramp
        s = (disc.z - disc.z[0]) / (disc.z[-1] - disc.z[0])
        psi = guess + (psi_left - guess[0]) * (1.0 - s) + (psi_right - guess[-1]) * s
    psi[0], psi[-1] = psi_left, psi_right
    psi, res, its = _newton(disc, psi, grid)
    return disc, psi, res, its, levels


def _ladder(V: float, step: float) -> list[float]:
    if abs(V) <= step:
        return [V]
    n = int(math.ceil(abs(V) / step))
    return [V * k / n for k in range(1, n + 1)]


def solve_poisson(design: DiodeDesign, material: MaterialParams | None = None,
                  grid: GridConfig | None = None) -> PotentialSolution:
    """Solve the regularized Poisson problem and derive field and carrier profiles."""
    material = material or MaterialParams()
    grid = grid or GridConfig()
    try:
        disc, psi, res, its, levels = _solve_fixed(design, material, grid)
        return _assemble(design, material, disc, psi, res, its, levels)
    except ConvergenceError:
        if abs(design.V) <= grid.continuation_step:
            raise
    # voltage ladder, each rung seeded with the previous solution
    psi = None
    total_its = 0
    for V_k in _ladder(design.V, grid.continuation_step):
        disc, psi, res, its, levels = _solve_fixed(design.with_values(V=V_k), material, grid, psi)
        total_its += its
    return _assemble(design, material, disc, psi, res, total_its, levels)


def _assemble(design, material, disc, psi, res, its, levels):
    model = disc.model
    mu_l, phi_inf = levels
    phi = (model.kT * psi - mu_l + model.eps_i + 0.5 * material.E_g)
    phi = phi - phi[0]  # exact zero at the left contact
    phi[-1] = phi_inf
    E_field = -_node_gradient(phi, disc.z * 1e-4)
    (_, _, _, _), electrons, holes, _, _ = model.terms(psi)
    n_e = electrons * model.n0
    p_h = holes * model.n0
    rho = Q * model.n0 * model.density(psi, disc.weights)
    return PotentialSolution(z=disc.z, psi=psi, phi=phi, E_field=E_field, rho_c=rho, n_e=n_e,
                             p_h=p_h, mu_l=mu_l, phi_inf=phi_inf, converged=True, residual=res,
                             iterations=its, design=design)


def analytic_depletion_width(design: DiodeDesign, material: MaterialParams) -> float:
    """Abrupt-junction width of the light-n depletion layer in um (phi_inf taken as E_g/e - V)."""
    eps = material.permittivity
    Na, Nn = design.N_a * 1e6, design.N_n * 1e6
    phi = material.E_g - design.V
    if phi <= 0:
        return 0.0
    return math.sqrt(2 * eps * phi / Q * (Na / Nn) / (Na + Nn)) * 1e6


def critical_voltage(design: DiodeDesign, material: MaterialParams) -> float:
    """Bias (V) at which the light-n layer becomes fully depleted in the abrupt model."""
    eps = material.permittivity
    Na, Nn = design.N_a * 1e6, design.N_n * 1e6
    d = design.d * 1e-6
    return -(Q * d * d / (2 * eps)) * Nn * (Na + Nn) / Na


def _crossing(z, log_c, k, log_thr):
    """Where log density reaches log_thr between nodes k-1 and k.

    A cubic through up to four surrounding nodes keeps the estimate smooth as
    nodes slide past the crossing; falls back to linear when fewer are given.
    """
    lo, hi = max(k - 2, 0), min(k + 2, z.size)
    zs, ls = z[lo:hi], log_c[lo:hi]
    if zs.size >= 4 and np.all(np.isfinite(ls)):
        coef = np.polyfit(zs - z[k - 1], ls - log_thr, 3)
        f_a, f_b = np.polyval(coef, 0.0), np.polyval(coef, z[k] - z[k - 1])
        if f_a < 0 <= f_b:
            return z[k - 1] + brentq(lambda t: np.polyval(coef, t), 0.0, z[k] - z[k - 1], xtol=1e-15)
    la, lb = log_c[k - 1], log_c[k]
    if lb == la:
        return z[k]
    t = min(max((log_thr - la) / (lb - la), 0.0), 1.0)
    return z[k - 1] + t * (z[k] - z[k - 1])


def _depleted_extent(z, carriers, thr, junction, outer, direction):
    """Distance from the junction to where carriers first reach thr, walking into the layer.

    Returns (width, reached).  The junction is a grid node.
    """
    if direction > 0:
        idx = np.nonzero((z >= junction) & (z <= outer))[0]
    else:
        idx = np.nonzero((z <= junction) & (z >= outer))[0][::-1]
    span = abs(outer - junction)
    if idx.size < 2:
        return span, False
    zs = direction * (z[idx] - junction)   # distance into the layer, increasing
    with np.errstate(divide="ignore"):
        log_c = np.log(np.maximum(carriers[idx], 1e-300))
    log_thr = math.log(thr)
    above = np.nonzero(log_c >= log_thr)[0]
    if above.size == 0:
        return span, False
    k = int(above[0])
    if k == 0:
        return 0.0, True
    return min(max(_crossing(zs, log_c, k, log_thr), 0.0), span), True


def depletion_profile(solution: PotentialSolution, design: DiodeDesign,
                      material: MaterialParams) -> DepletionProfile:
    """Depleted widths from the carrier profile: carriers below 1% of the local doping.

    The light-n layer counts as fully depleted when no neutral plateau (field
    below 1% of its peak) survives between its depletion edge and the n/n+
    junction; electrons spilling over from the n+ side are then ignored.
    """
    z, n, p = solution.z, solution.n_e, solution.p_h
    thr = DEPLETION_THRESHOLD
    d_p, _ = _depleted_extent(z, p, thr * design.N_a, 0.0, -design.d_l, -1)
    dn, reached = _depleted_extent(z, n, thr * design.N_n, 0.0, design.d, +1)
    d_np, _ = _depleted_extent(z, n, thr * design.N_d, design.d, design.d + design.d_r, +1)
    fully = not reached
    if reached:
        E = np.abs(solution.E_field)
        tail = (z > dn) & (z < design.d)
        if not np.any(E[tail] < PLATEAU_FIELD_FRACTION * E.max()):
            fully = True
    if fully:
        dn = design.d
    return DepletionProfile(d_p=d_p, dn_tilde=dn, d_n_plus=d_np, fully_depleted_n=fully,
                            d_n_analytic=analytic_depletion_width(design, material),
                            V_c=critical_voltage(design, material))
