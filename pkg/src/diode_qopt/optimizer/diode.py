"""Diode objective and design constraints for the generic engine."""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from ..linewidth import SpinCenterParams, optimal_defect_position
from ..material import MaterialParams
from ..poisson import DiodeDesign, GridConfig, PotentialSolution, depletion_profile, solve_poisson
from .engine import Constraint, ConstraintSet, ParameterVector

PARAMETER_NAMES = ("N_a", "N_n", "N_d", "d_l", "d", "d_r", "V")
DENSITY_NAMES = ("N_a", "N_n", "N_d")
LENGTH_NAMES = ("d_l", "d", "d_r")
SCALE_FLOORS = {"N_a": 1e14, "N_n": 1e14, "N_d": 1e14, "d_l": 0.1, "d": 0.1, "d_r": 0.1, "V": 1.0}


@dataclass(frozen=True)
class DesignBounds:
    N_n_min: float = 1e14
    N_a_min: float = 1e17
    N_d_min: float = 1e17
    density_cap: float = 5e19
    length_min: float = 0.1
    omega: float = 0.95

    def lower(self, name: str) -> float:
        return {"N_a": self.N_a_min, "N_n": self.N_n_min, "N_d": self.N_d_min}.get(name, self.length_min)


def parameter_vector(design: DiodeDesign, active) -> ParameterVector:
    """Full 7-entry vector from a design, with ``active`` naming the free entries."""
    active = set(active)
    unknown = active - set(PARAMETER_NAMES)
    if unknown:
        raise ValueError(f"unknown parameter names: {sorted(unknown)}")
    values = [getattr(design, n) for n in PARAMETER_NAMES]
    return ParameterVector(PARAMETER_NAMES, values, [n in active for n in PARAMETER_NAMES])


def scale_floors(names=PARAMETER_NAMES) -> np.ndarray:
    return np.array([SCALE_FLOORS[n] for n in names])


class DiodeProblem:
    """Maps parameter vectors to designs and memoizes Poisson solves.

    Objective, breakdown constraint and finite-difference probes at the same
    point share one solve.  The per-layer cell counts are frozen from the
    starting design so that the grid moves smoothly with the layer lengths.
    """

    def __init__(self, fixed: DiodeDesign, material: MaterialParams | None = None,
                 spin: SpinCenterParams | None = None, grid: GridConfig | None = None,
                 names=PARAMETER_NAMES, cache_size: int = 512):
        self.fixed = fixed
        self.material = material or MaterialParams()
        self.spin = spin or SpinCenterParams()
        self.grid = (grid or GridConfig()).pinned(fixed)
        self.names = tuple(names)
        self._solve = lru_cache(maxsize=cache_size)(self._solve_uncached)

    def design(self, values) -> DiodeDesign:
        return replace(self.fixed, **{n: float(v) for n, v in zip(self.names, values)})

    def _solve_uncached(self, design: DiodeDesign) -> PotentialSolution:
        return solve_poisson(design, self.material, self.grid)

    def solution(self, values) -> PotentialSolution:
        return self._solve(self.design(values))

    def objective(self, values):
        """(Gamma_opt in MHz, {"z_opt": um}) for the engine."""
        design = self.design(values)
        z_opt, gamma = optimal_defect_position(design, self.material, self.spin, self.grid,
                                               solution=self._solve(design))
        return gamma, {"z_opt": z_opt}

    def max_field(self, values) -> float:
        return float(np.max(np.abs(self.solution(values).E_field)))

    def depletion(self, values):
        design = self.design(values)
        return depletion_profile(self._solve(design), design, self.material)


def diode_objective(p: ParameterVector, fixed: DiodeDesign, material: MaterialParams | None = None,
                    spin: SpinCenterParams | None = None, grid: GridConfig | None = None) -> float:
    """Minimum over defect position of the majority-carrier linewidth (MHz)."""
    material = material or MaterialParams()
    design = replace(fixed, **{n: float(v) for n, v in zip(p.names, p.values)})
    return optimal_defect_position(design, material, spin or SpinCenterParams(), grid)[1]


def _unit(index, size, sign=1.0):
    g = np.zeros(size)
    g[index] = sign
    return lambda q: g


def diode_constraints(bounds: DesignBounds | None = None, material: MaterialParams | None = None,
                      problem: DiodeProblem | None = None, names=PARAMETER_NAMES, active=None) -> ConstraintSet:
    """Lower/upper bounds on the active densities and lengths plus the breakdown margin.

    Bounds are only built for active entries; fixed entries are outside the
    optimizer's control.  The breakdown constraint needs ``problem``.
    """
    bounds = bounds or DesignBounds()
    material = material or (problem.material if problem else MaterialParams())
    names = tuple(names)
    active = set(names if active is None else active)
    size = len(names)
    out = []
    for i, name in enumerate(names):
        if name not in active or name == "V":
            continue
        lo = bounds.lower(name)
        out.append(Constraint(lambda q, i=i, lo=lo: q[i] - lo, lo, f"{name} >= {lo:g}", _unit(i, size)))
        if name in DENSITY_NAMES:
            cap = bounds.density_cap
            out.append(Constraint(lambda q, i=i, cap=cap: cap - q[i], cap, f"{name} <= {cap:g}",
                                  _unit(i, size, -1.0)))
    if problem is not None:
        limit = bounds.omega * material.E_BD
        out.append(Constraint(lambda q: limit - problem.max_field(q), limit, "breakdown margin", stage=1))
    return ConstraintSet(out)


def run_diode_optimization(design: DiodeDesign, active, material: MaterialParams | None = None,
                           spin: SpinCenterParams | None = None, grid: GridConfig | None = None,
                           bounds: DesignBounds | None = None, config=None, callback=None):
    """Optimize the active entries of ``design``; returns (trace, problem)."""
    from .engine import OptimizerConfig, optimize

    problem = DiodeProblem(design, material, spin, grid)
    p0 = parameter_vector(design, active)
    constraints = diode_constraints(bounds, problem.material, problem, active=active)
    trace = optimize(problem.objective, p0, constraints, config or OptimizerConfig(),
                     floors=scale_floors(), callback=callback)
    return trace, problem
