"""Command-line scenario runner: diode-qopt <scenario> --config <path> [--out DIR]."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCENARIOS, ConfigError, RunConfig, load_config
from .leakage import (
    effective_density,
    leakage_current,
    surface_electric_linewidth,
    surface_magnetic_linewidth,
)
from .linewidth import delta_E_profile, linewidth_majority, minimize_over_position
from .optimizer import PARAMETER_NAMES, OptimizerError, run_diode_optimization
from .optimizer.engine import DegenerateConstraintError, InfeasibleStartError
from .poisson import BracketError, ConvergenceError, depletion_profile, solve_poisson

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 2, 3, 4
UNITS = {"N_a": "cm^-3", "N_n": "cm^-3", "N_d": "cm^-3", "d_l": "um", "d": "um", "d_r": "um", "V": "V",
         "T": "K", "N_n/N_a": "1"}

log = logging.getLogger("diode_qopt")


def fmt(x) -> str:
    """17 significant digits, round-trip exact."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


class ScenarioFailure(RuntimeError):
    def __init__(self, message, code, results=None):
        super().__init__(message)
        self.code = code
        self.results = results or {}


def run_solve(cfg: RunConfig, out: Path, threads: int):
    sol = solve_poisson(cfg.design, cfg.material, cfg.grid)
    write_csv(out / "profile.csv",
              ["z [um]", "phi [V]", "E [V/cm]", "rho_c [C/cm^3]", "n [cm^-3]", "p [cm^-3]"],
              zip(sol.z, sol.phi, sol.E_field, sol.rho_c, sol.n_e, sol.p_h))
    dep = depletion_profile(sol, cfg.design, cfg.material)
    return {"mu_l_eV": sol.mu_l, "phi_inf_V": sol.phi_inf, "newton_iterations": sol.iterations,
            "residual": sol.residual, "max_abs_E_V_per_cm": float(np.max(np.abs(sol.E_field))),
            "depletion_um": asdict(dep)}


def run_linewidth(cfg: RunConfig, out: Path, threads: int):
    sol = solve_poisson(cfg.design, cfg.material, cfg.grid)
    dep = depletion_profile(sol, cfg.design, cfg.material)
    n = cfg.n_positions
    z = cfg.design.d * (np.arange(n) + 0.5) / n
    dE = delta_E_profile(cfg.design, dep, z, cfg.material)
    gamma = linewidth_majority(dE, cfg.spin)
    write_csv(out / "linewidth.csv", ["z_def [um]", "dE [V/cm]", "Gamma [MHz]"], zip(z, dE, gamma))
    z_opt, g_opt = minimize_over_position(cfg.design, dep, cfg.material, cfg.spin)
    g_def = float(linewidth_majority(delta_E_profile(cfg.design, dep, [cfg.spin.z_def], cfg.material)[0],
                                     cfg.spin))
    return {"z_def_um": cfg.spin.z_def, "gamma_at_z_def_MHz": g_def, "z_opt_um": z_opt,
            "gamma_opt_MHz": g_opt, "depletion_um": asdict(dep)}


def run_leakage(cfg: RunConfig, out: Path, threads: int):
    def one(V):
        design = cfg.design.with_values(V=V)
        sol = solve_poisson(design, cfg.material, cfg.grid)
        dep = depletion_profile(sol, design, cfg.material)
        J = leakage_current(design, sol, cfg.material, dep)
        n_eff, profile = effective_density(design, sol, cfg.material, dep)
        return J, n_eff, profile

    voltages = list(cfg.leak_voltages)
    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        rows = list(pool.map(one, voltages))
    write_csv(out / "leakage_current.csv", ["V [V]", "J [A/cm^2]", "n_eff [cm^-3]"],
              [(V, J, n) for V, (J, n, _) in zip(voltages, rows)])
    # depth profile and surface linewidths at the design bias
    design_row = one(cfg.design.V)
    profile = design_row[2]
    write_csv(out / "depth_profile.csv", ["x [nm]", "n_V [cm^-3]"], zip(profile.x, profile.n_V))
    x = np.asarray(cfg.leak_depths, dtype=float)
    gE = surface_electric_linewidth(profile, x, cfg.spin, cfg.material)
    gB = surface_magnetic_linewidth(profile, x, cfg.spin, cfg.material, cfg.design.T, cfg.design.N_n)
    write_csv(out / "surface_linewidth.csv", ["x_def [nm]", "Gamma_E [MHz]", "Gamma_B [MHz]"], zip(x, gE, gB))
    return {"V_V": cfg.design.V, "J_A_per_cm2": design_row[0], "n_eff_cm3": design_row[1]}


def _axis_values(axis):
    if axis.get("spacing", "linear") == "log":
        return np.geomspace(axis["start"], axis["stop"], axis["steps"])
    return np.linspace(axis["start"], axis["stop"], axis["steps"])


def _apply(design, name, value):
    if name == "N_n/N_a":
        return design.with_values(N_n=value * design.N_a)
    return design.with_values(**{name: float(value)})


def run_sweep(cfg: RunConfig, out: Path, threads: int):
    axes = cfg.sweep_axes
    grids = [_axis_values(a) for a in axes]
    points = [(v,) for v in grids[0]] if len(axes) == 1 else [(u, v) for u in grids[0] for v in grids[1]]

    def one(point):
        design = cfg.design
        for axis, value in zip(axes, point):
            design = _apply(design, axis["parameter"], value)
        try:
            sol = solve_poisson(design, cfg.material, cfg.grid)
        except (ConvergenceError, BracketError) as exc:
            log.warning("sweep point %s failed: %s", point, exc)
            return (math.nan,) * 7
        dep = depletion_profile(sol, design, cfg.material)
        z_opt, g_opt = minimize_over_position(design, dep, cfg.material, cfg.spin)
        return (dep.dn_tilde, dep.d_n_analytic, dep.d_p, dep.d_n_plus, dep.fully_depleted_n, z_opt, g_opt)

    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        results = list(pool.map(one, points))
    header = [f"{a['parameter']} [{UNITS[a['parameter']]}]" for a in axes]
    header += ["dn_tilde [um]", "d_n_analytic [um]", "d_p [um]", "d_n_plus [um]", "fully_depleted",
               "z_opt [um]", "Gamma_opt [MHz]"]
    write_csv(out / "sweep.csv", header, [p + r for p, r in zip(points, results)])
    failed = sum(1 for r in results if isinstance(r[0], float) and math.isnan(r[0]))
    return {"points": len(points), "failed_points": failed}


def _write_trace(out: Path, trace):
    header = ["iteration", "accepted"] + [f"{n} [{UNITS[n]}]" for n in PARAMETER_NAMES]
    header += ["Gamma [MHz]", "trial Gamma [MHz]", "merit", "rate", "worst violation", "z_opt [um]",
               "gradient source"]
    rows = [[r.iteration, r.accepted, *r.values, r.objective, r.trial_objective, r.merit, r.rate, r.violation,
             r.z_opt, "|".join(r.grad_source)] for r in trace.records]
    write_csv(out / "trace.csv", header, rows)


def run_optimize(cfg: RunConfig, out: Path, threads: int):
    config = replace(cfg.optimizer, threads=threads) if threads > 1 else cfg.optimizer
    try:
        trace, problem = run_diode_optimization(cfg.design, cfg.active, cfg.material, cfg.spin, cfg.grid,
                                                cfg.bounds, config)
    except OptimizerError as exc:
        if exc.trace is not None and exc.trace.records:
            _write_trace(out, exc.trace)
        code = EXIT_INFEASIBLE if isinstance(exc, (InfeasibleStartError, DegenerateConstraintError)) else EXIT_SOLVER
        raise ScenarioFailure(str(exc), code) from exc
    _write_trace(out, trace)
    first, last = trace.initial, trace.final
    return {
        "active": list(cfg.active),
        "termination": trace.termination,
        "iterations": len(trace.records) - 1,
        "initial": {"parameters": dict(zip(PARAMETER_NAMES, first.values.tolist())),
                    "gamma_MHz": first.objective, "z_opt_um": first.z_opt},
        "final": {"parameters": dict(zip(PARAMETER_NAMES, last.values.tolist())),
                  "gamma_MHz": last.objective, "z_opt_um": last.z_opt,
                  "max_abs_E_V_per_cm": problem.max_field(last.values)},
        "reduction_factor": first.objective / last.objective,
    }


RUNNERS = {"solve": run_solve, "linewidth": run_linewidth, "leakage": run_leakage, "sweep": run_sweep,
           "optimize": run_optimize}


def run_scenario(cfg: RunConfig, out_dir=None, threads: int = 1, seed: int | None = None) -> int:
    """Run one scenario, write its CSV files and summary.json; returns the exit status."""
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    status, results, error = EXIT_OK, {}, None
    try:
        results = RUNNERS[cfg.scenario](cfg, out, threads)
    except ScenarioFailure as exc:
        status, error = exc.code, str(exc)
    except (ConvergenceError, BracketError) as exc:
        status, error = EXIT_SOLVER, f"{type(exc).__name__}: {exc}"
    summary = {
        "scenario": cfg.scenario,
        "version": __version__,
        "config_sha256": cfg.sha256,
        "seed": seed,
        "wall_time_s": time.perf_counter() - start,
        "exit_status": status,
        "error": error,
        "results": results,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
    if error:
        log.error("%s", error)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diode-qopt", description=__doc__)
    parser.add_argument("scenario", choices=SCENARIOS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    parser.add_argument("--seed", type=int, default=None, help="seed for Monte-Carlo checks; the pipeline is deterministic")
    parser.add_argument("--threads", type=int, default=1, help="concurrent Poisson solves in sweeps and gradient probes")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and not (0 <= args.seed < 2**64):
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.scenario)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_scenario(cfg, args.out, args.threads, args.seed)


if __name__ == "__main__":
    sys.exit(main())
