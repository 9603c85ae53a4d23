"""Constrained scaled gradient descent with projection and a non-monotone merit test.

One iteration:

1. forward-difference gradient (only after an accepted step),
2. scaled step  q = p - s / alpha * D^2 grad f,
3. first-order projection onto h_j(q) >= 0, repeated while any h_j < 0,
4. accept when the merit f + alpha_m M max_j(-min(0, h_j)/beta_j) beats the
   moving average of the last k accepted merits; the learning rate s grows on
   acceptance and shrinks on rejection.

Parameters whose mask entry is False are never touched.
"""
from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

EPS = np.finfo(float).eps
RESOLVABILITY = 16.0


class OptimizerError(RuntimeError):
    """Base class for optimizer failures; carries the trace so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class InfeasibleStartError(OptimizerError):
    pass


class DegenerateConstraintError(OptimizerError):
    pass


class ObjectiveFailure(OptimizerError):
    pass


@dataclass
class ParameterVector:
    names: tuple
    values: np.ndarray
    active_mask: np.ndarray

    def __post_init__(self):
        self.names = tuple(self.names)
        self.values = np.array(self.values, dtype=float)
        self.active_mask = np.array(self.active_mask, dtype=bool)
        if not (len(self.names) == self.values.size == self.active_mask.size):
            raise ValueError("names, values and active_mask must have equal length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameter values must be finite")

    def with_values(self, values) -> "ParameterVector":
        return ParameterVector(self.names, values, self.active_mask)

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values.tolist()))


@dataclass(frozen=True)
class Constraint:
    h: Callable[[np.ndarray], float]
    beta: float
    label: str
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    # constraints of a later stage are only evaluated where all earlier ones hold
    stage: int = 0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"constraint {self.label}: beta must be positive")


@dataclass
class ConstraintSet:
    constraints: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.constraints)

    def __len__(self):
        return len(self.constraints)

    def values(self, p) -> np.ndarray:
        return np.array([c.h(p) for c in self.constraints], dtype=float)

    def ordered(self) -> list:
        return sorted(self.constraints, key=lambda c: c.stage)

    def worst_violation(self, p) -> float:
        """max_j(-min(0, h_j)/beta_j); zero when feasible.

        Evaluation stops after the first stage that has a violation.
        """
        worst = 0.0
        for stage in sorted({c.stage for c in self.constraints}):
            for c in self.constraints:
                if c.stage == stage:
                    worst = max(worst, -min(0.0, c.h(p)) / c.beta)
            if worst > 0.0:
                break
        return float(worst)


@dataclass
class OptimizerConfig:
    s_min: float = 5e-5
    s_max: float = 150.0
    M: float = 2.0
    alpha_merit: float = 2.0
    gamma_proj: float = 0.8
    n_max_proj: int = 100
    chi: float = 1e-5
    n_conv: int = 30
    k_window: int = 10
    l_avg: int = 5
    fd_rel: float = 1e-3
    rate_up: float = 1.5
    rate_down: float = 0.5
    D_scales: np.ndarray | None = None
    max_iter: int = 500
    objective_scale: float | None = None
    proj_margin: float = 1e-9
    escalation_window: int = 10
    threads: int = 1

    def __post_init__(self):
        if not (0 < self.s_min < self.s_max):
            raise ValueError("need 0 < s_min < s_max")
        if not (0 < self.gamma_proj <= 1):
            raise ValueError("gamma_proj must lie in (0, 1]")
        if self.chi <= 0:
            raise ValueError("chi must be positive")


@dataclass
class IterationRecord:
    iteration: int
    values: np.ndarray
    objective: float
    merit: float
    rate: float
    violation: float
    z_opt: float
    accepted: bool
    grad_source: tuple
    trial_objective: float = float("nan")


@dataclass
class OptimizationTrace:
    names: tuple
    records: list = field(default_factory=list)
    termination: str = ""
    D_scales: np.ndarray | None = None

    @property
    def accepted(self) -> list:
        return [r for r in self.records if r.accepted]

    @property
    def initial(self) -> IterationRecord:
        return self.records[0]

    @property
    def final(self) -> IterationRecord:
        return self.accepted[-1]

    @property
    def best(self) -> IterationRecord:
        return min(self.accepted, key=lambda r: r.objective)


def _split(result):
    if isinstance(result, tuple):
        value, extra = result
        return float(value), dict(extra or {})
    return float(result), {}


class GradientHistory:
    """Ring buffer of the last l gradients used to fill unresolvable components."""

    def __init__(self, length: int):
        self.items = deque(maxlen=max(length, 1))

    def mean(self, n: int) -> np.ndarray:
        if not self.items:
            return np.zeros(n)
        return np.mean(np.array(self.items), axis=0)

    def push(self, g):
        self.items.append(np.array(g, dtype=float))


def default_scales(values, floors) -> np.ndarray:
    return np.maximum(np.abs(np.asarray(values, dtype=float)), np.asarray(floors, dtype=float))


def finite_diff_gradient(objective, p: ParameterVector, config: OptimizerConfig, history: GradientHistory,
                         D=None, f0: float | None = None):
    """Forward-difference gradient on the active components; returns (gradient, sources)."""
    D = np.ones_like(p.values) if D is None else np.asarray(D, dtype=float)
    x = p.values
    if f0 is None:
        f0, _ = _split(objective(x))
    idx = np.nonzero(p.active_mask)[0]

    def probe(i):
        step = config.fd_rel * D[i]
        for attempt in range(2):
            xp = x.copy()
            xp[i] += step
            try:
                return _split(objective(xp))[0] - f0, step
            except Exception as exc:  # noqa: BLE001 - any probe failure gets one retry
                if attempt == 1:
                    raise ObjectiveFailure(f"objective failed at probe of {p.names[i]}: {exc}") from exc
                step *= 0.5

    if config.threads > 1 and idx.size > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            diffs = list(pool.map(probe, idx))
    else:
        diffs = [probe(i) for i in idx]

    grad = np.zeros_like(x)
    sources = ["masked"] * x.size
    fallback = history.mean(x.size)
    floor = RESOLVABILITY * EPS * abs(f0)
    for i, (df, step) in zip(idx, diffs):
        if abs(df) < floor or not math.isfinite(df):
            grad[i] = fallback[i]
            sources[i] = "averaged"
        else:
            grad[i] = df / step
            sources[i] = "fresh"
    return grad, tuple(sources)


def scaled_step(p, gradient, D, s_k: float, alpha: float = 1.0):
    """q = p - s_k / alpha * D^2 grad f."""
    p = np.asarray(p, dtype=float)
    D = np.asarray(D, dtype=float)
    return p - (s_k / alpha) * D * D * np.asarray(gradient, dtype=float)


def _constraint_gradient(c: Constraint, q, D, mask, fd_rel):
    if c.grad is not None:
        return np.where(mask, np.asarray(c.grad(q), dtype=float), 0.0)
    h0 = c.h(q)
    g = np.zeros_like(q)
    for i in np.nonzero(mask)[0]:
        step = fd_rel * D[i]
        qp = q.copy()
        qp[i] += step
        g[i] = (c.h(qp) - h0) / step
    return g


def project_feasible(q, constraints: ConstraintSet, D, config: OptimizerConfig, mask=None):
    """Damped first-order projection onto {h_j >= 0}; returns (q', residual violation, sweeps)."""
    q = np.array(q, dtype=float)
    D = np.asarray(D, dtype=float)
    mask = np.ones(q.size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    for sweep in range(config.n_max_proj):
        if constraints.worst_violation(q) <= 0.0:
            return q, 0.0, sweep
        blocked_stage = None
        for c in constraints.ordered():
            if blocked_stage is not None and c.stage > blocked_stage:
                break
            h = c.h(q)
            if h >= 0.0:
                continue
            blocked_stage = c.stage
            g = _constraint_gradient(c, q, D, mask, config.fd_rel)
            Dg = D * g
            norm2 = float(Dg @ Dg)
            if norm2 == 0.0:
                raise DegenerateConstraintError(f"constraint {c.label!r} has zero scaled gradient at a violated point")
            target = config.proj_margin * c.beta
            q = q - config.gamma_proj * (h - target) / norm2 * D * D * g
    return q, constraints.worst_violation(q), config.n_max_proj


def merit_value(objective_value: float, p, constraints: ConstraintSet, config: OptimizerConfig,
                M: float | None = None) -> float:
    """f + alpha_m M max_j(-min(0, h_j)/beta_j)."""
    M = config.M if M is None else M
    return float(objective_value) + config.alpha_merit * M * constraints.worst_violation(p)


def optimize(objective, p0: ParameterVector, constraints: ConstraintSet | None = None,
             config: OptimizerConfig | None = None, floors: Sequence[float] | None = None,
             callback=None) -> OptimizationTrace:
    """Run the scaled-gradient loop from p0; returns the full iteration trace."""
    config = config or OptimizerConfig()
    constraints = constraints or ConstraintSet()
    mask = p0.active_mask
    if config.D_scales is not None:
        D = np.asarray(config.D_scales, dtype=float)
    else:
        D = default_scales(p0.values, floors if floors is not None else np.zeros(p0.values.size))
    if np.any(D[mask] <= 0):
        raise ValueError("scales of active parameters must be positive")
    trace = OptimizationTrace(names=p0.names, D_scales=D)

    p = p0.values.copy()
    if constraints.worst_violation(p) > 0:
        projected, residual, _ = project_feasible(p, constraints, D, config, mask)
        if residual > 0:
            raise InfeasibleStartError("starting point cannot be projected onto the feasible set", trace)
        p = np.where(mask, projected, p0.values)
    try:
        f, extra = _split(objective(p))
    except Exception as exc:  # noqa: BLE001
        raise ObjectiveFailure(f"objective failed at the starting point: {exc}", trace) from exc
    alpha = config.objective_scale or (abs(f) if f != 0 else 1.0)
    M = config.M
    m = merit_value(f, p, constraints, config, M)
    merits = deque([m], maxlen=config.k_window)
    history = GradientHistory(config.l_avg)
    s = config.s_min
    trace.records.append(IterationRecord(0, p.copy(), f, m, s, constraints.worst_violation(p),
                                         extra.get("z_opt", float("nan")), True, ("initial",) * p.size, f))
    best_f = f
    grad, sources = None, ()
    small_changes = 0
    recent = deque(maxlen=config.n_conv)
    escalation = deque(maxlen=config.escalation_window)
    failures = 0

    for it in range(1, config.max_iter + 1):
        if grad is None:
            try:
                grad, sources = finite_diff_gradient(objective, ParameterVector(p0.names, p, mask), config,
                                                     history, D, f0=f)
            except ObjectiveFailure as exc:
                trace.termination = str(exc)
                raise ObjectiveFailure(trace.termination, trace) from exc
            history.push(grad)
        q = np.where(mask, scaled_step(p, grad, D, s, alpha), p)
        accepted = False
        f_q, m_q, viol_q, extra_q = math.nan, math.nan, math.nan, {}
        try:
            q, viol_q, _ = project_feasible(q, constraints, D, config, mask)
            q = np.where(mask, q, p0.values)
            if viol_q <= 0.0:
                f_q, extra_q = _split(objective(q))
                m_q = merit_value(f_q, q, constraints, config, M)
                accepted = m_q < float(np.mean(merits))
            failures = 0
        except DegenerateConstraintError:
            raise
        except Exception:  # noqa: BLE001 - a failing trial is a rejected step
            failures += 1
            if failures > config.n_conv:
                trace.termination = "objective persistently failing"
                raise ObjectiveFailure(trace.termination, trace)

        rel = abs(f_q - f) / abs(f) if (math.isfinite(f_q) and f != 0) else math.inf
        if accepted:
            escalation.append((f_q < f, viol_q > constraints.worst_violation(p)))
            p, f = q, f_q
            merits.append(m_q)
            s = min(s * config.rate_up, config.s_max)
            grad = None
            best_f = min(best_f, f)
        else:
            s = max(s * config.rate_down, config.s_min)
        rec = IterationRecord(it, p.copy(), f, merit_value(f, p, constraints, config, M), s,
                              constraints.worst_violation(p),
                              extra_q.get("z_opt", trace.records[-1].z_opt) if accepted else trace.records[-1].z_opt,
                              accepted, sources, f_q)
        trace.records.append(rec)
        if callback is not None:
            callback(rec)

        if len(escalation) == config.escalation_window and all(dec and worse for dec, worse in escalation):
            M *= 2.0
            escalation.clear()

        small_changes = small_changes + 1 if rel < config.chi else 0
        recent.append(f)
        if small_changes >= config.n_conv:
            trace.termination = "converged: relative change below chi"
            return trace
        if (len(recent) == config.n_conv and best_f != 0
                and max(abs(v - best_f) for v in recent) / abs(best_f) < config.chi and it >= 2 * config.n_conv):
            trace.termination = "converged: oscillation about the best value below chi"
            return trace
    trace.termination = "iteration cap reached"
    return trace
