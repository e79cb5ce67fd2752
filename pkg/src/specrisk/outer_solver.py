"""Outer search over piecewise-linear convex functions.

The outer objective is K(g) = J(g) + int_0^1 g*(phi(u)) du, minimized over
the knot-value polytope of increasing-slope piecewise-linear functions on
an equidistant grid over [0, c_hat].  Restricting to m knots costs at most
2 * phi(1) * c_hat / (m - 1) in objective value, which fixes the grid size
for a target accuracy.  The global search is seeded simulated annealing
with an isotonic feasibility projection after every proposal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mdp_engine import MDPModel, SolveReport, solve_finite, solve_infinite
from .risk_core import (DiscreteDistribution, DomainError, GPoly, StepSpectrum,
                        minimizer_g)

_MEMO_QUANTUM = 1e-9


def cost_cap(model: MDPModel) -> float:
    """Upper bound c_hat on the total discounted cost."""
    if not math.isfinite(model.cost_cap):
        raise DomainError("model cost cap must be finite")
    if model.horizon is None:
        if model.discount >= 1:
            raise DomainError("infinite horizon requires discount < 1")
        return model.cost_cap / (1.0 - model.discount)
    return float(sum(model.discount ** k * model.cost_cap
                     for k in range(model.horizon + 1)))


def grid_size_from_epsilon(phi1: float, c_hat: float, epsilon: float) -> int:
    """Smallest knot count whose restriction error bound is below epsilon."""
    if epsilon <= 0 or phi1 <= 0 or c_hat < 0:
        raise DomainError("phi1, c_hat and epsilon must be positive")
    return max(math.ceil(2.0 * phi1 * c_hat / epsilon) + 1, 2)


def error_bound(m: int, phi1: float, c_hat: float) -> float:
    """A-priori bound on the m-knot restriction error: 2*phi1*c_hat/(m-1)."""
    if m < 2:
        raise DomainError("need at least two knots")
    return 2.0 * phi1 * c_hat / (m - 1)


def project_pm(g: Callable, m: int, c_hat: float, phi1: float) -> GPoly:
    """Piecewise-linear interpolation of g at m equidistant knots.

    Slopes of a convex g are automatically increasing; they are clipped into
    [0, phi1] (and the first value into [0, c_hat]) to restore polytope
    feasibility after rounding noise.
    """
    knots = np.linspace(0.0, c_hat, m)
    y = np.asarray(g(knots), dtype=float)
    y0 = min(max(y[0], 0.0), c_hat)
    h = np.diff(knots)
    slopes = np.clip(np.diff(y) / h, 0.0, phi1)
    slopes = np.maximum.accumulate(slopes)
    slopes = np.minimum(slopes, phi1)
    values = y0 + np.concatenate([[0.0], np.cumsum(slopes * h)])
    return GPoly(c_hat, knots, values, phi1)


def conjugate_closed_form(g: GPoly, xi: float) -> float:
    """Convex conjugate of a monotone-slope piecewise-linear function.

    Valid for xi in [0, max_slope]; the maximizing knot is the last one whose
    incoming slope does not exceed xi.
    """
    tol = 1e-9 * max(1.0, g.max_slope)
    if xi < -tol or xi > g.max_slope + tol:
        raise DomainError("conjugate argument must lie in [0, max_slope]")
    xi = min(max(xi, 0.0), g.max_slope)
    slopes = g.slopes
    j = int(np.searchsorted(slopes, xi, side="right"))
    return float(g.knots[j] * xi - g.values[j])


def conjugate_integral(g: GPoly, spec: StepSpectrum) -> float:
    """Exact int_0^1 g*(phi(u)) du for a step spectrum."""
    widths = np.diff(spec.breakpoints)
    return float(sum(w * conjugate_closed_form(g, v)
                     for w, v in zip(widths, spec.values)))


def _solve_inner(model: MDPModel, g: GPoly, x0, mode: str,
                 solver_opts: dict) -> SolveReport:
    if model.horizon is None:
        return solve_infinite(model, g, x0, **solver_opts)
    return solve_finite(model, g, x0, mode=mode, **solver_opts)


def objective_K(model: MDPModel, g: GPoly, spec: StepSpectrum, x0,
                mode: str = "exact", solver_opts: dict | None = None) -> float:
    """Inner value at (x0, 0, 1) plus the conjugate integral."""
    rep = _solve_inner(model, g, x0, mode, solver_opts or {})
    return rep.value_at_origin + conjugate_integral(g, spec)


def isotonic_project(y, c_hat: float, phi1: float) -> np.ndarray:
    """Nearest feasible knot-value vector: PAV on slopes, then clipping.

    Slopes are pooled to be increasing (pool-adjacent-violators with equal
    weights), clipped into [0, phi1], and the first value is clamped into
    [0, c_hat].  Idempotent on feasible points.
    """
    y = np.asarray(y, dtype=float)
    m = y.size
    if m < 2:
        return np.clip(y, 0.0, c_hat)
    h = c_hat / (m - 1)
    slopes = np.diff(y) / h
    # pool adjacent violators: enforce increasing block means
    blocks = [[s, 1] for s in slopes]
    out = []
    for b in blocks:
        out.append(b)
        while len(out) > 1 and out[-2][0] / out[-2][1] > out[-1][0] / out[-1][1] + 0.0:
            s2, n2 = out.pop()
            s1, n1 = out.pop()
            out.append([s1 + s2, n1 + n2])
    pooled = np.concatenate([[b[0] / b[1]] * b[1] for b in out])
    pooled = np.clip(pooled, 0.0, phi1)
    y0 = min(max(y[0], 0.0), c_hat)
    return y0 + np.concatenate([[0.0], np.cumsum(pooled * h)])


@dataclass(frozen=True)
class OuterConfig:
    """Search parameters for the outer problem."""

    epsilon: float = 0.1
    m: int | None = None
    restarts: int = 3
    anneal_steps: int = 200
    initial_temperature: float = 1.0
    cooling_rate: float = 0.97
    move_scale: float = 0.15
    seed: int = 7

    def __post_init__(self):
        if self.epsilon <= 0 or self.restarts < 1 or self.anneal_steps < 0:
            raise DomainError("epsilon, restarts and anneal_steps must be positive")
        if not 0 < self.cooling_rate < 1:
            raise DomainError("cooling_rate must lie in (0, 1)")
        if self.initial_temperature <= 0 or self.move_scale <= 0:
            raise DomainError("temperature and move_scale must be positive")
        if self.m is not None and self.m < 2:
            raise DomainError("m must be at least 2")


@dataclass
class OuterResult:
    best_y: np.ndarray
    best_value: float
    inner_report: SolveReport
    conjugate_integral: float
    error_bound: float
    evaluations: int
    m: int
    c_hat: float
    search_stats: dict = field(default_factory=dict)


def _myopic_cost_distribution(model: MDPModel, x0, cap: int = 50_000,
                              max_stages: int = 64):
    """Total-cost distribution of the greedy expected-cost policy, or None."""
    beta = model.discount
    N = model.horizon if model.horizon is not None else max_stages
    layer = {(x0, 0.0): 1.0}
    for n in range(N):
        t = beta ** n
        nxt: dict = {}
        for (x, s), pr in layer.items():
            best_cost, best_a = math.inf, None
            for a_idx in model.admissible(n, x):
                a = model.actions[a_idx]
                exp_c = sum(p * model.stage_cost(n, x, a, z,
                                                 model.transition(n, x, a, z))
                            for z, p in model.disturbance(n))
                if exp_c < best_cost:
                    best_cost, best_a = exp_c, a_idx
            a = model.actions[best_a]
            for z, p in model.disturbance(n):
                x_next = model.transition(n, x, a, z)
                c = model.stage_cost(n, x, a, z, x_next)
                key = (x_next, s + t * c)
                nxt[key] = nxt.get(key, 0.0) + pr * p
        if len(nxt) > cap:
            return None
        layer = nxt
    tN = beta ** N
    totals: dict = {}
    for (x, s), pr in layer.items():
        tc = 0.0 if model.horizon is None else model.terminal_cost(x)
        key = s + tN * tc
        totals[key] = totals.get(key, 0.0) + pr
    return DiscreteDistribution(list(totals.keys()), list(totals.values()))


def _warm_start(model: MDPModel, spec: StepSpectrum, x0, m: int,
                c_hat: float, phi1: float) -> np.ndarray:
    """Knot values of the analytic minimizer for the myopic cost distribution."""
    dist = _myopic_cost_distribution(model, x0)
    if dist is not None:
        try:
            g = minimizer_g(spec, dist)
            return project_pm(g, m, c_hat, phi1).values
        except DomainError:
            pass
    return phi1 * np.linspace(0.0, c_hat, m)


def _random_feasible(rng: np.random.Generator, m: int, c_hat: float,
                     phi1: float) -> np.ndarray:
    y0 = rng.uniform(0.0, c_hat)
    slopes = np.sort(rng.uniform(0.0, phi1, m - 1))
    h = c_hat / (m - 1)
    return y0 + np.concatenate([[0.0], np.cumsum(slopes * h)])


def anneal(model: MDPModel, spec: StepSpectrum, x0, cfg: OuterConfig,
           mode: str = "exact", solver_opts: dict | None = None,
           threads: int = 1) -> OuterResult:
    """Seeded simulated annealing over the m-knot polytope.

    Restart 0 starts from the analytic minimizer of the myopic-policy cost
    distribution, the remaining restarts from random feasible points; every
    proposal perturbs one knot and is projected back to feasibility, so all
    inner solves happen at feasible points.  Objective values are memoized
    on the quantized knot vector.  The result is deterministic in the seed
    and independent of the thread count.
    """
    solver_opts = solver_opts or {}
    phi1 = spec.phi_one
    c_hat = cost_cap(model)
    c_eff = max(c_hat, 1e-12)
    m = cfg.m or grid_size_from_epsilon(phi1, c_eff, cfg.epsilon)

    memo: dict = {}

    def K_of(y: np.ndarray):
        key = tuple(np.round(y / _MEMO_QUANTUM).astype(np.int64))
        hit = memo.get(key)
        if hit is not None:
            return hit
        g = GPoly.from_gamma(y, c_eff, phi1)
        rep = _solve_inner(model, g, x0, mode, solver_opts)
        ci = conjugate_integral(g, spec)
        entry = (rep.value_at_origin + ci, rep, ci)
        memo[key] = entry
        return entry

    children = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)

    def run_restart(r: int):
        rng = np.random.default_rng(children[r])
        if r == 0:
            y = _warm_start(model, spec, x0, m, c_eff, phi1)
        else:
            y = _random_feasible(rng, m, c_eff, phi1)
        y = isotonic_project(y, c_eff, phi1)
        cur_val, cur_rep, cur_ci = K_of(y)
        best = (cur_val, y.copy(), cur_rep, cur_ci)
        temp = cfg.initial_temperature
        for _ in range(cfg.anneal_steps):
            cand = y.copy()
            i = int(rng.integers(m))
            cand[i] += rng.normal(0.0, cfg.move_scale * max(c_eff, 1.0))
            cand = isotonic_project(cand, c_eff, phi1)
            val, rep, ci = K_of(cand)
            if val < cur_val or rng.random() < math.exp(-(val - cur_val)
                                                        / max(temp, 1e-300)):
                y, cur_val = cand, val
            if val < best[0]:
                best = (val, cand.copy(), rep, ci)
            temp *= cfg.cooling_rate
        return best

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_restart, range(cfg.restarts)))
    else:
        results = [run_restart(r) for r in range(cfg.restarts)]

    best_r = min(range(cfg.restarts), key=lambda r: (results[r][0], r))
    val, y, rep, ci = results[best_r]
    return OuterResult(
        best_y=y, best_value=val, inner_report=rep, conjugate_integral=ci,
        error_bound=error_bound(m, phi1, c_hat) if m >= 2 else 0.0,
        evaluations=len(memo), m=m, c_hat=c_hat,
        search_stats={"restarts": cfg.restarts, "steps": cfg.anneal_steps,
                      "best_restart": best_r, "memo_size": len(memo)},
    )
