"""Finite-instance MDP engine on the extended state space (x, s, t).

The extra coordinates carry the accumulated discounted cost ``s`` and the
current discount weight ``t``; with them, minimizing an expected convex
function of the total discounted cost is an ordinary Markov problem.

Two backends solve the finite-horizon problem: exact mode enumerates the
forward-reachable accumulated-cost set stage by stage (bit-exact dynamic
programming, used by all oracle comparisons), grid mode interpolates
linearly on an equidistant s-grid.  The infinite-horizon solver iterates
the Bellman operator on an (s, t)-grid with t-levels beta^j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .risk_core import DomainError, GPoly

Atom = tuple[Any, float]  # (disturbance realization, probability)


def _sort_key(x):
    # states may be numbers or labels; keep a deterministic total order
    if isinstance(x, (int, float)):
        return (0, float(x), "")
    return (1, 0.0, str(x))


@dataclass(frozen=True)
class MDPModel:
    """Finite decision model with per-stage data given as callables.

    ``stage_cost`` receives the realized disturbance as well as the successor
    state so that cost can be expressed either way; all costs must be
    non-negative.  ``horizon=None`` means infinite horizon and requires a
    stationary model with zero terminal cost and ``discount < 1``.
    """

    states: tuple
    actions: tuple
    admissible: Callable[[int, Any], Sequence[int]]
    disturbance: Callable[[int], Sequence[Atom]]
    transition: Callable[[int, Any, Any, Any], Any]
    stage_cost: Callable[[int, Any, Any, Any, Any], float]
    terminal_cost: Callable[[Any], float]
    discount: float
    horizon: int | None
    cost_cap: float
    stationary: bool = True

    def __post_init__(self):
        if self.discount <= 0:
            raise DomainError("discount factor must be positive")
        if self.horizon is None:
            if not self.stationary:
                raise DomainError("infinite horizon requires a stationary model")
            if self.discount >= 1:
                raise DomainError("infinite horizon requires discount < 1")
            if not math.isfinite(self.cost_cap):
                raise DomainError("infinite horizon requires a finite cost cap")

    def action_of(self, idx: int):
        return self.actions[idx]


@dataclass(frozen=True)
class ExtendedState:
    x: Any
    s: float
    t: float

    def __post_init__(self):
        if self.s < 0:
            raise DomainError("accumulated cost s must be non-negative")
        if not 0 < self.t <= 1:
            raise DomainError("discount weight t must lie in (0, 1]")


def extend_transition(model: MDPModel, n: int, es: ExtendedState,
                      a_idx: int, z) -> ExtendedState:
    """One step of the extended dynamics: (x', s + t*c, beta*t)."""
    if a_idx not in tuple(model.admissible(n, es.x)):
        raise DomainError(f"action {a_idx} not admissible in state {es.x} at stage {n}")
    a = model.actions[a_idx]
    x_next = model.transition(n, es.x, a, z)
    c = model.stage_cost(n, es.x, a, z, x_next)
    return ExtendedState(x_next, es.s + es.t * c, model.discount * es.t)


class ExactStageValue:
    """Stage value on the exact reachable set: dict keyed by (x, s)."""

    def __init__(self, t: float, table: dict):
        self.t = t
        self.table = table

    def value(self, x, s) -> float:
        return self.table[(x, s)]


class GridStageValue:
    """Stage value on an equidistant s-grid with linear interpolation.

    Above the top grid point the value is continued linearly with slope
    ``max_slope`` (the Lipschitz constant phi(1) of the terminal function).
    """

    def __init__(self, t: float, s_grid: np.ndarray, per_state: dict,
                 max_slope: float):
        self.t = t
        self.s_grid = s_grid
        self.per_state = per_state
        self.max_slope = max_slope

    def value(self, x, s) -> float:
        return float(self.value_vec(x, np.asarray([s]))[0])

    def value_vec(self, x, s: np.ndarray) -> np.ndarray:
        vals = self.per_state[x]
        out = np.interp(s, self.s_grid, vals)
        top = self.s_grid[-1]
        over = s > top
        if np.any(over):
            out = np.where(over, vals[-1] + self.max_slope * (s - top), out)
        return out


@dataclass
class ValueTable:
    """Stage-indexed value functions on the extended grid."""

    stages: list  # ExactStageValue | GridStageValue per stage, index 0..N
    mode: str     # "exact" | "grid"


class MarkovPolicy:
    """Stage-indexed decision rules on the extended grid.

    Exact mode stores one dict per stage keyed by (x, s); grid mode one
    integer array per stage and state over the s-grid.  A stationary rule
    (infinite horizon) stores a single (t-level, s-grid) array per state.
    """

    def __init__(self, mode: str, stages=None, s_grid=None, t_levels=None,
                 stationary_rule=None):
        self.mode = mode
        self.stages = stages or []
        self.s_grid = s_grid
        self.t_levels = t_levels
        self.stationary_rule = stationary_rule

    def action(self, n: int, x, s: float, t: float = None) -> int:
        if self.mode == "exact":
            return self.stages[n][(x, s)]
        if self.mode == "grid":
            i = int(np.argmin(np.abs(self.s_grid - s)))
            return int(self.stages[n][x][i])
        # stationary: nearest t-level from below, nearest s-grid point
        j = int(np.argmin(np.abs(np.asarray(self.t_levels) - t)))
        i = int(np.argmin(np.abs(self.s_grid - s)))
        return int(self.stationary_rule[x][j][i])


@dataclass
class SolveReport:
    value_at_origin: float
    policy: MarkovPolicy
    iterations: int
    residual: float
    discretization_note: str  # "exact" | "interpolated"
    fell_back_to_grid: bool = False
    value_table: ValueTable | None = None
    s_grid: np.ndarray | None = None
    t_levels: np.ndarray | None = None
    monotone_iterates: bool = True


def apply_L(model: MDPModel, v_next, n: int, x, s: float, t: float,
            a_idx: int) -> float:
    """Expectation of the next-stage value over the disturbance atoms."""
    a = model.actions[a_idx]
    total = 0.0
    for z, p in model.disturbance(n):
        x_next = model.transition(n, x, a, z)
        c = model.stage_cost(n, x, a, z, x_next)
        total += p * v_next.value(x_next, s + t * c)
    return total


def bellman_step(model: MDPModel, v_next, n: int,
                 points: Sequence[tuple[Any, float]], t: float):
    """Minimize apply_L over admissible actions at each extended grid point.

    Ties are broken by the lowest action index.  Returns the new exact-mode
    stage value and the decision rule dict.
    """
    table, rule = {}, {}
    for (x, s) in points:
        best_v, best_a = math.inf, None
        for a_idx in model.admissible(n, x):
            v = apply_L(model, v_next, n, x, s, t, a_idx)
            if v < best_v:
                best_v, best_a = v, a_idx
        table[(x, s)] = best_v
        rule[(x, s)] = best_a
    return ExactStageValue(t, table), rule


def forward_reachable(model: MDPModel, x0, cap: int):
    """Per-stage sorted lists of reachable (x, s) pairs; None if over cap."""
    beta = model.discount
    layers = [[(x0, 0.0)]]
    total = 1
    for n in range(model.horizon):
        t = beta ** n
        nxt = set()
        for (x, s) in layers[n]:
            for a_idx in model.admissible(n, x):
                a = model.actions[a_idx]
                for z, p in model.disturbance(n):
                    x_next = model.transition(n, x, a, z)
                    c = model.stage_cost(n, x, a, z, x_next)
                    nxt.add((x_next, s + t * c))
        total += len(nxt)
        if total > cap:
            return None
        layers.append(sorted(nxt, key=lambda xs: (_sort_key(xs[0]), xs[1])))
    return layers


def _finite_grid_axis(model: MDPModel, g: GPoly, s_points: int,
                      margin: float) -> np.ndarray:
    top = sum(model.discount ** k * model.cost_cap
              for k in range(model.horizon + 1))
    top = max(top * (1.0 + margin), 1e-9)
    return np.linspace(0.0, top, s_points)


def solve_finite(model: MDPModel, g: GPoly, x0, mode: str = "exact",
                 exact_cap: int = 200_000, s_points: int = 201,
                 grid_margin: float = 0.05) -> SolveReport:
    """Backward induction for the finite-horizon inner problem.

    Terminal values are g(s + t * c_N(x)).  In exact mode the s-axis per
    stage is the forward-reachable accumulated-cost set; if its size exceeds
    ``exact_cap`` the solver falls back to grid mode and flags the report.
    """
    if model.horizon is None:
        raise DomainError("solve_finite requires a finite horizon")
    fell_back = False
    if mode == "exact":
        layers = forward_reachable(model, x0, exact_cap)
        if layers is None:
            mode, fell_back = "grid", True
    if mode == "exact":
        return _solve_finite_exact(model, g, x0, layers, fell_back)
    return _solve_finite_grid(model, g, x0, s_points, grid_margin, fell_back)


def _solve_finite_exact(model, g, x0, layers, fell_back):
    beta, N = model.discount, model.horizon
    tN = beta ** N
    table = {(x, s): float(g(s + tN * model.terminal_cost(x)))
             for (x, s) in layers[N]}
    stages = [None] * (N + 1)
    stages[N] = ExactStageValue(tN, table)
    rules = [None] * N
    for n in range(N - 1, -1, -1):
        stages[n], rules[n] = bellman_step(model, stages[n + 1], n,
                                           layers[n], beta ** n)
    policy = MarkovPolicy("exact", stages=rules)
    return SolveReport(
        value_at_origin=stages[0].table[(x0, 0.0)],
        policy=policy, iterations=N, residual=0.0,
        discretization_note="exact", fell_back_to_grid=fell_back,
        value_table=ValueTable(stages, "exact"),
    )


def _solve_finite_grid(model, g, x0, s_points, grid_margin, fell_back):
    beta, N = model.discount, model.horizon
    s_grid = _finite_grid_axis(model, g, s_points, grid_margin)
    tN = beta ** N
    per_state = {x: np.asarray(g(s_grid + tN * model.terminal_cost(x)))
                 for x in model.states}
    stages = [None] * (N + 1)
    stages[N] = GridStageValue(tN, s_grid, per_state, g.max_slope)
    rules = [None] * N
    floor = np.asarray(g(s_grid))
    for n in range(N - 1, -1, -1):
        t = beta ** n
        v_next = stages[n + 1]
        new_vals, new_rule = {}, {}
        for x in model.states:
            acts = tuple(model.admissible(n, x))
            q = np.full((len(acts), s_grid.size), np.inf)
            for k, a_idx in enumerate(acts):
                a = model.actions[a_idx]
                acc = np.zeros(s_grid.size)
                for z, p in model.disturbance(n):
                    x_next = model.transition(n, x, a, z)
                    c = model.stage_cost(n, x, a, z, x_next)
                    acc += p * v_next.value_vec(x_next, s_grid + t * c)
                q[k] = acc
            pick = np.argmin(q, axis=0)
            # clamp to the g(s) lower bound lost to interpolation error
            new_vals[x] = np.maximum(q[pick, np.arange(s_grid.size)], floor)
            new_rule[x] = np.asarray([acts[k] for k in pick], dtype=int)
        stages[n] = GridStageValue(t, s_grid, new_vals, g.max_slope)
        rules[n] = new_rule
    policy = MarkovPolicy("grid", stages=rules, s_grid=s_grid)
    return SolveReport(
        value_at_origin=stages[0].value(x0, 0.0),
        policy=policy, iterations=N, residual=0.0,
        discretization_note="interpolated", fell_back_to_grid=fell_back,
        value_table=ValueTable(stages, "grid"), s_grid=s_grid,
    )


def _interp_extrapolate(s, s_grid, vals, max_slope):
    out = np.interp(s, s_grid, vals)
    top = s_grid[-1]
    over = s > top
    if np.any(over):
        out = np.where(over, vals[-1] + max_slope * (s - top), out)
    return out


def solve_infinite(model: MDPModel, g: GPoly, x0, tol: float = 1e-6,
                   s_points: int = 201, grid_margin: float = 0.05,
                   max_iters: int = 10_000) -> SolveReport:
    """Value iteration from J_0 = g(s) on an (s, t)-grid.

    t-levels are beta^j for j up to the cutoff where the tail contribution
    phi(1) * beta^j * c_bar / (1 - beta) drops below tol; below the cutoff
    the value is taken as g(s).  Iterates are monotone increasing; the loop
    stops once either the sup-norm increment or the analytic geometric tail
    bound certifies that the fixed point is within tol.
    """
    if model.horizon is not None:
        raise DomainError("solve_infinite requires horizon None")
    beta = model.discount
    if not 0 < beta < 1:
        raise DomainError("infinite horizon requires discount in (0, 1)")
    cbar = model.cost_cap
    phi1 = max(g.max_slope, 1e-300)
    c_hat = cbar / (1.0 - beta)
    s_grid = np.linspace(0.0, max(c_hat * (1.0 + grid_margin), 1e-9), s_points)
    if cbar <= 0:
        j_max = 0
    else:
        j_max = max(0, math.ceil(math.log(tol * (1 - beta) / (phi1 * cbar))
                                 / math.log(beta)))
    t_levels = beta ** np.arange(j_max + 1)

    g_floor = np.asarray(g(s_grid))
    # V[x][j] is the value row over s_grid at discount level beta^j
    V = {x: np.tile(g_floor, (j_max + 1, 1)) for x in model.states}
    rule = {x: np.zeros((j_max + 1, s_grid.size), dtype=int) for x in model.states}

    # precompute successor/cost per (x, a, z); the model is stationary
    branches = {}
    for x in model.states:
        acts = tuple(model.admissible(0, x))
        rows = []
        for a_idx in acts:
            a = model.actions[a_idx]
            row = []
            for z, p in model.disturbance(0):
                x_next = model.transition(0, x, a, z)
                c = model.stage_cost(0, x, a, z, x_next)
                row.append((x_next, c, p))
            rows.append((a_idx, row))
        branches[x] = rows

    monotone = True
    residual = math.inf
    iterations = 0
    for k in range(1, max_iters + 1):
        iterations = k
        new_V = {}
        for x in model.states:
            rows = branches[x]
            out = np.empty((j_max + 1, s_grid.size))
            pick_all = np.empty((j_max + 1, s_grid.size), dtype=int)
            for j, t in enumerate(t_levels):
                q = np.empty((len(rows), s_grid.size))
                for r, (a_idx, row) in enumerate(rows):
                    acc = np.zeros(s_grid.size)
                    for (x_next, c, p) in row:
                        s_next = s_grid + t * c
                        if j + 1 <= j_max:
                            vals = _interp_extrapolate(
                                s_next, s_grid, V[x_next][j + 1], phi1)
                        else:
                            vals = np.asarray(g(s_next))
                        acc += p * vals
                    q[r] = acc
                pick = np.argmin(q, axis=0)
                out[j] = np.maximum(q[pick, np.arange(s_grid.size)], g_floor)
                pick_all[j] = np.asarray([rows[r][0] for r in pick])
            new_V[x] = out
            rule[x] = pick_all
        residual = max(float(np.max(np.abs(new_V[x] - V[x]))) for x in model.states)
        if any(np.any(new_V[x] < V[x] - 1e-9) for x in model.states):
            monotone = False
        V = new_V
        tail = phi1 * (beta ** k) * cbar / (1.0 - beta)
        # increments shrink geometrically with ratio beta, so a residual of
        # tol * (1 - beta) bounds the remaining sum by tol
        if residual <= tol * (1.0 - beta) or tail <= tol:
            break

    policy = MarkovPolicy("stationary", s_grid=s_grid, t_levels=t_levels,
                          stationary_rule=rule)
    return SolveReport(
        value_at_origin=float(V[x0][0][0]),
        policy=policy, iterations=iterations, residual=residual,
        discretization_note="interpolated",
        value_table=ValueTable([GridStageValue(float(t), s_grid,
                                               {x: V[x][j] for x in model.states},
                                               phi1)
                                for j, t in enumerate(t_levels)], "grid"),
        s_grid=s_grid, t_levels=t_levels, monotone_iterates=monotone,
    )


def evaluate_policy(model: MDPModel, policy, g: GPoly, x0,
                    exact_cap: int = 200_000) -> float:
    """Exact expected value E[g(C)] of a fixed finite-horizon policy.

    ``policy`` is either a MarkovPolicy or a callable (n, x, s, t) -> action
    index.  Runs the backward recursion with the decisions fixed.
    """
    if model.horizon is None:
        raise DomainError("evaluate_policy requires a finite horizon")
    act = policy.action if isinstance(policy, MarkovPolicy) else policy
    beta, N = model.discount, model.horizon

    layers = [[(x0, 0.0)]]
    for n in range(N):
        t = beta ** n
        nxt = set()
        for (x, s) in layers[n]:
            a_idx = act(n, x, s, t)
            a = model.actions[a_idx]
            for z, p in model.disturbance(n):
                x_next = model.transition(n, x, a, z)
                c = model.stage_cost(n, x, a, z, x_next)
                nxt.add((x_next, s + t * c))
        if sum(len(l) for l in layers) + len(nxt) > exact_cap:
            raise DomainError("policy evaluation exceeded the exact-mode cap")
        layers.append(sorted(nxt, key=lambda xs: (_sort_key(xs[0]), xs[1])))

    tN = beta ** N
    table = {(x, s): float(g(s + tN * model.terminal_cost(x)))
             for (x, s) in layers[N]}
    v_next = ExactStageValue(tN, table)
    for n in range(N - 1, -1, -1):
        t = beta ** n
        table = {(x, s): apply_L(model, v_next, n, x, s, t, act(n, x, s, t))
                 for (x, s) in layers[n]}
        v_next = ExactStageValue(t, table)
    return v_next.table[(x0, 0.0)]


@dataclass
class MonotonicityReport:
    """Diagnostic checks of the monotone-model assumptions on finite data."""

    states_real: bool
    admissible_decreasing: bool
    admissible_increasing: bool
    transition_increasing: bool
    cost_increasing: bool
    cost_decreasing: bool
    witnesses: dict = field(default_factory=dict)

    @property
    def decreasing_variant(self) -> bool:
        """D increasing in x, T increasing in x, realized cost decreasing in x."""
        return (self.admissible_increasing and self.transition_increasing
                and self.cost_decreasing)

    @property
    def increasing_variant(self) -> bool:
        """D decreasing in x, T increasing in x, realized cost increasing in x."""
        return (self.admissible_decreasing and self.transition_increasing
                and self.cost_increasing)


def validate_monotone(model: MDPModel, stage: int = 0) -> MonotonicityReport:
    """Check set/transition/cost monotonicity along the sorted real states."""
    states = list(model.states)
    if not all(isinstance(x, (int, float)) for x in states):
        return MonotonicityReport(False, False, False, False, False, False)
    states = sorted(states)
    rep = MonotonicityReport(True, True, True, True, True, True)
    adm = [set(model.admissible(stage, x)) for x in states]
    for i in range(len(states) - 1):
        lo, hi = states[i], states[i + 1]
        if not adm[i] >= adm[i + 1]:
            rep.admissible_decreasing = False
            rep.witnesses.setdefault("admissible_decreasing", (lo, hi))
        if not adm[i] <= adm[i + 1]:
            rep.admissible_increasing = False
            rep.witnesses.setdefault("admissible_increasing", (lo, hi))
        for a_idx in adm[i] & adm[i + 1]:
            a = model.actions[a_idx]
            for z, _ in model.disturbance(stage):
                x1 = model.transition(stage, lo, a, z)
                x2 = model.transition(stage, hi, a, z)
                if x2 < x1 - 1e-12:
                    rep.transition_increasing = False
                    rep.witnesses.setdefault("transition_increasing", (lo, hi, a, z))
                c1 = model.stage_cost(stage, lo, a, z, x1)
                c2 = model.stage_cost(stage, hi, a, z, x2)
                if c2 < c1 - 1e-12:
                    rep.cost_increasing = False
                    rep.witnesses.setdefault("cost_increasing", (lo, hi, a, z))
                if c2 > c1 + 1e-12:
                    rep.cost_decreasing = False
                    rep.witnesses.setdefault("cost_decreasing", (lo, hi, a, z))
    return rep
