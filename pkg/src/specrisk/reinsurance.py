"""Dynamic reinsurance as a finite MDP instance.

The insurer's surplus moves by premium income minus retained claims minus
the reinsurance premium; the per-period cost is the retained claim plus the
premium, shifted by the maximal premium income so that costs stay
non-negative.  Treaties come from a finite parametric grid of stop-loss
(and optionally proportional) retained-loss functions, and the expected
premium principle prices the ceded part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .mdp_engine import MDPModel
from .outer_solver import OuterConfig, OuterResult, anneal
from .risk_core import DiscreteDistribution, DomainError, StepSpectrum


@dataclass(frozen=True)
class Treaty:
    """Retained-loss function: stop-loss min(y, a), proportional b*y, or identity."""

    kind: str  # "stop_loss" | "proportional" | "identity"
    parameter: float = math.inf

    def __post_init__(self):
        if self.kind == "stop_loss":
            if self.parameter < 0:
                raise DomainError("stop-loss retention must be non-negative")
        elif self.kind == "proportional":
            if not 0 <= self.parameter <= 1:
                raise DomainError("proportional share must lie in [0, 1]")
        elif self.kind != "identity":
            raise DomainError(f"unknown treaty kind {self.kind!r}")

    def retained(self, y: float) -> float:
        if self.kind == "stop_loss":
            return min(y, self.parameter)
        if self.kind == "proportional":
            return self.parameter * y
        return y

    def label(self) -> str:
        if self.kind == "identity":
            return "identity"
        return f"{self.kind}:{self.parameter:g}"


def premium(treaty: Treaty, claims: DiscreteDistribution, theta: float) -> float:
    """Expected premium principle (1 + theta) * E[Y - f(Y)] for the ceded part."""
    if theta <= 0:
        raise DomainError("safety loading must be positive")
    ceded = sum(p * (y - treaty.retained(y))
                for y, p in zip(claims.atoms, claims.probs))
    return (1.0 + theta) * float(ceded)


@dataclass(frozen=True)
class ReinsuranceConfig:
    claims: DiscreteDistribution
    premium_income: DiscreteDistribution
    theta: float
    discount: float
    horizon: int
    initial_surplus: float
    treaties: tuple[Treaty, ...]
    surplus_grid: np.ndarray
    budget_constrained: bool = False
    cost_of_capital_rate: float = 0.06
    snap_to_grid: bool = True

    def __post_init__(self):
        if np.any(self.claims.atoms < 0) or np.any(self.premium_income.atoms < 0):
            raise DomainError("claims and premium income must be non-negative")
        if not 0 < self.discount <= 1:
            raise DomainError("discount must lie in (0, 1]")
        if not 0 < self.cost_of_capital_rate <= 1:
            raise DomainError("cost of capital rate must lie in (0, 1]")
        if len(self.treaties) == 0:
            raise DomainError("treaty grid is empty")
        grid = np.asarray(self.surplus_grid, dtype=float)
        if grid.size == 0:
            raise DomainError("surplus grid is empty")
        object.__setattr__(self, "surplus_grid", np.sort(grid))
        # a full-retention treaty guarantees a feasible zero-premium action
        y_max = float(self.claims.atoms[-1])
        covers_identity = any(
            t.kind == "identity"
            or (t.kind == "stop_loss" and t.parameter >= y_max)
            or (t.kind == "proportional" and t.parameter == 1.0)
            for t in self.treaties)
        if not covers_identity:
            raise DomainError("treaty grid must contain the identity treaty")


def stop_loss_grid(claims: DiscreteDistribution, points: int) -> tuple[Treaty, ...]:
    """Equidistant stop-loss retentions from 0 to the maximal claim."""
    levels = np.linspace(0.0, float(claims.atoms[-1]), points)
    return tuple(Treaty("stop_loss", float(a)) for a in levels)


def build_mdp(cfg: ReinsuranceConfig) -> MDPModel:
    """Translate the reinsurance instance into an MDPModel.

    Disturbance atoms are independent (claim, income) pairs; the stage cost
    f(y) + premium + z_max - z is non-negative by construction.  With
    ``snap_to_grid`` the successor surplus is snapped to the nearest grid
    point, otherwise surplus evolves exactly (exact-mode solves only).
    """
    z_hat = float(cfg.premium_income.atoms[-1])
    premiums = tuple(premium(t, cfg.claims, cfg.theta) for t in cfg.treaties)
    atoms = tuple(((float(y), float(z)), float(py * pz))
                  for y, py in zip(cfg.claims.atoms, cfg.claims.probs)
                  for z, pz in zip(cfg.premium_income.atoms, cfg.premium_income.probs))
    grid = cfg.surplus_grid
    treaty_index = {t: i for i, t in enumerate(cfg.treaties)}

    def admissible(n, x):
        if not cfg.budget_constrained:
            return range(len(cfg.treaties))
        allowed = [i for i, pr in enumerate(premiums) if pr <= max(x, 0.0) + 1e-12]
        if not allowed:
            raise DomainError(f"empty admissible treaty set at surplus {x}")
        return allowed

    def transition(n, x, treaty, yz):
        y, z = yz
        x_next = x + z - treaty.retained(y) - premiums[treaty_index[treaty]]
        if cfg.snap_to_grid:
            x_next = float(grid[int(np.argmin(np.abs(grid - x_next)))])
        return x_next

    def stage_cost(n, x, treaty, yz, x_next):
        y, z = yz
        return treaty.retained(y) + premiums[treaty_index[treaty]] + z_hat - z

    cost_cap = max(t.retained(float(cfg.claims.atoms[-1])) + pr
                   for t, pr in zip(cfg.treaties, premiums)) + z_hat

    return MDPModel(
        states=tuple(float(x) for x in grid),
        actions=cfg.treaties,
        admissible=admissible,
        disturbance=lambda n: atoms,
        transition=transition,
        stage_cost=stage_cost,
        terminal_cost=lambda x: 0.0,
        discount=cfg.discount,
        horizon=cfg.horizon,
        cost_cap=cost_cap,
        stationary=True,
    )


@dataclass
class CostOfCapitalReport:
    value: float
    error_bound: float
    outer: OuterResult
    policy_rows: list = field(default_factory=list)


def policy_table(model: MDPModel, outer: OuterResult) -> list:
    """Rows (stage, surplus, s, t, treaty_kind, parameter) of the solved policy."""
    rep = outer.inner_report
    rows = []
    policy = rep.policy
    if policy.mode == "exact":
        beta = model.discount
        for n, rule in enumerate(policy.stages):
            t = beta ** n
            for (x, s), a_idx in sorted(rule.items(),
                                        key=lambda kv: (kv[0][0], kv[0][1])):
                treaty = model.actions[a_idx]
                rows.append((n, x, s, t, treaty.kind, treaty.parameter))
    elif policy.mode == "grid":
        beta = model.discount
        for n, rule in enumerate(policy.stages):
            t = beta ** n
            for x in model.states:
                for i, s in enumerate(policy.s_grid):
                    treaty = model.actions[int(rule[x][i])]
                    rows.append((n, x, float(s), t, treaty.kind, treaty.parameter))
    else:
        for x in model.states:
            for j, t in enumerate(policy.t_levels):
                for i, s in enumerate(policy.s_grid):
                    treaty = model.actions[int(policy.stationary_rule[x][j][i])]
                    rows.append((0, x, float(s), float(t),
                                 treaty.kind, treaty.parameter))
    return rows


def solve_cost_of_capital(cfg: ReinsuranceConfig, spec: StepSpectrum,
                          outer_cfg: OuterConfig, mode: str = "grid",
                          solver_opts: dict | None = None,
                          threads: int = 1) -> CostOfCapitalReport:
    """Full outer pipeline on the reinsurance model, scaled by the CoC rate."""
    model = build_mdp(cfg)
    res = anneal(model, spec, float(cfg.initial_surplus), outer_cfg,
                 mode=mode, solver_opts=solver_opts, threads=threads)
    rate = cfg.cost_of_capital_rate
    return CostOfCapitalReport(
        value=rate * res.best_value,
        error_bound=rate * res.error_bound,
        outer=res,
        policy_rows=policy_table(model, res),
    )


def convex_order_check(claims: DiscreteDistribution, treaty: Treaty,
                       tol: float = 1e-9) -> tuple[float, bool]:
    """Find the expectation-matching stop-loss retention and verify dominance.

    Solves E[min(Y, a_f)] = E[f(Y)] by exact piecewise-linear inversion, then
    checks min(Y, a_f) <=_cx f(Y) via stop-loss transforms on the merged atom
    grid together with equality of means.
    """
    target = float(sum(p * treaty.retained(y)
                       for y, p in zip(claims.atoms, claims.probs)))
    a_f = _invert_limited_expectation(claims, target)

    retained = DiscreteDistribution(
        [treaty.retained(y) for y in claims.atoms], claims.probs)
    capped = DiscreteDistribution(np.minimum(claims.atoms, a_f), claims.probs)
    if abs(capped.mean() - retained.mean()) > 1e-7 * max(1.0, abs(target)):
        return a_f, False
    grid = np.unique(np.concatenate([capped.atoms, retained.atoms]))
    verified = all(capped.stop_loss(d) <= retained.stop_loss(d) + tol
                   for d in grid)
    return a_f, verified


def _invert_limited_expectation(claims: DiscreteDistribution,
                                target: float) -> float:
    """Smallest a with E[min(Y, a)] = target; linear between claim atoms."""
    mean = claims.mean()
    if target >= mean - 1e-15:
        return float(claims.atoms[-1])
    lo_a, lo_v = 0.0, 0.0
    for a in claims.atoms:
        v = float(np.dot(np.minimum(claims.atoms, a), claims.probs))
        if v >= target - 1e-15:
            # linear on [lo_a, a] with slope P(Y > lo_a)
            tail = float(np.dot(claims.probs, claims.atoms > lo_a + 1e-15)) \
                if a > lo_a else 0.0
            if tail <= 0:
                return float(a)
            return float(lo_a + (target - lo_v) / tail)
        lo_a, lo_v = float(a), v
    return float(claims.atoms[-1])
