"""Exhaustive desk-scale oracles.

These deliberately avoid the extended-state-space machinery: they work on
the raw scenario tree of histories, so their optima are independent checks
of the dynamic-programming solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable

import numpy as np

from .mdp_engine import MDPModel
from .outer_solver import error_bound, objective_K
from .risk_core import DiscreteDistribution, GPoly, StepSpectrum, spectral_risk


class OracleCapError(RuntimeError):
    """The instance exceeds the configured enumeration cap; the oracle refuses."""


@dataclass
class _Node:
    stage: int
    state: object
    s: float            # accumulated discounted cost along the unique history
    actions: tuple      # admissible action indices
    children: list      # per action: list of (prob, child) or (prob, leaf cost)
    index: int = -1     # position in the DFS node list


def _build_tree(model: MDPModel, x0) -> tuple[_Node, list]:
    beta, N = model.discount, model.horizon
    nodes: list = []

    def build(n: int, x, s: float) -> object:
        if n == N:
            return s + beta ** N * model.terminal_cost(x)
        node = _Node(n, x, s, tuple(model.admissible(n, x)), [])
        node.index = len(nodes)
        nodes.append(node)
        t = beta ** n
        for a_idx in node.actions:
            a = model.actions[a_idx]
            branch = []
            for z, p in model.disturbance(n):
                x_next = model.transition(n, x, a, z)
                c = model.stage_cost(n, x, a, z, x_next)
                branch.append((p, build(n + 1, x_next, s + t * c)))
            node.children.append(branch)
        return node

    root = build(0, x0, 0.0)
    return root, nodes


def _policy_count(nodes: list) -> float:
    count = 1.0
    for node in nodes:
        count *= len(node.actions)
        if count == math.inf:
            break
    return count


def _leaves_under(node, choice: dict, prob: float, out: list) -> None:
    if not isinstance(node, _Node):
        out.append((node, prob))
        return
    k = choice[node.index]
    for p, child in node.children[k]:
        _leaves_under(child, choice, prob * p, out)


def oracle_exact_optimum(model: MDPModel, spec: StepSpectrum, x0,
                         cap: int = 200_000):
    """Exact min over all deterministic history-dependent policies of rho(C).

    Enumerates every assignment of actions to history nodes, builds the exact
    total-cost distribution per policy and applies the spectral risk measure.
    Refuses (no sampling fallback) when the policy count exceeds ``cap``.
    """
    return oracle_optimum(model, x0, lambda d: spectral_risk(d, spec), cap)


def oracle_optimum(model: MDPModel, x0,
                   objective: Callable[[DiscreteDistribution], float],
                   cap: int = 200_000):
    """Exact policy enumeration for an arbitrary law-determined objective."""
    if model.horizon is None:
        raise OracleCapError("the enumeration oracle requires a finite horizon")
    root, nodes = _build_tree(model, x0)
    n_policies = _policy_count(nodes)
    if n_policies > cap:
        raise OracleCapError(
            f"{n_policies:.3g} history-dependent policies exceed the cap {cap}")

    best_val, best_choice = math.inf, None
    for assignment in product(*(range(len(n.actions)) for n in nodes)):
        choice = dict(enumerate(assignment))
        leaves: list = []
        _leaves_under(root, choice, 1.0, leaves)
        leaves.sort()
        dist = DiscreteDistribution([c for c, _ in leaves], [p for _, p in leaves])
        val = objective(dist)
        if val < best_val:
            best_val = val
            best_choice = {(n.stage, n.state, n.s): n.actions[assignment[n.index]]
                           for n in nodes}
    return best_val, best_choice


def oracle_expected_disutility(model: MDPModel, g: GPoly, x0) -> float:
    """Exact history-dependent optimum of E[g(C)] by recursion on the tree.

    For an expectation objective the choices in disjoint subtrees decouple,
    so the minimum over all history-dependent policies is computed node by
    node without forming the policy product.  No (s, t)-aggregation is used:
    each history node carries its own accumulated cost.
    """
    if model.horizon is None:
        raise OracleCapError("the tree oracle requires a finite horizon")
    beta, N = model.discount, model.horizon

    def value(n: int, x, s: float) -> float:
        if n == N:
            return float(g(s + beta ** N * model.terminal_cost(x)))
        t = beta ** n
        best = math.inf
        for a_idx in model.admissible(n, x):
            a = model.actions[a_idx]
            total = 0.0
            for z, p in model.disturbance(n):
                x_next = model.transition(n, x, a, z)
                c = model.stage_cost(n, x, a, z, x_next)
                total += p * value(n + 1, x_next, s + t * c)
            best = min(best, total)
        return best

    return value(0, x0, 0.0)


def _gamma_lattice(m: int, c_hat: float, phi1: float, pitch: float,
                   cap: int):
    """All lattice points of the m-knot polytope with the given pitch."""
    h = c_hat / (m - 1)
    n_y = max(int(round(c_hat / pitch)), 1) + 1
    y0_grid = np.linspace(0.0, c_hat, n_y)
    n_s = max(int(round(phi1 * h / pitch)), 1) + 1
    slope_grid = np.linspace(0.0, phi1, n_s)
    count = n_y * math.comb(n_s + m - 2, m - 1)
    if count > cap:
        raise OracleCapError(f"lattice size {count} exceeds the cap {cap}")
    from itertools import combinations_with_replacement
    for y0 in y0_grid:
        for slopes in combinations_with_replacement(slope_grid, m - 1):
            yield y0 + np.concatenate([[0.0],
                                       np.cumsum(np.asarray(slopes) * h)])


def oracle_outer_gap(model: MDPModel, spec: StepSpectrum, x0,
                     m_list, pitch: float | None = None,
                     policy_cap: int = 200_000,
                     lattice_cap: int = 300_000) -> list[dict]:
    """Exhaustive lattice scan of the outer objective versus the true optimum.

    For each m, scans a quantized version of the knot polytope, records the
    best restricted objective value, its gap to the enumeration oracle and
    the a-priori restriction bound.
    """
    from .outer_solver import cost_cap as _cost_cap
    phi1 = spec.phi_one
    c_hat = max(_cost_cap(model), 1e-12)
    if pitch is None:
        pitch = c_hat / 12.0
    oracle_val, _ = oracle_exact_optimum(model, spec, x0, cap=policy_cap)
    rows = []
    for m in m_list:
        best_val, best_y = math.inf, None
        for y in _gamma_lattice(m, c_hat, phi1, pitch, lattice_cap):
            g = GPoly.from_gamma(y, c_hat, phi1)
            val = objective_K(model, g, spec, x0, mode="exact")
            if val < best_val:
                best_val, best_y = val, y
        rows.append({
            "m": m,
            "best_value": best_val,
            "best_y": best_y,
            "oracle_value": oracle_val,
            "gap": best_val - oracle_val,
            "bound": error_bound(m, phi1, c_hat),
            "pitch": pitch,
        })
    return rows
