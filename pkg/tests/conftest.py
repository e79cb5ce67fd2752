"""Shared generators for random distributions, spectra and micro MDPs."""

from __future__ import annotations

import numpy as np

from specrisk import DiscreteDistribution, MDPModel, StepSpectrum


def random_distribution(rng: np.random.Generator, max_atoms: int = 20,
                        nonnegative: bool = False) -> DiscreteDistribution:
    n = int(rng.integers(1, max_atoms + 1))
    lo = 0.0 if nonnegative else -10.0
    atoms = np.sort(rng.uniform(lo, 10.0, n))
    probs = rng.dirichlet(np.ones(n))
    return DiscreteDistribution(atoms, probs)


def random_spectrum(rng: np.random.Generator, max_steps: int = 6) -> StepSpectrum:
    k = int(rng.integers(1, max_steps + 1))
    inner = np.sort(rng.uniform(0.0, 1.0, k - 1))
    breaks = np.concatenate([[0.0], inner, [1.0]])
    raw = np.cumsum(rng.uniform(0.1, 1.0, k))
    widths = np.diff(breaks)
    raw = raw / float(raw @ widths)  # normalize so the spectrum integrates to 1
    return StepSpectrum(breaks, raw)


def random_micro_mdp(rng: np.random.Generator, max_states: int = 3,
                     max_actions: int = 3, max_atoms: int = 3,
                     max_horizon: int = 3) -> tuple[MDPModel, int]:
    """A small tabular MDP with dense transitions; returns (model, x0)."""
    n_x = int(rng.integers(1, max_states + 1))
    n_a = int(rng.integers(1, max_actions + 1))
    n_z = int(rng.integers(1, max_atoms + 1))
    N = int(rng.integers(1, max_horizon + 1))
    beta = float(rng.uniform(0.5, 1.0))
    probs = rng.dirichlet(np.ones(n_z))
    atoms = tuple((z, float(p)) for z, p in enumerate(probs))
    nxt = rng.integers(0, n_x, (N, n_x, n_a, n_z))
    cost = np.round(rng.uniform(0.0, 2.0, (N, n_x, n_a, n_z)), 3)
    term = np.round(rng.uniform(0.0, 1.0, n_x), 3)

    model = MDPModel(
        states=tuple(range(n_x)), actions=tuple(range(n_a)),
        admissible=lambda n, x: tuple(range(n_a)),
        disturbance=lambda n: atoms,
        transition=lambda n, x, a, z: int(nxt[n, x, a, z]),
        stage_cost=lambda n, x, a, z, xn: float(cost[n, x, a, z]),
        terminal_cost=lambda x: float(term[x]),
        discount=beta, horizon=N, cost_cap=2.0 + float(term.max()),
        stationary=False,
    )
    return model, 0
