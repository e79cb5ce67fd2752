"""Scenario file ingestion and re-emission.

Scenarios are structured documents (TOML or JSON with the same schema)
with explicit tables: every (stage, state, action, atom) combination of a
generic MDP must be mapped.  Named spectra (``es``, ``mixture``,
``expectation``) compile to step spectra.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .mdp_engine import MDPModel
from .outer_solver import OuterConfig
from .reinsurance import ReinsuranceConfig, Treaty
from .risk_core import DiscreteDistribution, DomainError, StepSpectrum


class ScenarioError(ValueError):
    """Malformed or incomplete scenario document."""


@dataclass
class Scenario:
    kind: str  # "generic_mdp" | "reinsurance"
    raw: dict
    spectrum: StepSpectrum
    outer: OuterConfig
    oracle_enabled: bool = False
    oracle_policy_cap: int = 200_000
    reinsurance: "ReinsuranceConfig | None" = None
    initial_state: object = None
    _model: MDPModel | None = field(default=None, repr=False)

    def model(self) -> MDPModel:
        if self._model is None:
            if self.kind == "reinsurance":
                from .reinsurance import build_mdp
                self._model = build_mdp(self.reinsurance)
            else:
                self._model = _build_generic_model(self.raw["model"])
        return self._model


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    text = path.read_bytes()
    if path.suffix == ".json":
        doc = json.loads(text)
    else:
        doc = tomllib.loads(text.decode())
    return parse_scenario(doc)


def emit_scenario(scenario: Scenario) -> str:
    """Canonical JSON re-emission of the raw document."""
    return json.dumps(scenario.raw, sort_keys=True, indent=2)


def parse_scenario(doc: dict) -> Scenario:
    kind = doc.get("kind")
    if kind not in ("generic_mdp", "reinsurance"):
        raise ScenarioError(f"unknown scenario kind {kind!r}")
    spectrum = parse_spectrum(doc.get("spectrum", {}))
    outer = _parse_outer(doc.get("outer", {}))
    oracle_sec = doc.get("oracle", {})
    sc = Scenario(
        kind=kind, raw=doc, spectrum=spectrum, outer=outer,
        oracle_enabled=bool(oracle_sec.get("enable", False)),
        oracle_policy_cap=int(oracle_sec.get("policy_cap", 200_000)),
    )
    if kind == "reinsurance":
        sc.reinsurance = _parse_reinsurance(doc.get("reinsurance", {}))
        sc.initial_state = float(sc.reinsurance.initial_surplus)
    else:
        model_sec = doc.get("model")
        if not model_sec:
            raise ScenarioError("missing [model] section")
        sc._model = _build_generic_model(model_sec)
        sc.initial_state = _state_value(model_sec.get(
            "initial_state", model_sec["states"][0]))
    return sc


def parse_spectrum(sec: dict) -> StepSpectrum:
    try:
        name = sec.get("name")
        if name == "es":
            return StepSpectrum.expected_shortfall(float(sec["alpha"]))
        if name == "expectation":
            return StepSpectrum.expectation()
        if name == "mixture" or "mixture" in sec:
            pairs = [(float(a), float(w)) for a, w in sec["mixture"]]
            return StepSpectrum.es_mixture(pairs)
        if "breakpoints" in sec:
            return StepSpectrum(sec["breakpoints"], sec["values"])
    except (KeyError, DomainError, TypeError) as exc:
        raise ScenarioError(f"bad spectrum section: {exc}") from exc
    raise ScenarioError("spectrum section must name a spectrum or give steps")


def _parse_outer(sec: dict) -> OuterConfig:
    try:
        return OuterConfig(
            epsilon=float(sec.get("epsilon", 0.1)),
            m=int(sec["m"]) if "m" in sec else None,
            restarts=int(sec.get("restarts", 3)),
            anneal_steps=int(sec.get("anneal_steps", 200)),
            initial_temperature=float(sec.get("initial_temperature", 1.0)),
            cooling_rate=float(sec.get("cooling_rate", 0.97)),
            move_scale=float(sec.get("move_scale", 0.15)),
            seed=int(sec.get("seed", 7)),
        )
    except (ValueError, DomainError) as exc:
        raise ScenarioError(f"bad outer section: {exc}") from exc


def _state_value(v):
    return float(v) if isinstance(v, (int, float)) else str(v)


def _build_generic_model(sec: dict) -> MDPModel:
    try:
        states = tuple(_state_value(x) for x in sec["states"])
        actions = tuple(str(a) for a in sec["actions"])
        beta = float(sec["beta"])
        horizon = sec["horizon"]
        horizon = None if horizon in ("inf", -1) else int(horizon)
        cost_cap = float(sec["cost_cap"])
    except KeyError as exc:
        raise ScenarioError(f"missing model field {exc}") from exc

    action_idx = {a: i for i, a in enumerate(actions)}
    n_stages = horizon if horizon is not None else 1

    # disturbances: list of {stages: "all" | [..], atoms, probs}
    dist_by_stage: dict[int, tuple] = {}
    for entry in sec.get("disturbances", []):
        atoms = [(_state_value(z), float(p))
                 for z, p in zip(entry["atoms"], entry["probs"])]
        total = sum(p for _, p in atoms)
        if abs(total - 1.0) > 1e-9:
            raise ScenarioError("disturbance probabilities must sum to 1")
        stages = entry.get("stages", "all")
        targets = range(n_stages) if stages == "all" else [int(k) for k in stages]
        for k in targets:
            dist_by_stage[k] = tuple(atoms)
    if set(dist_by_stage) != set(range(n_stages)):
        raise ScenarioError("every stage needs a disturbance distribution")

    # admissible sets: default everything, overridable per (stage, state)
    adm: dict[tuple, tuple] = {}
    for entry in sec.get("admissible", []):
        stages = entry.get("stages", "all")
        targets = range(n_stages) if stages == "all" else [int(k) for k in stages]
        acts = tuple(action_idx[str(a)] for a in entry["actions"])
        if not acts:
            raise ScenarioError("admissible action list must be non-empty")
        for k in targets:
            adm[(k, _state_value(entry["state"]))] = acts

    # transition/cost table rows, keyed by (stage, state, action, atom)
    table: dict[tuple, tuple] = {}
    for row in sec.get("table", []):
        stages = row.get("stages", row.get("stage", "all"))
        if stages == "all":
            targets = range(n_stages)
        elif isinstance(stages, list):
            targets = [int(k) for k in stages]
        else:
            targets = [int(stages)]
        key_base = (_state_value(row["state"]), str(row["action"]),
                    _state_value(row["atom"]))
        cost = float(row["cost"])
        if cost < 0:
            raise ScenarioError("stage costs must be non-negative")
        nxt = _state_value(row["next"])
        if nxt not in states:
            raise ScenarioError(f"transition target {nxt!r} is not a state")
        for k in targets:
            table[(k, *key_base)] = (nxt, cost)

    def admissible(n, x):
        if horizon is None:
            n = 0
        return adm.get((n, x), range(len(actions)))

    # totality check: every reachable (n, x, a, z) must be mapped
    for n in range(n_stages):
        for x in states:
            for a_idx in admissible(n, x):
                for z, _ in dist_by_stage[n]:
                    if (n, x, actions[a_idx], z) not in table:
                        raise ScenarioError(
                            f"table is missing (stage={n}, state={x!r}, "
                            f"action={actions[a_idx]!r}, atom={z!r})")

    terminal = {(_state_value(k)): float(v)
                for k, v in sec.get("terminal", {}).items()}

    def transition(n, x, a, z):
        if horizon is None:
            n = 0
        return table[(n, x, a, z)][0]

    def stage_cost(n, x, a, z, x_next):
        if horizon is None:
            n = 0
        return table[(n, x, a, z)][1]

    def disturbance(n):
        if horizon is None:
            n = 0
        return dist_by_stage[n]

    return MDPModel(
        states=states, actions=actions, admissible=admissible,
        disturbance=disturbance, transition=transition, stage_cost=stage_cost,
        terminal_cost=lambda x: terminal.get(x, 0.0),
        discount=beta, horizon=horizon, cost_cap=cost_cap,
        stationary=bool(sec.get("stationary", True)),
    )


def _parse_reinsurance(sec: dict) -> ReinsuranceConfig:
    try:
        claims = DiscreteDistribution(sec["claim_atoms"], sec["claim_probs"])
        income = DiscreteDistribution(sec["premium_atoms"], sec["premium_probs"])
        treaties: list[Treaty] = []
        for a in sec.get("stop_loss_grid", []):
            treaties.append(Treaty("stop_loss", float(a)))
        for b in sec.get("proportional_grid", []):
            treaties.append(Treaty("proportional", float(b)))
        if sec.get("include_identity", True):
            treaties.append(Treaty("identity"))
        grid_sec = sec["surplus_grid"]
        if isinstance(grid_sec, dict):
            grid = np.linspace(float(grid_sec["min"]), float(grid_sec["max"]),
                               int(grid_sec["points"]))
        else:
            grid = np.asarray(grid_sec, dtype=float)
        return ReinsuranceConfig(
            claims=claims, premium_income=income,
            theta=float(sec["theta"]), discount=float(sec["beta"]),
            horizon=int(sec["horizon"]),
            initial_surplus=float(sec["initial_surplus"]),
            treaties=tuple(treaties), surplus_grid=grid,
            budget_constrained=bool(sec.get("budget_constrained", False)),
            cost_of_capital_rate=float(sec.get("cost_of_capital_rate", 0.06)),
            snap_to_grid=bool(sec.get("snap_to_grid", True)),
        )
    except (KeyError, DomainError, TypeError) as exc:
        raise ScenarioError(f"bad reinsurance section: {exc}") from exc
