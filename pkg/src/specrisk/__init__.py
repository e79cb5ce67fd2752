"""Spectral risk minimization for Markov decision processes.

The package splits the problem into an inner piece (dynamic programming on
an extended state space for a fixed convex disutility) and an outer piece
(a finite-dimensional search over piecewise-linear disutilities with an
a-priori error bound), plus a dynamic reinsurance application and small
exhaustive oracles for verification.
"""

__version__ = "0.1.0"

from .mdp_engine import (ExtendedState, MarkovPolicy, MDPModel, SolveReport,
                         apply_L, bellman_step, evaluate_policy,
                         extend_transition, solve_finite, solve_infinite,
                         validate_monotone)
from .oracle import (OracleCapError, oracle_exact_optimum,
                     oracle_expected_disutility, oracle_outer_gap)
from .outer_solver import (OuterConfig, OuterResult, anneal,
                           conjugate_closed_form, conjugate_integral,
                           cost_cap, error_bound, grid_size_from_epsilon,
                           isotonic_project, objective_K, project_pm)
from .reinsurance import (ReinsuranceConfig, Treaty, build_mdp,
                          convex_order_check, premium, solve_cost_of_capital,
                          stop_loss_grid)
from .risk_core import (DiscreteDistribution, DomainError, GPoly,
                        MixtureMeasure, StepSpectrum, distortion,
                        expected_shortfall, minimizer_g, mixture_measure,
                        quantile, ru_objective, spectral_risk,
                        spectral_risk_via_mixture)
from .scenario import (Scenario, ScenarioError, emit_scenario, load_scenario,
                       parse_scenario, parse_spectrum)

__all__ = [
    "__version__",
    "DiscreteDistribution", "DomainError", "GPoly", "MixtureMeasure",
    "StepSpectrum", "distortion", "expected_shortfall", "minimizer_g",
    "mixture_measure", "quantile", "ru_objective", "spectral_risk",
    "spectral_risk_via_mixture",
    "ExtendedState", "MarkovPolicy", "MDPModel", "SolveReport", "apply_L",
    "bellman_step", "evaluate_policy", "extend_transition", "solve_finite",
    "solve_infinite", "validate_monotone",
    "OuterConfig", "OuterResult", "anneal", "conjugate_closed_form",
    "conjugate_integral", "cost_cap", "error_bound",
    "grid_size_from_epsilon", "isotonic_project", "objective_K",
    "project_pm",
    "ReinsuranceConfig", "Treaty", "build_mdp", "convex_order_check",
    "premium", "solve_cost_of_capital", "stop_loss_grid",
    "OracleCapError", "oracle_exact_optimum", "oracle_expected_disutility",
    "oracle_outer_gap",
    "Scenario", "ScenarioError", "emit_scenario", "load_scenario",
    "parse_scenario", "parse_spectrum",
]
