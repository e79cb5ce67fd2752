import numpy as np
import pytest

from specrisk import (GPoly, OracleCapError, StepSpectrum,
                      oracle_exact_optimum, oracle_expected_disutility,
                      oracle_outer_gap, solve_finite)
from conftest import random_micro_mdp
from test_mdp_engine import identity_g, two_action_model


class TestExactOptimum:
    def test_one_stage_es(self):
        m = two_action_model()
        spec = StepSpectrum.expected_shortfall(0.5)
        value, policy = oracle_exact_optimum(m, spec, "x")
        # ES_0.5 of the safe action is 1, of the risky action 2.2
        assert value == pytest.approx(1.0)
        assert policy[(0, "x", 0.0)] == 0

    def test_expectation_prefers_safe_here(self):
        m = two_action_model()
        spec = StepSpectrum.expectation()
        value, _ = oracle_exact_optimum(m, spec, "x")
        assert value == pytest.approx(1.0)

    def test_refuses_over_cap(self):
        m = two_action_model(beta=0.9, horizon=3)
        with pytest.raises(OracleCapError):
            oracle_exact_optimum(m, StepSpectrum.expectation(), "x", cap=4)

    def test_refuses_infinite_horizon(self):
        from test_mdp_engine import TestSolveInfinite
        m = TestSolveInfinite().geometric()
        with pytest.raises(OracleCapError):
            oracle_exact_optimum(m, StepSpectrum.expectation(), 0.0)


class TestExpectedDisutility:
    def test_matches_enumeration_on_micro(self):
        rng = np.random.default_rng(30)
        from specrisk.oracle import oracle_optimum
        for _ in range(10):
            m, x0 = random_micro_mdp(rng, max_states=2, max_actions=2,
                                     max_atoms=2, max_horizon=2)
            cap = sum(m.discount ** k * m.cost_cap for k in range(m.horizon + 1))
            g = GPoly(max(cap, 1e-9), np.array([0.0, cap / 2, cap]),
                      np.array([0.0, cap / 4, cap]), 2.0)
            tree_val = oracle_expected_disutility(m, g, x0)
            enum_val, _ = oracle_optimum(
                m, x0, lambda d: float(np.sum(d.probs * g(d.atoms))),
                cap=500_000)
            assert tree_val == pytest.approx(enum_val, abs=1e-12)

    def test_agrees_with_dp_solver(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            m, x0 = random_micro_mdp(rng)
            cap = sum(m.discount ** k * m.cost_cap for k in range(m.horizon + 1))
            g = identity_g(max(cap, 1e-9))
            dp = solve_finite(m, g, x0, mode="exact").value_at_origin
            assert oracle_expected_disutility(m, g, x0) == pytest.approx(
                dp, abs=1e-12)

    def test_zero_cost_model(self):
        from test_outer_solver import MDPZero
        g = identity_g(1.0)
        assert oracle_expected_disutility(MDPZero(), g, "x") == 0.0


class TestOuterGap:
    def test_gap_table_respects_bound(self):
        m = two_action_model()
        spec = StepSpectrum.expected_shortfall(0.5)
        rows = oracle_outer_gap(m, spec, "x", m_list=[2, 3], pitch=0.55)
        assert [r["m"] for r in rows] == [2, 3]
        for r in rows:
            assert r["gap"] >= -1e-9
            assert r["best_value"] >= r["oracle_value"] - 1e-9
        # the a-priori bound shrinks in m
        assert rows[1]["bound"] < rows[0]["bound"]
