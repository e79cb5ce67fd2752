import numpy as np
import pytest

from specrisk import (DiscreteDistribution, DomainError, ReinsuranceConfig,
                      StepSpectrum, Treaty, build_mdp, convex_order_check,
                      premium, spectral_risk, stop_loss_grid,
                      validate_monotone)

CLAIMS = DiscreteDistribution([0.0, 1.0, 2.0, 3.0, 4.0],
                              [0.3, 0.25, 0.2, 0.15, 0.1])
INCOME = DiscreteDistribution([2.0, 3.0], [0.5, 0.5])


def config(**kw) -> ReinsuranceConfig:
    base = dict(
        claims=CLAIMS, premium_income=INCOME, theta=0.2, discount=0.9,
        horizon=3, initial_surplus=2.0,
        treaties=(Treaty("stop_loss", 0.0), Treaty("stop_loss", 2.0),
                  Treaty("proportional", 0.5), Treaty("identity")),
        surplus_grid=np.linspace(-10.0, 10.0, 41),
    )
    base.update(kw)
    return ReinsuranceConfig(**base)


class TestPremium:
    def test_full_cession(self):
        # ceding everything costs (1 + theta) * E[Y]
        d = DiscreteDistribution([0.0, 10.0], [0.5, 0.5])
        assert premium(Treaty("stop_loss", 0.0), d, 0.2) == pytest.approx(6.0)

    def test_full_retention_is_free(self):
        assert premium(Treaty("identity"), CLAIMS, 0.2) == 0.0
        assert premium(Treaty("proportional", 1.0), CLAIMS, 0.2) == 0.0

    def test_proportional_half(self):
        d = DiscreteDistribution([0.0, 10.0], [0.5, 0.5])
        assert premium(Treaty("proportional", 0.5), d, 0.2) == pytest.approx(3.0)

    def test_rejects_nonpositive_loading(self):
        with pytest.raises(DomainError):
            premium(Treaty("identity"), CLAIMS, 0.0)


class TestTreaty:
    def test_retained_functions(self):
        assert Treaty("stop_loss", 2.0).retained(5.0) == 2.0
        assert Treaty("stop_loss", 2.0).retained(1.0) == 1.0
        assert Treaty("proportional", 0.25).retained(4.0) == 1.0
        assert Treaty("identity").retained(7.0) == 7.0

    def test_parameter_validation(self):
        with pytest.raises(DomainError):
            Treaty("proportional", 1.5)
        with pytest.raises(DomainError):
            Treaty("stop_loss", -1.0)

    def test_stop_loss_grid_spans_claims(self):
        grid = stop_loss_grid(CLAIMS, 5)
        assert [t.parameter for t in grid] == [0.0, 1.0, 2.0, 3.0, 4.0]


class TestBuildMdp:
    def test_costs_nonnegative(self):
        model = build_mdp(config())
        for x in model.states:
            for a_idx in model.admissible(0, x):
                a = model.actions[a_idx]
                for z, _ in model.disturbance(0):
                    xn = model.transition(0, x, a, z)
                    assert model.stage_cost(0, x, a, z, xn) >= 0.0

    def test_cost_cap_covers_worst_case(self):
        model = build_mdp(config())
        worst = max(model.stage_cost(0, x, model.actions[a], z,
                                     model.transition(0, x, model.actions[a], z))
                    for x in model.states
                    for a in model.admissible(0, x)
                    for z, _ in model.disturbance(0))
        assert model.cost_cap >= worst - 1e-12

    def test_monotone_structure(self):
        rep = validate_monotone(build_mdp(config()))
        # richer treaties never become inadmissible at higher surplus, the
        # surplus transition is increasing and realized cost ignores surplus
        assert rep.states_real
        assert rep.transition_increasing
        assert rep.cost_increasing and rep.cost_decreasing

    def test_budget_constraint_shrinks_menu(self):
        model = build_mdp(config(budget_constrained=True))
        low = set(model.admissible(0, -10.0))
        high = set(model.admissible(0, 10.0))
        assert low < high

    def test_requires_identity_treaty(self):
        with pytest.raises(DomainError):
            config(treaties=(Treaty("stop_loss", 1.0),))

    def test_telescoping_surplus_without_snap(self):
        # without discounting or snapping, final surplus is x0 plus income
        # minus retained claims minus premiums along the path
        cfg = config(discount=1.0, snap_to_grid=False, horizon=2,
                     treaties=(Treaty("identity"),))
        model = build_mdp(cfg)
        x, s = 2.0, 0.0
        path = [((4.0, 2.0), 1.0), ((1.0, 3.0), 1.0)]
        for n, (yz, t) in enumerate(path):
            xn = model.transition(n, x, model.actions[0], yz)
            s += t * model.stage_cost(n, x, model.actions[0], yz, xn)
            x = xn
        assert x == pytest.approx(2.0 + (2.0 - 4.0) + (3.0 - 1.0))
        # accumulated cost = retained + shift = 5 + 2*z_hat - sum(z)
        assert s == pytest.approx(5.0 + 2 * 3.0 - 5.0)


class TestConvexOrder:
    def test_stop_loss_dominates_proportional(self):
        for b in (0.25, 0.5, 0.75):
            a_f, ok = convex_order_check(CLAIMS, Treaty("proportional", b))
            assert ok
            # means must match by construction
            ret = sum(p * b * y for y, p in zip(CLAIMS.atoms, CLAIMS.probs))
            lim = sum(p * min(y, a_f) for y, p in zip(CLAIMS.atoms, CLAIMS.probs))
            assert lim == pytest.approx(ret, abs=1e-9)

    def test_matches_hand_inversion(self):
        d = DiscreteDistribution([0.0, 10.0], [0.5, 0.5])
        # E[f(Y)] = 2.5 for b = 0.5; E[min(Y, a)] = a/2 on [0, 10] => a = 5
        a_f, ok = convex_order_check(d, Treaty("proportional", 0.5))
        assert a_f == pytest.approx(5.0)
        assert ok

    def test_identity_is_its_own_bound(self):
        a_f, ok = convex_order_check(CLAIMS, Treaty("identity"))
        assert a_f >= float(CLAIMS.atoms[-1]) - 1e-9
        assert ok


class TestStaticReduction:
    def test_one_period_prefers_stop_loss_under_es(self):
        """With one period and matched premium spend, stop-loss beats
        proportional for a convex criterion applied to the retained loss."""
        spec = StepSpectrum.expected_shortfall(0.9)
        prop = Treaty("proportional", 0.5)
        a_f, ok = convex_order_check(CLAIMS, prop)
        assert ok
        sl = Treaty("stop_loss", a_f)

        def one_period_value(treaty):
            pr = premium(treaty, CLAIMS, 0.2)
            atoms = [treaty.retained(y) + pr + 3.0 - z
                     for y in CLAIMS.atoms for z in INCOME.atoms]
            probs = [py * pz for py in CLAIMS.probs for pz in INCOME.probs]
            return spectral_risk(DiscreteDistribution(atoms, probs), spec)

        assert one_period_value(sl) <= one_period_value(prop) + 1e-9
