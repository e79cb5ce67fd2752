import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specrisk import (DiscreteDistribution, DomainError, GPoly, StepSpectrum,
                      distortion, expected_shortfall, minimizer_g,
                      mixture_measure, quantile, ru_objective, spectral_risk,
                      spectral_risk_via_mixture)
from conftest import random_distribution, random_spectrum

finite = st.floats(min_value=-50, max_value=50, allow_nan=False)
dists = st.lists(st.tuples(finite, st.floats(min_value=0.01, max_value=1.0)),
                 min_size=1, max_size=12).map(
    lambda pairs: DiscreteDistribution([a for a, _ in pairs],
                                       np.asarray([w for _, w in pairs])
                                       / sum(w for _, w in pairs)))


class TestDiscreteDistribution:
    def test_merges_duplicate_atoms(self):
        d = DiscreteDistribution([1.0, 1.0, 2.0], [0.25, 0.25, 0.5])
        assert d.atoms.tolist() == [1.0, 2.0]
        assert d.probs.tolist() == [0.5, 0.5]

    def test_mean_and_stop_loss(self):
        d = DiscreteDistribution([0.0, 4.0], [0.5, 0.5])
        assert d.mean() == 2.0
        assert d.stop_loss(1.0) == pytest.approx(1.5)
        assert d.stop_loss(5.0) == 0.0

    def test_convolve(self):
        d = DiscreteDistribution([0.0, 1.0], [0.5, 0.5])
        s = d.convolve(d)
        assert s.atoms.tolist() == [0.0, 1.0, 2.0]
        assert s.probs.tolist() == pytest.approx([0.25, 0.5, 0.25])

    def test_rejects_bad_probs(self):
        with pytest.raises(DomainError):
            DiscreteDistribution([0.0, 1.0], [0.6, 0.6])


class TestQuantileAndES:
    def test_quantile_steps(self):
        d = DiscreteDistribution([1.0, 2.0, 3.0], [0.2, 0.3, 0.5])
        assert quantile(d, 0.1) == 1.0
        assert quantile(d, 0.2) == 1.0
        assert quantile(d, 0.21) == 2.0
        assert quantile(d, 1.0) == 3.0

    def test_es_plateaus(self):
        d = DiscreteDistribution([1.0, 2.0, 3.0], [0.2, 0.3, 0.5])
        assert expected_shortfall(d, 0.5) == pytest.approx(3.0)
        assert expected_shortfall(d, 0.4) == pytest.approx((0.1 * 2 + 0.5 * 3) / 0.6)
        assert expected_shortfall(d, 0.0) == pytest.approx(d.mean())

    def test_es_degenerate(self):
        d = DiscreteDistribution([5.0], [1.0])
        for a in (0.0, 0.5, 0.99):
            assert expected_shortfall(d, a) == pytest.approx(5.0)


class TestStepSpectrum:
    def test_normalization_enforced(self):
        with pytest.raises(DomainError):
            StepSpectrum([0.0, 1.0], [2.0])

    def test_must_increase(self):
        with pytest.raises(DomainError):
            StepSpectrum([0.0, 0.5, 1.0], [1.5, 0.5])

    def test_es_spectrum_values(self):
        spec = StepSpectrum.expected_shortfall(0.9)
        assert spec.at(0.5) == 0.0
        assert spec.at(0.95) == pytest.approx(10.0)
        assert spec.phi_one == pytest.approx(10.0)

    def test_distortion_of_es(self):
        spec = StepSpectrum.expected_shortfall(0.8)
        assert distortion(spec, 0.5) == 0.0
        assert distortion(spec, 0.9) == pytest.approx(0.5)
        assert distortion(spec, 1.0) == pytest.approx(1.0)

    def test_mixture_round_trip(self):
        spec = StepSpectrum.es_mixture([(0.0, 0.3), (0.5, 0.7)])
        mix = mixture_measure(spec)
        assert mix.levels.tolist() == [0.0, 0.5]
        assert mix.weights.tolist() == pytest.approx([0.3, 0.7])


class TestSpectralRisk:
    def test_expectation_spectrum_is_mean(self):
        rng = np.random.default_rng(0)
        spec = StepSpectrum.expectation()
        for _ in range(20):
            d = random_distribution(rng)
            assert spectral_risk(d, spec) == pytest.approx(d.mean(), abs=1e-12)

    def test_es_spectrum_matches_es(self):
        rng = np.random.default_rng(1)
        for alpha in (0.0, 0.5, 0.9):
            spec = StepSpectrum.expected_shortfall(alpha)
            for _ in range(20):
                d = random_distribution(rng)
                assert spectral_risk(d, spec) == pytest.approx(
                    expected_shortfall(d, alpha), abs=1e-10)

    def test_mixture_identity_random(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            d = random_distribution(rng)
            spec = random_spectrum(rng)
            assert spectral_risk(d, spec) == pytest.approx(
                spectral_risk_via_mixture(d, spec), abs=1e-10)

    @given(dists, st.floats(min_value=-5, max_value=5))
    @settings(max_examples=60, deadline=None)
    def test_translation_invariance(self, d, m):
        spec = StepSpectrum.es_mixture([(0.0, 0.4), (0.7, 0.6)])
        assert spectral_risk(d.shift(m), spec) == pytest.approx(
            spectral_risk(d, spec) + m, abs=1e-9)

    @given(dists, st.floats(min_value=0.0, max_value=4.0))
    @settings(max_examples=60, deadline=None)
    def test_positive_homogeneity(self, d, lam):
        spec = StepSpectrum.expected_shortfall(0.6)
        assert spectral_risk(d.scale(lam), spec) == pytest.approx(
            lam * spectral_risk(d, spec), abs=1e-8)

    @given(dists, st.floats(min_value=0.0, max_value=3.0))
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_shift(self, d, m):
        spec = StepSpectrum.es_mixture([(0.2, 0.5), (0.8, 0.5)])
        assert spectral_risk(d.shift(m), spec) >= spectral_risk(d, spec) - 1e-9

    @given(dists, dists)
    @settings(max_examples=40, deadline=None)
    def test_subadditive_on_independent_sum(self, d1, d2):
        spec = StepSpectrum.expected_shortfall(0.7)
        assert spectral_risk(d1.convolve(d2), spec) <= (
            spectral_risk(d1, spec) + spectral_risk(d2, spec) + 1e-8)


class TestRockafellarUryasev:
    def test_minimum_at_quantile(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            d = random_distribution(rng)
            for alpha in (0.0, 0.5, 0.9, 0.99):
                es = expected_shortfall(d, alpha)
                vals = [ru_objective(d, alpha, q) for q in d.atoms]
                assert min(vals) == pytest.approx(es, abs=1e-10)
                q_star = quantile(d, max(alpha, 1e-12))
                assert ru_objective(d, alpha, q_star) == pytest.approx(
                    es, abs=1e-10)


class TestGPoly:
    def test_rejects_decreasing_slopes(self):
        with pytest.raises(DomainError):
            GPoly(2.0, np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 1.5]),
                  max_slope=1.0)

    def test_rejects_first_value_above_cap(self):
        with pytest.raises(DomainError):
            GPoly(1.0, np.array([0.0, 1.0]), np.array([1.5, 2.5]), 1.0)

    def test_continuation_beyond_cap(self):
        g = GPoly(2.0, np.array([0.0, 1.0, 2.0]), np.array([0.0, 0.5, 1.5]), 2.0)
        assert g(3.0) == pytest.approx(1.5 + 2.0 * 1.0)
        assert g(0.5) == pytest.approx(0.25)

    def test_minimizer_is_feasible_and_convex(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            d = random_distribution(rng, nonnegative=True)
            spec = random_spectrum(rng)
            g = minimizer_g(spec, d)
            slopes = g.slopes
            assert np.all(np.diff(slopes) >= -1e-9)
            assert np.all(slopes <= spec.phi_one + 1e-9)
            assert np.all(slopes >= -1e-9)
