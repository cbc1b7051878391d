# Import the necessary libraries.
import logging

import numpy as np
import pytest

from debias_bandit import geometry, instances, model
from debias_bandit.errors import ValidationError
from debias_bandit.instances import ProblemInstance


@pytest.mark.parametrize('kappa', [1, 2, 4, 9, 16])
@pytest.mark.parametrize('d', [2, 3, 4, 6])
def test_worst_case_kappa_star(kappa, d):
    first, second = instances.worst_case_instance(kappa, d, 10 ** 6)
    for problem in (first, second):
        value, _ = geometry.kappa_star(problem.actions)
        assert value == pytest.approx(kappa, rel=1e-6)


@pytest.mark.parametrize('kappa', [2, 4, 9, 16])
@pytest.mark.parametrize('d', [4, 6])
def test_gap_kappa_star(kappa, d):
    problem = instances.gap_instance(kappa, d, 0.05, 0.1)
    value, _ = geometry.kappa_star(problem.actions)
    assert value == pytest.approx(kappa, rel=1e-6)


class TestWorstCase:
    def test_best_actions(self):
        first, second = instances.worst_case_instance(4, 2, 2 ** 12)
        assert first.gap_summary().best_index == 0
        assert second.gap_summary().best_index == 1
        assert first.meta.rho == pytest.approx((4 / 2 ** 12) ** (1 / 3))

    def test_evaluations_tie_on_the_first_actions(self):
        # The bias cancels the reward difference between x_1 and x_2.
        first, _ = instances.worst_case_instance(4, 2, 2 ** 12)
        means = first.actions.lifted @ first.theta.vector
        assert means[0] == pytest.approx(means[1], abs=1e-12)

    def test_e3_design(self):
        first, _ = instances.worst_case_instance(4, 2, 2 ** 12)
        value, dsn = geometry.kappa_star(first.actions)
        assert value == pytest.approx(4.0, rel=1e-9)
        assert len(dsn.support) <= 3
        np.testing.assert_allclose(dsn.weights, [0.25, 0.0, 0.75], atol=1e-9)

    def test_short_horizon(self):
        with pytest.raises(ValidationError):
            instances.worst_case_instance(4, 2, 256)


class TestGapInstance:
    """
    kappa = 4, d = 4, delta_min = 0.05, delta_neq = 0.1.
    """

    @pytest.fixture
    def problem(self):
        return instances.gap_instance(4, 4, 0.05, 0.1)

    def test_parameter(self, problem):
        np.testing.assert_allclose(problem.theta.gamma, [0.575, 0.525, 0.475, 0.425], atol=1e-12)
        assert problem.theta.omega == pytest.approx(-0.05)

    def test_gaps(self, problem):
        summary = problem.gap_summary()
        assert summary.best_index == 0
        assert summary.delta_min == pytest.approx(0.05, abs=1e-12)
        assert summary.delta_neq == pytest.approx(0.1, abs=1e-12)

    def test_kappa_of_gaps_closed_form(self, problem):
        extra_gap = problem.gap_summary().gaps[4]
        assert extra_gap == pytest.approx(0.575 + 0.575 / 3, rel=1e-12)
        assert problem.kappa_of_gaps() == pytest.approx(instances.gap_kappa_closed_form(4, extra_gap), rel=1e-4)

    def test_parameter_classes(self, problem):
        assert instances.in_parameter_class(problem.actions, problem.theta, 0.05, 0.1)
        assert not instances.in_parameter_class(problem.actions, problem.theta, 0.06, 0.1)
        assert instances.in_parameter_class(problem.actions, problem.theta, 0.05, 0.1, kappa=2 * 4)

    def test_last_alternative_switches_group(self):
        problem = instances.gap_instance(4, 4, 0.05, 0.1, alternative=3)
        best = problem.gap_summary().best_index
        assert problem.actions.groups[best] == -1

    @pytest.mark.parametrize('alternative', [2, 3])
    def test_alternatives_share_gaps(self, alternative):
        summary = instances.gap_instance(4, 4, 0.05, 0.1, alternative=alternative).gap_summary()
        assert summary.unique
        assert summary.delta_min == pytest.approx(0.05, abs=1e-12)
        assert summary.delta_neq == pytest.approx(0.1, abs=1e-12)

    def test_bad_ranges(self):
        with pytest.raises(ValidationError):
            instances.gap_instance(4, 4, 0.1, 0.05)
        with pytest.raises(ValidationError):
            instances.gap_instance(4, 4, 0.05, 0.1, alternative=4)
        with pytest.raises(ValidationError):
            instances.gap_instance(1, 4, 0.05, 0.1)

    def test_wide_gaps_warn(self, caplog):
        with caplog.at_level(logging.WARNING):
            problem = instances.gap_instance(4, 4, 0.1, 0.2)
        assert 'outside (0, 1/8)' in caplog.text
        assert problem.gap_summary().delta_neq == pytest.approx(0.2, abs=1e-12)


class TestSmallDimension:
    @pytest.mark.parametrize('d', [2, 3])
    def test_case_one(self, d):
        problem = instances.small_d_gap_instance(d, 1, 4, 0.05, 0.1, alternative=2)
        summary = problem.gap_summary()
        assert summary.best_index == 1
        assert summary.delta_min == pytest.approx(0.05, abs=1e-12)
        assert problem.theta.omega == 0.0

    @pytest.mark.parametrize('d', [2, 3])
    def test_case_two(self, d):
        problem = instances.small_d_gap_instance(d, 2, 4, 0.05, 0.1)
        summary = problem.gap_summary()
        assert summary.delta_min == pytest.approx(0.1, abs=1e-12)
        assert summary.delta_neq == pytest.approx(0.1, abs=1e-12)
        assert geometry.kappa_star(problem.actions)[0] == pytest.approx(4.0, rel=1e-6)

    def test_case_mismatch_only_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            instances.small_d_gap_instance(2, 1, 4, 0.05, 0.1)
        assert 'suggests case 2' in caplog.text

    def test_bad_dimension(self):
        with pytest.raises(ValidationError):
            instances.small_d_gap_instance(4, 1, 4, 0.05, 0.1)


def test_save_and_load(tmp_path):
    problem = instances.gap_instance(4, 4, 0.05, 0.1)
    problem.save(tmp_path / 'gap')
    assert {path.name for path in (tmp_path / 'gap').iterdir()} == {'actions.json', 'theta.json', 'meta.json'}
    restored = ProblemInstance.load(tmp_path / 'gap')
    np.testing.assert_array_equal(restored.actions.covariates, problem.actions.covariates)
    np.testing.assert_array_equal(restored.theta.gamma, problem.theta.gamma)
    assert restored.meta == problem.meta


def test_admissible_generators():
    for problem in instances.worst_case_instance(9, 3, 10 ** 5):
        assert model.is_admissible(problem.actions, problem.theta)


class TestBiasedEvaluation:
    """
    kappa = 4, d = 2: rewards 0.95, -0.6 and -0.95/3; evaluations 0.05, 0.3 and 0.9 - 0.95/3.
    """

    @pytest.fixture
    def problem(self):
        return instances.biased_evaluation_instance()

    def test_kappa_star(self, problem):
        assert geometry.kappa_star(problem.actions)[0] == pytest.approx(4.0, rel=1e-6)
        assert problem.meta.family == 'biased-evaluation'
        assert problem.meta.horizon is None

    def test_evaluation_argmax_is_suboptimal(self, problem):
        evaluations = problem.actions.lifted @ problem.theta.vector
        np.testing.assert_allclose(evaluations, [0.05, 0.3, 0.9 - 0.95 / 3], atol=1e-12)
        summary = problem.gap_summary()
        assert summary.best_index == 0
        assert summary.gaps[int(np.argmax(evaluations))] == pytest.approx(0.95 * 4 / 3, abs=1e-12)

    @pytest.mark.parametrize('d', [3, 5])
    def test_higher_dimensions(self, d):
        problem = instances.biased_evaluation_instance(9, d)
        assert problem.gap_summary().best_index == 0
        assert problem.actions.groups[int(np.argmax(problem.actions.lifted @ problem.theta.vector))] == -1

    def test_bad_parameters(self):
        with pytest.raises(ValidationError, match='on top'):
            instances.biased_evaluation_instance(omega=0.5)
        with pytest.raises(ValidationError, match='inadmissible'):
            instances.biased_evaluation_instance(penalty=-1.5)
        with pytest.raises(ValidationError):
            instances.biased_evaluation_instance(d=1)
