# Import the necessary libraries.
import numpy as np
import pytest

from debias_bandit import baselines, instances
from debias_bandit.errors import ValidationError
from debias_bandit.model import Environment, Parameter


@pytest.fixture
def adversarial():
    # The bias override makes x_2 the best evaluation while x_1 has the best reward.
    first, _ = instances.worst_case_instance(4, 2, 2 ** 12, omega=-0.25)
    return first


def test_oracle_has_zero_regret(five_actions, five_theta):
    env = Environment(five_actions, five_theta, seed=9)
    result = baselines.run_policy('oracle', five_actions, env, 2 ** 10)
    np.testing.assert_array_equal(result.cum_regret, 0.0)
    assert result.segments == [(0, 2 ** 10)]


class TestAdversarialBias:
    """
    Noiseless runs on the bias-adversarial worst-case problem.
    """

    def test_unfair_locks_onto_the_evaluation_best(self, adversarial):
        env = Environment(adversarial.actions, adversarial.theta, noise_std=0.0)
        result = baselines.run_policy('unfair-pe', adversarial.actions, env, 2 ** 12)
        assert result.final_action == 1
        assert result.cum_regret[-1] > 0

    def test_fair_ends_on_the_reward_best(self, adversarial):
        env = Environment(adversarial.actions, adversarial.theta, noise_std=0.0)
        result = baselines.run_policy('fpe', adversarial.actions, env, 2 ** 12)
        assert result.final_action == 0


class TestBiasedEvaluationContrast:
    """
    Noisy runs at T = 2^16 on a problem whose evaluation argmax stays 1.27 below the best reward.
    """

    horizon = 2 ** 16

    @pytest.fixture
    def problem(self):
        return instances.biased_evaluation_instance()

    def runs(self, problem, policy):
        return [baselines.run_policy(policy, problem.actions, Environment(problem.actions, problem.theta, seed=seed), self.horizon) for seed in (0, 1)]

    def test_unfair_regret_is_linear(self, problem):
        for result in self.runs(problem, 'unfair-pe'):
            assert result.final_action == 2
            assert result.cum_regret[-1] >= 0.5 * problem.gap_summary().gaps[2] * self.horizon

    def test_fair_regret_is_three_times_smaller(self, problem):
        fair = self.runs(problem, 'fpe')
        unfair = self.runs(problem, 'unfair-pe')
        assert all(result.final_action == 0 for result in fair)
        assert np.mean([result.cum_regret[-1] for result in unfair]) >= 3 * np.mean([result.cum_regret[-1] for result in fair])


def test_unfair_and_known_bias_agree_without_bias(triangle):
    theta = Parameter(np.array([0.6, 0.3]), 0.0)
    unfair = baselines.run_policy('unfair-pe', triangle, Environment(triangle, theta, noise_std=0.0), 2 ** 12)
    known = baselines.run_policy('known-bias', triangle, Environment(triangle, theta, noise_std=0.0), 2 ** 12)
    assert unfair.final_action == known.final_action == 0
    assert known.policy == 'known-bias'
    assert unfair.policy == 'unfair-pe'


def test_unfair_records_one_estimate_per_phase(triangle, triangle_theta):
    env = Environment(triangle, triangle_theta, noise_std=0.0)
    result = baselines.unfair_phased_elimination(triangle, env, 2 ** 10)
    completed = [phase for phase in result.phases if phase.group_errors]
    assert completed
    assert all(set(phase.group_errors) == {0} for phase in completed)
    assert sum(phase.rounds_g_pos + phase.rounds_g_neg for phase in result.phases) == 2 ** 10


def test_unknown_policy(triangle, noiseless_env):
    with pytest.raises(ValidationError):
        baselines.run_policy('thompson', triangle, noiseless_env, 100)


def test_registry():
    assert set(baselines.POLICIES) == {'fpe', 'unfair-pe', 'known-bias', 'oracle'}
