# Import the necessary libraries.
import numpy as np
import pytest

from debias_bandit import fpe, geometry, instances, model
from debias_bandit.design import Allocation
from debias_bandit.errors import BudgetExhausted, ValidationError
from debias_bandit.geometry import ActionSet
from debias_bandit.model import Environment, Parameter


def test_ols_recovers_exact_parameter(triangle, triangle_theta):
    lifted = triangle.lifted
    batch = fpe.ObservationBatch.from_pairs(lifted, lifted @ triangle_theta.vector)
    np.testing.assert_allclose(fpe.ols(batch), triangle_theta.vector, atol=1e-12)
    assert batch.count == 3


def test_ols_on_empty_batch():
    with pytest.raises(ValidationError):
        fpe.ols(fpe.ObservationBatch(3))


class TestGExploration:
    def test_eliminates_far_actions(self, triangle, noiseless_env):
        # Evaluations 0.8 and 0.65 within group +1.
        outcome = fpe.g_exp_elim(triangle, [0, 2], n=20, eps=0.01, env=noiseless_env)
        assert outcome.surviving == [0]
        assert outcome.best == 0
        assert outcome.rounds_used == sum(count for _, count in outcome.plays)

    def test_keeps_close_actions(self, triangle, noiseless_env):
        outcome = fpe.g_exp_elim(triangle, [0, 2], n=20, eps=1.0, env=noiseless_env)
        assert outcome.surviving == [0, 2]

    def test_budget_exhausted_pulls_nothing(self, triangle, triangle_theta):
        env = Environment(triangle, triangle_theta, seed=4)
        with pytest.raises(BudgetExhausted) as info:
            fpe.g_exp_elim(triangle, [0, 2], n=100, eps=0.1, env=env, budget=10)
        assert info.value.allocation.total > 10
        fresh = Environment(triangle, triangle_theta, seed=4)
        assert env.evaluate(0) == fresh.evaluate(0)


class TestDeltaExploration:
    def test_noiseless_step(self, triangle, triangle_theta, noiseless_env):
        theta_hats = {1: triangle_theta.vector, -1: triangle_theta.vector}
        active = {1: [0, 2], -1: [1]}
        outcome = fpe.delta_exp_elim(triangle, active, theta_hats, np.full(3, 2.0), n=10, eps=0.05, env=noiseless_env)
        assert outcome.omega_hat == pytest.approx(0.2, abs=1e-9)
        assert outcome.z_found == 1
        np.testing.assert_allclose(outcome.gap_estimates, [0.2, 0.5, 0.35], atol=1e-9)

    def test_no_separation_at_coarse_accuracy(self, triangle, triangle_theta, noiseless_env):
        theta_hats = {1: triangle_theta.vector, -1: triangle_theta.vector}
        outcome = fpe.delta_exp_elim(triangle, {1: [0, 2], -1: [1]}, theta_hats, np.full(3, 2.0), n=10, eps=0.5, env=noiseless_env)
        assert outcome.z_found == 0
        np.testing.assert_allclose(outcome.gap_estimates, [2.0, 2.0, 2.0])

    def test_needs_both_groups(self, triangle, triangle_theta, noiseless_env):
        with pytest.raises(ValidationError):
            fpe.delta_exp_elim(triangle, {1: [0, 2], -1: []}, {}, np.full(3, 2.0), n=10, eps=0.5, env=noiseless_env)


def test_separated_group():
    scores = {0: 1.0, 1: 0.5, 2: 0.2}
    assert fpe.separated_group(scores, {1: [0], -1: [1, 2]}, eps=0.1) == 1
    assert fpe.separated_group(scores, {1: [0], -1: [1, 2]}, eps=0.2) == 0
    assert fpe.separated_group(scores, {1: [2], -1: [0]}, eps=0.1) == -1


class TestRoundLedger:
    def test_truncation_and_merging(self, noiseless_env):
        ledger = fpe.RoundLedger(noiseless_env, 10)
        ledger.play(1, 3)
        ledger.play(1, 2)
        assert ledger.segments == [(1, 5)]
        assert ledger.fill(0) == 5
        assert ledger.remaining == 0
        assert len(ledger.play(2, 4)) == 0
        assert ledger.plays_since(3) == [(1, 2), (0, 5)]

    def test_play_truncated(self, noiseless_env):
        ledger = fpe.RoundLedger(noiseless_env, 6)
        played = ledger.play_truncated(Allocation(np.array([4, 0, 5])))
        assert played == {0: 4, 2: 2}
        assert ledger.t == 6


def test_regret_at_checkpoints():
    regret = fpe.regret_at_checkpoints([(1, 3), (0, 5)], np.array([0.0, 0.3, 0.15]), [1, 2, 4, 8])
    np.testing.assert_allclose(regret, [0.3, 0.6, 0.9, 0.9])


def test_phase_cap():
    assert fpe.phase_cap(2 ** 10) == 34


@pytest.mark.parametrize('horizon, delta', [(0, None), (100, 0.0), (100, 1.5)])
def test_check_inputs(triangle, horizon, delta):
    with pytest.raises(ValidationError):
        fpe.check_inputs(triangle, horizon, delta)


class TestNoiselessRun:
    """
    Without noise the best action and its group are never dropped and the run ends on x*.
    """

    @pytest.fixture
    def result(self, triangle, noiseless_env):
        return fpe.run(triangle, noiseless_env, 2 ** 12)

    def test_plays_every_round(self, result):
        assert result.total_rounds == 2 ** 12
        assert result.policy == 'fpe'

    def test_best_action_survives(self, result):
        for phase in result.phases:
            assert 0 in phase.survivors
            assert phase.z_hat in (0, 1)

    def test_ends_on_best_action(self, result):
        assert result.final_action == 0

    def test_trace_matches_choices(self, triangle, triangle_theta, result):
        choices = result.choices()
        for checkpoint, regret in zip(result.checkpoints, result.cum_regret):
            assert regret == pytest.approx(model.cumulative_regret(triangle, triangle_theta, choices[:checkpoint]), abs=1e-9)

    def test_no_estimate_errors(self, result):
        assert not result.good_event_violated()

    def test_document(self, result):
        document = result.to_dict()
        assert document['checkpoints'][-1] == 2 ** 12
        assert len(document['phases']) == len(result.phases)


def test_noiseless_run_on_five_actions(five_actions, five_theta):
    env = Environment(five_actions, five_theta, noise_std=0.0)
    result = fpe.run(five_actions, env, 2 ** 12)
    assert result.final_action == 0
    assert all(0 in phase.survivors for phase in result.phases)


def test_seeded_runs_repeat(triangle, triangle_theta):
    first = fpe.run(triangle, Environment(triangle, triangle_theta, seed=3), 2 ** 10)
    second = fpe.run(triangle, Environment(triangle, triangle_theta, seed=3), 2 ** 10)
    np.testing.assert_array_equal(first.cum_regret, second.cum_regret)
    assert first.segments == second.segments


def test_known_bias_skips_bias_exploration(triangle, triangle_theta):
    env = Environment(triangle, triangle_theta, noise_std=0.0)
    result = fpe.run(triangle, env, 2 ** 12, known_omega=triangle_theta.omega)
    assert result.policy == 'known-bias'
    assert all(phase.rounds_delta == 0 for phase in result.phases)
    assert result.final_action == 0


def test_good_event_coverage(five_actions, five_theta):
    # Reduced version of the 200-replication coverage experiment: 2 delta plus three binomial sds.
    reps, delta = 100, 0.05
    violations = [fpe.run(five_actions, Environment(five_actions, five_theta, seed=seed), 2 ** 12, delta=delta).good_event_violated() for seed in range(reps)]
    assert np.mean(violations) <= 2 * delta + 3 * np.sqrt(2 * delta / reps)


@pytest.fixture
def six_actions():
    # Three actions per group; group +1 lies on the line x_1 + x_2 = 1.
    covariates = np.array([[1.0, 0.0], [0.5, 0.5], [0.2, 0.8], [0.0, 1.0], [0.6, 0.1], [-0.5, 0.2]])
    return ActionSet(covariates, np.array([1, 1, 1, -1, -1, -1]))


def test_group_error_on_index_tuples(six_actions):
    theta_true = np.array([0.6, 0.3, 0.2])
    shifted = theta_true + np.array([0.0, 0.0, 0.1])
    assert fpe.group_error(six_actions, (0, 1, 2), shifted, theta_true) == pytest.approx(0.1)
    assert fpe.group_error(six_actions, (3, 5), theta_true, theta_true) == 0.0


class TestLargeGroups:
    """
    Noiseless run with three actions in each group.
    """

    @pytest.fixture
    def result(self, six_actions):
        env = Environment(six_actions, Parameter(np.array([0.6, 0.3]), 0.2), noise_std=0.0)
        return fpe.run(six_actions, env, 2 ** 12)

    def test_plays_every_round(self, result):
        assert result.total_rounds == 2 ** 12

    def test_best_action_survives(self, result):
        assert all(0 in phase.survivors for phase in result.phases)

    def test_exact_group_estimates(self, result):
        errors = [error for phase in result.phases for error in phase.group_errors.values()]
        assert errors
        assert max(errors) < 1e-8


class TestRecovery:
    """
    kappa* = 100 with T = 64: the bias is not worth estimating even at eps = 2.
    """

    @pytest.fixture
    def actions(self):
        return instances.bias_action_set(100, 2, split=1)

    @pytest.fixture
    def result(self, actions):
        env = Environment(actions, Parameter(np.array([0.3, 0.1]), 0.1), noise_std=0.0)
        return fpe.run(actions, env, 64)

    def test_enters_after_the_first_group_steps(self, result):
        first = result.phases[0]
        assert len(result.phases) == 1
        assert result.recovery_entered_at == first.rounds_g_pos + first.rounds_g_neg > 0
        assert first.rounds_delta == 0
        assert result.last_explored[0] == 0
        assert result.total_rounds == 64

    def test_threshold_uses_twice_kappa_star(self, actions, result):
        assert result.phases[0].kappa_hat == pytest.approx(2 * geometry.kappa_star(actions)[0], rel=1e-6)

    def test_commits_to_one_action(self, result):
        committed = result.choices()[result.recovery_entered_at:]
        assert len(committed) == 64 - result.recovery_entered_at
        assert np.all(committed == committed[0])
        assert committed[0] == 0


def test_horizon_shorter_than_the_first_allocation(triangle, noiseless_env):
    # The first G-allocation of group -1 needs ceil(1.5 log 30) = 6 pulls of action 1.
    result = fpe.run(triangle, noiseless_env, 5)
    assert result.total_rounds == 5
    assert len(result.phases) == 1
    np.testing.assert_array_equal(result.played_counts(3), [0, 5, 0])
    assert result.phases[0].rounds_g_neg == 5
    assert result.phases[0].rounds_g_pos == 0
    assert result.recovery_entered_at is None


class TestLongNoiselessRun:
    """
    T = 2^20 with delta = 1/2 on the triangle: Delta_neq = 0.3 and group +1 holds x*.
    """

    horizon = 2 ** 20
    delta = 0.5

    @pytest.fixture
    def result(self, triangle, noiseless_env):
        return fpe.run(triangle, noiseless_env, self.horizon, delta=self.delta)

    def test_best_group_found_below_an_eighth_of_delta_neq(self, result):
        fine = [phase for phase in result.phases if phase.eps <= 0.3 / 8]
        assert fine
        assert all(phase.z_hat == 1 for phase in fine)
        assert all(phase.z_hat in (0, 1) for phase in result.phases)

    def test_survivor_sets_shrink(self, result):
        for previous, current in zip(result.phases, result.phases[1:]):
            assert set(current.survivors) <= set(previous.survivors)
        assert result.phases[-1].survivors == [0]

    def test_group_rounds_within_phase_budget(self, triangle, result):
        k, d = triangle.k, triangle.d
        for phase in result.phases[:-1]:
            n = 2 * (d + 1) / phase.eps ** 2 * np.log(k * phase.l * (phase.l + 1) / self.delta)
            for rounds in (phase.rounds_g_pos, phase.rounds_g_neg):
                assert rounds <= n + (d + 1) * (d + 2) / 2

    def test_overrun_fills_with_the_group_best(self, result):
        assert result.total_rounds == self.horizon
        assert result.final_action == 0
        assert result.recovery_entered_at is None
