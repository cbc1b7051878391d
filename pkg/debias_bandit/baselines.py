"""
Comparison policies for Fair Phased Elimination.

- unfair-pe: phased elimination over the whole action set that takes the evaluations at face
  value, i.e. ranks actions by x^T gamma + z omega.
- known-bias: Fair Phased Elimination handed the true bias, so no bias exploration.
- oracle: plays the true best action every round.

Every policy has the signature (actions, env, horizon, delta, **options) -> RunResult and is
registered in POLICIES under the name used by the experiment configs.
"""

# Import the necessary libraries.
import logging
import math

from debias_bandit import fpe, model
from debias_bandit.errors import BudgetExhausted, PhaseLimitError, ValidationError


def unfair_phased_elimination(actions, env, horizon: int, delta: float | None = None, *, tol: float = 1e-3) -> fpe.RunResult:
    """
    Phased elimination on the lifted vectors, treating the evaluation as the reward.

    Each phase pulls a G-optimal design over all surviving actions with the same budget scale
    as the group phases of Fair Phased Elimination, estimates theta by least squares and drops
    the actions whose estimated evaluation is more than 3 eps below the best one.

    Args:
        actions (ActionSet): A valid action set.
        env (Environment): Source of evaluations.
        horizon (int): Number of rounds T.
        delta (float | None): Confidence parameter; 1/T when None.
        tol (float): Tolerance of the G-optimal solver.

    Returns:
        RunResult: Same trace format as Fair Phased Elimination; the bias fields stay empty.
    """
    delta = fpe.check_inputs(actions, horizon, delta)
    k, d = actions.k, actions.d
    ledger = fpe.RoundLedger(env, horizon)
    theta_true = env.theta.vector
    active = list(range(actions.k))
    theta_hat = None
    phases = []
    last_explored = {-1: 0, 0: 0, 1: 0}
    l = 1

    while ledger.remaining > 0:
        if l > fpe.phase_cap(horizon):
            raise PhaseLimitError(f"phase {l} exceeds the cap {fpe.phase_cap(horizon)} for T={horizon}")
        eps = 2.0 ** (2 - l)
        record = fpe.PhaseRecord(l, eps)
        phases.append(record)

        # One G-optimal exploration over every surviving action.
        n = 2 * (d + 1) / eps ** 2 * math.log(k * l * (l + 1) / delta)
        start = ledger.t
        try:
            outcome = fpe.g_exp_elim(actions, active, n, eps, env, budget=ledger.remaining, tol=tol)
        except BudgetExhausted as exc:
            if theta_hat is not None:
                ledger.fill(fpe.empirical_best(actions, active, theta_hat))
            else:
                ledger.play_truncated(exc.allocation)
            for index, count in ledger.plays_since(start):
                record.add_group_rounds(int(actions.groups[index]), count)
            record.survivors = list(active)
            break
        ledger.record(outcome.plays)
        for index, count in outcome.plays:
            record.add_group_rounds(int(actions.groups[index]), count)
        record.group_errors = {0: fpe.group_error(actions, active, outcome.theta_hat, theta_true)}
        theta_hat = outcome.theta_hat
        active = outcome.surviving
        record.survivors = list(active)
        for z in fpe.GROUPS:
            if any(actions.groups[index] == z for index, _ in outcome.plays):
                last_explored[z] = l
        logging.info(f"Finished unfair phase {l} at round {ledger.t}: eps={eps:.4g}, {len(active)} surviving actions.")
        l += 1

    return fpe.finish_result('unfair-pe', env, ledger, phases, None, last_explored)


def known_bias_eliminator(actions, env, horizon: int, delta: float | None = None, *, omega_true: float, tol: float = 1e-3) -> fpe.RunResult:
    """
    Fair Phased Elimination with the bias fixed to its true value and no bias exploration.
    """
    return fpe.run(actions, env, horizon, delta, tol=tol, known_omega=omega_true)


def static_oracle(actions, env, horizon: int, delta: float | None = None) -> fpe.RunResult:
    """
    Play argmax_x x^T gamma for the whole horizon. Zero regret by construction.
    """
    fpe.check_inputs(actions, horizon, delta)
    ledger = fpe.RoundLedger(env, horizon)
    ledger.fill(model.gaps(actions, env.theta).best_index)
    return fpe.finish_result('oracle', env, ledger, [])


def fair_phased_elimination(actions, env, horizon: int, delta: float | None = None, *, tol: float = 1e-3) -> fpe.RunResult:
    return fpe.run(actions, env, horizon, delta, tol=tol)


# Policies by config name, and whether each one is handed the true bias.
POLICIES = {
    'fpe': fair_phased_elimination,
    'unfair-pe': unfair_phased_elimination,
    'known-bias': known_bias_eliminator,
    'oracle': static_oracle,
}
USES_TRUE_BIAS = {'known-bias'}
USES_TRUE_REWARD = {'oracle'}


def run_policy(name: str, actions, env, horizon: int, delta: float | None = None, *, tol: float = 1e-3) -> fpe.RunResult:
    """
    Run a registered policy by name, handing it only what its name declares.
    """
    if name not in POLICIES:
        raise ValidationError(f"unknown policy {name!r}; expected one of {sorted(POLICIES)}")
    if name in USES_TRUE_BIAS:
        return known_bias_eliminator(actions, env, horizon, delta, omega_true=env.theta.omega, tol=tol)
    if name in USES_TRUE_REWARD:
        return static_oracle(actions, env, horizon, delta)
    return POLICIES[name](actions, env, horizon, delta, tol=tol)
