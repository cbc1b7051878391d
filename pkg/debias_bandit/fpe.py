"""
Fair Phased Elimination.

The algorithm runs in phases l = 1, 2, ... with accuracy eps_l = 2^{2-l}. In each phase it
(1) explores every group that is still in play with a G-optimal design over the group's
surviving actions and drops the actions more than 3 eps_l below the group's empirical best,
(2) while the best group is unknown, explores the bias with a Delta-optimal design built from
the current gap estimates, debiases the group estimates, and either identifies the best group
or refines the gap estimates. When eps_l falls below (kappa(Delta_hat) log T / T)^{1/3} the
bias is no longer worth estimating and the empirical best action is played until the end.

Observations are kept as sufficient statistics (V = sum a a^T and b = sum y a), so a
block of n pulls of the same action costs O(1) linear algebra.
"""

# Import the necessary libraries.
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from debias_bandit import design, geometry, linalg, model
from debias_bandit.errors import BudgetExhausted, PhaseLimitError, ValidationError
from debias_bandit.utils import pow2_checkpoints

GROUPS = (-1, 1)


@dataclass
class ObservationBatch:
    """
    Sufficient statistics of a batch of (a, y) observations.
    """

    dim: int
    covariance: np.ndarray = None
    response: np.ndarray = None
    count: int = 0

    def __post_init__(self):
        if self.covariance is None:
            self.covariance = np.zeros((self.dim, self.dim))
        if self.response is None:
            self.response = np.zeros(self.dim)

    def add(self, vector, y_values):
        """
        Record len(y_values) observations of the same lifted vector.
        """
        y_values = np.atleast_1d(np.asarray(y_values, dtype=float))
        vector = np.asarray(vector, dtype=float)
        self.covariance += len(y_values) * np.outer(vector, vector)
        self.response += y_values.sum() * vector
        self.count += len(y_values)

    @classmethod
    def from_pairs(cls, vectors, ys) -> 'ObservationBatch':
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        batch = cls(vectors.shape[1])
        for vector, y in zip(vectors, np.asarray(ys, dtype=float)):
            batch.add(vector, [y])
        return batch


def ols(batch: ObservationBatch) -> np.ndarray:
    """
    Ordinary least squares estimate V^+ sum y a.
    """
    if batch.count == 0:
        raise ValidationError("cannot estimate from an empty batch")
    return linalg.pseudo_inverse(batch.covariance) @ batch.response


@dataclass
class GExploration:
    theta_hat: np.ndarray
    surviving: list
    rounds_used: int
    plays: list
    best: int


@dataclass
class DeltaExploration:
    z_found: int
    gap_estimates: np.ndarray
    omega_hat: float
    rounds_used: int
    plays: list
    scores: dict


def _sample(env, allocation: design.Allocation, batch: ObservationBatch) -> list:
    """
    Pull every supported action its allocated number of times, in index order.
    """
    plays = []
    lifted = env.actions.lifted
    for index in allocation.support:
        count = int(allocation.counts[index])
        batch.add(lifted[index], env.evaluate_batch(int(index), count))
        plays.append((int(index), count))
    return plays


def empirical_best(actions, indices, theta_hat) -> int:
    """
    Action of `indices` maximizing a_x^T theta_hat; ties go to the lowest index.
    """
    indices = sorted(indices)
    scores = actions.lifted[indices] @ theta_hat
    return int(indices[int(np.argmax(scores))])


def g_exp_elim(actions, active, n: float, eps: float, env, *, budget: int | None = None, g_design: design.Design | None = None, tol: float = 1e-3) -> GExploration:
    """
    G-optimal exploration and elimination on one active set.

    Args:
        actions (ActionSet): The action set.
        active (iterable[int]): Indices of the active actions.
        n (float): Budget scale; action x is pulled ceil(n * pi(x)) times.
        eps (float): Phase accuracy; actions more than 3 eps below the empirical best are dropped.
        env (Environment): Source of evaluations.
        budget (int | None): Rounds still available; None means unlimited.
        g_design (Design | None): Precomputed G-optimal design on `active`.
        tol (float): Tolerance of the G-optimal solver.

    Returns:
        GExploration: Estimate, sorted survivors, rounds used and the pulls made.

    Raises:
        BudgetExhausted: If the allocation does not fit in the budget; nothing is pulled.
    """
    active = sorted(int(i) for i in active)
    if not active:
        raise ValidationError("the active set is empty")
    if g_design is None:
        g_design, _ = design.g_optimal_design(actions, active, tol=tol)
    allocation = design.round_allocation(g_design, n, actions.lifted)
    if budget is not None and allocation.total > budget:
        raise BudgetExhausted(allocation, budget)

    # Explore and estimate.
    batch = ObservationBatch(actions.d + 1)
    plays = _sample(env, allocation, batch)
    theta_hat = ols(batch)

    # Keep the actions within 3 eps of the empirical best.
    scores = actions.lifted[active] @ theta_hat
    best = active[int(np.argmax(scores))]
    surviving = [x for x, score in zip(active, scores) if scores.max() - score <= 3 * eps]
    if best not in surviving:
        surviving = sorted(surviving + [best])
    return GExploration(theta_hat, surviving, allocation.total, plays, best)


def debiased_scores(actions, active_pair: dict, theta_hats: dict, omega_hat: float) -> dict:
    """
    m_x = a_x^T theta_hat^(z_x) - z_x omega_hat for every active action.
    """
    lifted = actions.lifted
    return {int(x): float(lifted[x] @ theta_hats[z] - z * omega_hat) for z in GROUPS for x in active_pair.get(z, [])}


def separated_group(scores: dict, active_pair: dict, eps: float) -> int:
    """
    Group whose best debiased score exceeds the other group's by at least 4 eps, or 0.
    """
    for z in GROUPS:
        own = [scores[x] for x in active_pair.get(z, [])]
        other = [scores[x] for x in active_pair.get(-z, [])]
        if own and other and max(own) - 2 * eps >= max(other) + 2 * eps:
            return z
    return 0


def delta_exp_elim(actions, active_pair: dict, theta_hats: dict, gap_est, n: float, eps: float, env, *, budget: int | None = None, delta_design: design.Design | None = None) -> DeltaExploration:
    """
    Delta-optimal exploration of the bias and group elimination.

    The Delta-optimal measure is computed over the full action set, so actions already
    eliminated from the active sets may be pulled.

    Args:
        actions (ActionSet): The action set.
        active_pair (dict): Surviving indices per group, keyed by -1 and +1.
        theta_hats (dict): Latest group estimates, keyed by -1 and +1.
        gap_est (array-like): Current gap estimates, one positive entry per action.
        n (float): Budget scale; action x is pulled ceil(n * mu(x)) times.
        eps (float): Phase accuracy.
        env (Environment): Source of evaluations.
        budget (int | None): Rounds still available; None means unlimited.
        delta_design (Design | None): Precomputed Delta-optimal measure for `gap_est`.

    Returns:
        DeltaExploration: Identified group (0 if none), updated gap estimates, bias estimate,
        rounds used, pulls made and the debiased scores.

    Raises:
        BudgetExhausted: If the allocation does not fit in the budget; nothing is pulled.
    """
    gap_est = np.asarray(gap_est, dtype=float)
    for z in GROUPS:
        if not active_pair.get(z):
            raise ValidationError(f"the active set of group {z:+d} is empty")
    if delta_design is None:
        delta_design, _ = design.delta_optimal_design(actions, gap_est)
    allocation = design.round_allocation(delta_design, n, actions.lifted)
    if budget is not None and allocation.total > budget:
        raise BudgetExhausted(allocation, budget)

    # Explore and estimate the bias.
    batch = ObservationBatch(actions.d + 1)
    plays = _sample(env, allocation, batch)
    omega_hat = float(ols(batch)[-1])

    # Debias the group estimates and refresh the gap estimates of the survivors.
    scores = debiased_scores(actions, active_pair, theta_hats, omega_hat)
    top = max(scores.values())
    new_gaps = gap_est.copy()
    for x, score in scores.items():
        new_gaps[x] = min(2.0, top - score + 4 * eps)

    z_found = separated_group(scores, active_pair, eps)
    return DeltaExploration(z_found, new_gaps, omega_hat, allocation.total, plays, scores)


@dataclass
class PhaseState:
    """
    Mutable state of Fair Phased Elimination at the start of phase l.
    """

    l: int
    active: dict
    z_hat: int
    gap_estimates: np.ndarray
    t: int = 0
    theta_hats: dict = field(default_factory=dict)
    omega_hat: float | None = None
    explored: dict = field(default_factory=lambda: {-1: False, 0: False, 1: False})
    recovery_entered_at: int | None = None

    @classmethod
    def initial(cls, actions) -> 'PhaseState':
        return cls(l=1, active={z: actions.group(z) for z in GROUPS}, z_hat=0, gap_estimates=np.full(actions.k, 2.0))

    @property
    def eps(self) -> float:
        return 2.0 ** (2 - self.l)

    def union(self) -> list:
        return sorted(self.active[-1] + self.active[1])


@dataclass
class PhaseRecord:
    """
    Diagnostics of one phase. The error fields compare estimates with the true parameter and
    are never read by the algorithm.
    """

    l: int
    eps: float
    rounds_g_pos: int = 0
    rounds_g_neg: int = 0
    rounds_delta: int = 0
    kappa_hat: float | None = None
    z_hat: int = 0
    explored: dict = field(default_factory=lambda: {-1: False, 0: False, 1: False})
    survivors: list = field(default_factory=list)
    group_errors: dict = field(default_factory=dict)
    bias_error: float | None = None

    def add_group_rounds(self, z: int, rounds: int):
        if z == 1:
            self.rounds_g_pos += rounds
        else:
            self.rounds_g_neg += rounds

    def violated(self) -> bool:
        """
        Whether an estimate completed in this phase is off by at least eps.
        """
        errors = list(self.group_errors.values())
        if self.bias_error is not None:
            errors.append(self.bias_error)
        return any(error >= self.eps for error in errors)

    def to_dict(self) -> dict:
        return {'l': self.l, 'eps': self.eps, 'rounds_g_pos': self.rounds_g_pos, 'rounds_g_neg': self.rounds_g_neg, 'rounds_delta': self.rounds_delta, 'kappa_hat': self.kappa_hat, 'z_hat': self.z_hat}


class RoundLedger:
    """
    Plays actions against an environment up to a horizon and keeps the play order.
    """

    def __init__(self, env, horizon: int):
        self.env = env
        self.horizon = int(horizon)
        self.t = 0
        self.segments = []

    @property
    def remaining(self) -> int:
        return self.horizon - self.t

    def record(self, plays):
        """
        Account for pulls already made against the environment.
        """
        for index, count in plays:
            self._append(index, count)

    def play(self, index: int, count: int) -> np.ndarray:
        """
        Pull an action `count` times, truncated to the remaining rounds.
        """
        count = min(int(count), self.remaining)
        if count <= 0:
            return np.empty(0)
        y_values = self.env.evaluate_batch(index, count)
        self._append(index, count)
        return y_values

    def fill(self, index: int) -> int:
        """
        Play one action for every remaining round.
        """
        count = self.remaining
        self.play(index, count)
        return count

    def play_truncated(self, allocation: design.Allocation) -> dict:
        """
        Follow an allocation in index order until the horizon is reached.
        """
        played = {}
        for index in allocation.support:
            count = min(int(allocation.counts[index]), self.remaining)
            self.play(int(index), count)
            played[int(index)] = count
        return played

    def plays_since(self, start: int) -> list:
        """
        (action, count) pairs of the rounds played after the first `start` rounds.
        """
        plays, position = [], 0
        for index, count in self.segments:
            end = position + count
            if end > start:
                plays.append((index, end - max(position, start)))
            position = end
        return plays

    def _append(self, index: int, count: int):
        if self.segments and self.segments[-1][0] == index:
            self.segments[-1] = (index, self.segments[-1][1] + count)
        else:
            self.segments.append((int(index), int(count)))
        self.t += count


def regret_at_checkpoints(segments, gap_vector, checkpoints) -> np.ndarray:
    """
    Cumulative regret at each checkpoint of a play sequence given as (action, count) segments.
    """
    checkpoints = np.asarray(checkpoints, dtype=np.int64)
    if not segments:
        return np.zeros(len(checkpoints))
    actions = np.array([segment[0] for segment in segments])
    counts = np.array([segment[1] for segment in segments], dtype=np.int64)
    ends = np.cumsum(counts)
    regret_at_ends = np.cumsum(counts * gap_vector[actions])

    # For each checkpoint, complete segments plus the partial one it falls into.
    position = np.searchsorted(ends, checkpoints, side='left')
    previous_end = np.where(position > 0, ends[np.maximum(position - 1, 0)], 0)
    previous_regret = np.where(position > 0, regret_at_ends[np.maximum(position - 1, 0)], 0.0)
    return previous_regret + (checkpoints - previous_end) * gap_vector[actions[position]]


@dataclass
class RunResult:
    """
    Regret trace of one seeded run plus per-phase diagnostics.
    """

    policy: str
    horizon: int
    checkpoints: np.ndarray
    cum_regret: np.ndarray
    phases: list
    segments: list
    seed: int
    recovery_entered_at: int | None = None
    last_explored: dict = field(default_factory=lambda: {-1: 0, 0: 0, 1: 0})

    @property
    def final_action(self) -> int:
        return self.segments[-1][0]

    @property
    def total_rounds(self) -> int:
        return int(sum(count for _, count in self.segments))

    def played_counts(self, k: int) -> np.ndarray:
        counts = np.zeros(k, dtype=np.int64)
        for index, count in self.segments:
            counts[index] += count
        return counts

    def choices(self) -> np.ndarray:
        """
        The full sequence of chosen indices, one per round.
        """
        return np.repeat([index for index, _ in self.segments], [count for _, count in self.segments])

    def good_event_violated(self) -> bool:
        return any(phase.violated() for phase in self.phases)

    def to_dict(self) -> dict:
        return {
            'policy': self.policy,
            'checkpoints': [int(c) for c in self.checkpoints],
            'cum_regret': [float(r) for r in self.cum_regret],
            'phases': [phase.to_dict() for phase in self.phases],
            'recovery_entered_at': self.recovery_entered_at,
            'last_explored': {str(z): l for z, l in self.last_explored.items()},
            'seed': self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def phase_cap(horizon: int) -> int:
    """
    Largest phase index the elimination loops may reach.
    """
    return math.ceil(3 * math.log2(horizon)) + 4


def check_inputs(actions, horizon: int, delta: float | None) -> float:
    """
    Validate the common run arguments and resolve the default confidence 1/T.
    """
    geometry.require_valid(actions)
    if not isinstance(horizon, (int, np.integer)) or horizon < 1:
        raise ValidationError(f"horizon must be a positive integer, got {horizon!r}")
    delta = 1.0 / horizon if delta is None else float(delta)
    if not 0 < delta <= 1:
        raise ValidationError(f"delta must lie in (0, 1], got {delta}")
    return delta


def group_error(actions, indices, theta_hat, theta_true) -> float:
    return float(np.max(np.abs(actions.lifted[list(indices)] @ (theta_hat - theta_true))))


def _union_best(actions, state: PhaseState) -> int:
    """
    Empirical best of the surviving actions, debiased by the latest bias estimate.

    Only the identified group counts once there is one; before any bias estimate omega_hat is 0.
    """
    omega_hat = 0.0 if state.omega_hat is None else state.omega_hat
    groups = (state.z_hat,) if state.z_hat else GROUPS
    pair = {z: state.active[z] for z in groups if z in state.theta_hats}
    scores = debiased_scores(actions, pair, state.theta_hats, omega_hat)
    return max(sorted(scores), key=lambda x: scores[x])


def finish_result(policy, env, ledger: RoundLedger, phases, recovery_entered_at=None, last_explored=None) -> RunResult:
    """
    Turn a completed play sequence into a RunResult with regret at the power-of-two checkpoints.
    """
    checkpoints = pow2_checkpoints(ledger.horizon)
    gap_vector = model.gaps(env.actions, env.theta).gaps
    cum_regret = regret_at_checkpoints(ledger.segments, gap_vector, checkpoints)
    return RunResult(policy, ledger.horizon, checkpoints, cum_regret, phases, ledger.segments, env.seed, recovery_entered_at, last_explored or {-1: 0, 0: 0, 1: 0})


def run(actions, env, horizon: int, delta: float | None = None, *, tol: float = 1e-3, known_omega: float | None = None) -> RunResult:
    """
    Fair Phased Elimination for T rounds.

    Args:
        actions (ActionSet): A valid action set.
        env (Environment): Source of evaluations for the same action set.
        horizon (int): Number of rounds T.
        delta (float | None): Confidence parameter; 1/T when None.
        tol (float): Tolerance of the G-optimal solver.
        known_omega (float | None): If given, the bias is taken as known: no bias exploration,
            and groups are compared with this exact value.

    Returns:
        RunResult: Regret at the checkpoints and one PhaseRecord per phase.

    Raises:
        ValidationError: On an invalid action set, horizon or confidence.
        PhaseLimitError: If the phase loop runs past its cap.
    """
    delta = check_inputs(actions, horizon, delta)
    k, d = actions.k, actions.d
    state = PhaseState.initial(actions)
    ledger = RoundLedger(env, horizon)
    theta_true = env.theta.vector
    g_designs = {}
    phases = []
    last_explored = {-1: 0, 0: 0, 1: 0}
    if known_omega is not None:
        state.omega_hat = float(known_omega)

    while ledger.remaining > 0:
        if state.l > phase_cap(horizon):
            raise PhaseLimitError(f"phase {state.l} exceeds the cap {phase_cap(horizon)} for T={horizon}")
        eps = state.eps
        record = PhaseRecord(state.l, eps)
        phases.append(record)
        next_active = dict(state.active)
        finished = False

        # G-optimal exploration and elimination in every group still in play.
        n = 2 * (d + 1) / eps ** 2 * math.log(k * state.l * (state.l + 1) / delta)
        for z in GROUPS:
            if z == -state.z_hat:
                continue
            key = tuple(state.active[z])
            if key not in g_designs:
                g_designs[key], _ = design.g_optimal_design(actions, key, tol=tol)
            try:
                outcome = g_exp_elim(actions, key, n, eps, env, budget=ledger.remaining, g_design=g_designs[key])
            except BudgetExhausted as exc:
                if z in state.theta_hats:
                    # Empirical best of this group under its last completed estimate.
                    best = empirical_best(actions, state.active[z], state.theta_hats[z])
                    record.add_group_rounds(z, ledger.fill(best))
                else:
                    record.add_group_rounds(z, sum(ledger.play_truncated(exc.allocation).values()))
                finished = True
                break
            ledger.record(outcome.plays)
            record.add_group_rounds(z, outcome.rounds_used)
            record.explored[z] = True
            record.group_errors[z] = group_error(actions, key, outcome.theta_hat, theta_true)
            last_explored[z] = state.l
            state.theta_hats[z] = outcome.theta_hat
            next_active[z] = outcome.surviving
        if finished:
            break
        state.active = next_active

        if state.z_hat == 0 and known_omega is not None:
            # Exact debiasing: compare the groups without exploring the bias.
            scores = debiased_scores(actions, state.active, state.theta_hats, known_omega)
            state.z_hat = separated_group(scores, state.active, eps)
        elif state.z_hat == 0:
            mu_hat, kappa_hat = design.delta_optimal_design(actions, state.gap_estimates)
            record.kappa_hat = kappa_hat

            # Recovery: the bias is no longer worth estimating at this accuracy.
            if eps <= (kappa_hat * math.log(horizon) / horizon) ** (1 / 3):
                state.recovery_entered_at = ledger.t
                best = _union_best(actions, state)
                logging.info(f"Entered recovery at round {ledger.t} in phase {state.l}, playing action {best}.")
                ledger.fill(best)
                break

            # Delta-optimal exploration and group elimination.
            n0 = 2 / eps ** 2 * math.log(state.l * (state.l + 1) / delta)
            try:
                outcome = delta_exp_elim(actions, state.active, state.theta_hats, state.gap_estimates, n0, eps, env, budget=ledger.remaining, delta_design=mu_hat)
            except BudgetExhausted:
                record.rounds_delta += ledger.fill(_union_best(actions, state))
                break
            ledger.record(outcome.plays)
            record.rounds_delta = outcome.rounds_used
            record.explored[0] = True
            record.bias_error = abs(outcome.omega_hat - theta_true[-1])
            last_explored[0] = state.l
            state.omega_hat = outcome.omega_hat
            state.gap_estimates = outcome.gap_estimates
            state.z_hat = outcome.z_found

        record.z_hat = state.z_hat
        record.survivors = state.union() if state.z_hat == 0 else list(state.active[state.z_hat])
        logging.info(f"Finished phase {state.l} at round {ledger.t}: eps={eps:.4g}, z_hat={state.z_hat:+d}, {len(record.survivors)} surviving actions.")
        state.l += 1
        state.t = ledger.t

    # The last record describes the phase in which the budget ran out.
    if phases and not phases[-1].survivors:
        phases[-1].z_hat = state.z_hat
        phases[-1].survivors = state.union() if state.z_hat == 0 else list(state.active[state.z_hat])
    state.t = ledger.t
    policy = 'fpe' if known_omega is None else 'known-bias'
    return finish_result(policy, env, ledger, phases, state.recovery_entered_at, last_explored)
