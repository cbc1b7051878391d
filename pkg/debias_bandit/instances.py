"""
Lower-bound problem instances.

Every family is built on the same kind of action set: unit covariates split between the two
groups plus one extra action -beta e_1 in group -1, with beta = 1 - 2 / (sqrt(kappa) + 1).
The extra action is what makes the bias estimable, and its position fixes the minimal bias
variance of the set to exactly kappa.

- worst_case_instance: two problems with identical evaluations on every action except the
  extra one, whose evaluations differ by only 2 rho / (sqrt(kappa) + 1), rho = (kappa / T)^{1/3}.
- gap_instance: floor(d/2) + 1 problems with prescribed minimum gap and between-group gap.
- small_d_gap_instance: the d in {2, 3} variants of the gap family.
- biased_evaluation_instance: one fixed problem whose evaluation argmax is suboptimal by a
  constant gap, on which ignoring the bias costs linear regret.
"""

# Import the necessary libraries.
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from debias_bandit import design, geometry, model
from debias_bandit.errors import SolverError, ValidationError
from debias_bandit.geometry import ActionSet
from debias_bandit.model import Parameter

# Relative tolerance on the declared kappa*.
KAPPA_TOL = 1e-6

# Absolute tolerance on declared gaps.
GAP_TOL = 1e-12

# Floor applied to the zero gap of the best action when evaluating kappa(Delta).
GAP_FLOOR = 1e-10


@dataclass
class InstanceMeta:
    family: str
    kappa: float
    d: int
    delta_min: float | None = None
    delta_neq: float | None = None
    alternative: int = 1
    horizon: int | None = None
    rho: float | None = None
    case: int | None = None
    omega_override: float | None = None


@dataclass
class ProblemInstance:
    """
    An action set, a parameter and the quantities the generator declares about them.
    """

    actions: ActionSet
    theta: Parameter
    meta: InstanceMeta

    def gap_summary(self) -> model.GapSummary:
        return model.gaps(self.actions, self.theta)

    def kappa_of_gaps(self, gap_floor: float = GAP_FLOOR) -> float:
        """
        kappa(Delta) of the instance's own gap vector, with the best action's zero gap floored.
        """
        gaps = np.maximum(self.gap_summary().gaps, gap_floor)
        _, kappa = design.delta_optimal_design(self.actions, gaps)
        return kappa

    def verify(self, check_gaps: bool = False):
        """
        Check the generator's declarations.

        Raises:
            SolverError: If a declared quantity does not hold.
        """
        violations = geometry.validate(self.actions)
        if violations:
            raise SolverError(f"{self.meta.family} instance is invalid: {violations}")
        kappa, _ = geometry.kappa_star(self.actions)
        if abs(kappa - self.meta.kappa) > KAPPA_TOL * self.meta.kappa:
            raise SolverError(f"{self.meta.family} instance has kappa* {kappa:.10g}, declared {self.meta.kappa}")
        if not model.is_admissible(self.actions, self.theta):
            raise SolverError(f"{self.meta.family} instance has an inadmissible gamma")
        if check_gaps:
            summary = self.gap_summary()
            if abs(summary.delta_min - self.meta.delta_min) > GAP_TOL or abs(summary.delta_neq - self.meta.delta_neq) > GAP_TOL:
                raise SolverError(f"{self.meta.family} instance has gaps ({summary.delta_min}, {summary.delta_neq}), declared ({self.meta.delta_min}, {self.meta.delta_neq})")
        if self.meta.delta_min is not None and not in_parameter_class(self.actions, self.theta, self.meta.delta_min, self.meta.delta_neq):
            raise SolverError(f"{self.meta.family} instance is outside its parameter class")

    def save(self, out_dir):
        """
        Write actions.json, theta.json and meta.json into a directory.
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.actions.save(out_dir / 'actions.json')
        self.theta.save(out_dir / 'theta.json')
        (out_dir / 'meta.json').write_text(json.dumps(asdict(self.meta), indent=2))

    @classmethod
    def load(cls, in_dir) -> 'ProblemInstance':
        in_dir = Path(in_dir)
        actions = ActionSet.load(in_dir / 'actions.json')
        theta = Parameter.load(in_dir / 'theta.json')
        meta_path = in_dir / 'meta.json'
        if meta_path.exists():
            meta = InstanceMeta(**json.loads(meta_path.read_text()))
        else:
            meta = InstanceMeta('file', float('nan'), actions.d)
        return cls(actions, theta, meta)


def in_parameter_class(actions, theta: Parameter, delta_min: float, delta_neq: float, kappa: float | None = None, gap_floor: float = GAP_FLOOR) -> bool:
    """
    Membership of theta in the class of problems with a unique best action, minimum gap at
    least delta_min and between-group gap at least delta_neq; when kappa is given, also
    kappa(Delta(gamma)) <= kappa.
    """
    if not model.is_admissible(actions, theta):
        return False
    summary = model.gaps(actions, theta)
    if not summary.unique or summary.delta_min < delta_min - GAP_TOL or summary.delta_neq < delta_neq - GAP_TOL:
        return False
    if kappa is not None:
        _, value = design.delta_optimal_design(actions, np.maximum(summary.gaps, gap_floor))
        return value <= kappa * (1 + KAPPA_TOL)
    return True


def _extra_coefficient(kappa: float) -> float:
    return 1.0 - 2.0 / (math.sqrt(kappa) + 1.0)


def bias_action_set(kappa: float, d: int, split: int) -> ActionSet:
    """
    Actions e_i in group +1 for i <= split, e_i in group -1 for split < i <= d, and -beta e_1 in group -1.
    """
    covariates = np.vstack([np.eye(d), 0.0 - _extra_coefficient(kappa) * np.eye(d)[0]])
    groups = np.array([1] * split + [-1] * (d - split) + [-1])
    return ActionSet(covariates, groups)


def worst_case_instance(kappa: float, d: int, T: int, omega: float | None = None) -> tuple[ProblemInstance, ProblemInstance]:
    """
    The two hard problems for horizon T on a set with minimal bias variance kappa.

    Args:
        kappa (float): Minimal bias variance of the action set, >= 1.
        d (int): Covariate dimension, >= 2.
        T (int): Horizon; must exceed 64 kappa so that rho < 1/4.
        omega (float | None): Replace both biases by this value, e.g. to build a problem on
            which ignoring the bias is costly.

    Returns:
        tuple: (problem 1 with best action x_1, problem 2 with best action x_2).
    """
    if not kappa >= 1:
        raise ValidationError(f"kappa must be >= 1, got {kappa}")
    if d < 2:
        raise ValidationError(f"d must be >= 2, got {d}")
    if not T > 64 * kappa:
        raise ValidationError(f"T must exceed 64 kappa = {64 * kappa}, got {T}")
    actions = bias_action_set(kappa, d, split=1)
    rho = (kappa / T) ** (1 / 3)

    # gamma^(1) favors e_1 and gamma^(2) favors e_2; the biases cancel the difference on x_1, ..., x_d.
    tail = np.zeros(d)
    tail[2:] = rho / 2
    gamma_1 = np.zeros(d)
    gamma_1[:2] = [(1 + rho) / 2, (1 - rho) / 2]
    gamma_2 = np.zeros(d)
    gamma_2[:2] = [(1 - rho) / 2, (1 + rho) / 2]
    problems = []
    for alternative, gamma, bias in ((1, gamma_1 - tail, -rho / 2), (2, gamma_2 + tail, rho / 2)):
        theta = Parameter(gamma, bias if omega is None else omega)
        meta = InstanceMeta('worst-case', float(kappa), d, alternative=alternative, horizon=int(T), rho=rho, omega_override=omega)
        instance = ProblemInstance(actions, theta, meta)
        instance.verify()
        problems.append(instance)
    logging.info(f"Built the worst-case pair for kappa={kappa}, d={d}, T={T} (rho={rho:.6g}).")
    return problems[0], problems[1]


def _check_gap_ranges(delta_min: float, delta_neq: float):
    if not 0 < delta_min <= delta_neq < 1 / 2:
        raise ValidationError(f"need 0 < delta_min <= delta_neq < 1/2, got ({delta_min}, {delta_neq})")
    if delta_neq >= 1 / 8:
        logging.warning(f"delta_neq={delta_neq} is outside (0, 1/8): the instance is built but its lower bound does not apply.")


def gap_instance(kappa: float, d: int, delta_min: float, delta_neq: float, alternative: int = 1, omega: float | None = None) -> ProblemInstance:
    """
    Problem `alternative` of the gap-dependent family.

    Alternatives 1..floor(d/2) have their best action in group +1, alternative floor(d/2)+1
    has it in group -1. Every alternative has minimum gap delta_min and between-group gap delta_neq.

    Args:
        kappa (float): Minimal bias variance of the action set, >= 2.
        d (int): Covariate dimension, >= 4.
        delta_min (float): Minimum gap.
        delta_neq (float): Minimum gap to the group opposite the best action.
        alternative (int): Problem index in 1..floor(d/2)+1.
        omega (float | None): Replace the bias by this value.

    Returns:
        ProblemInstance: The verified instance.
    """
    if not kappa >= 2:
        raise ValidationError(f"kappa must be >= 2, got {kappa}")
    if d < 4:
        raise ValidationError(f"d must be >= 4, got {d}")
    _check_gap_ranges(delta_min, delta_neq)
    half = d // 2
    if not 1 <= alternative <= half + 1:
        raise ValidationError(f"alternative must lie in 1..{half + 1}, got {alternative}")
    actions = bias_action_set(kappa, d, split=half)

    # Group +1 coordinates sit above group -1 coordinates, or below for the last alternative.
    high, low = (1 + delta_neq - delta_min) / 2, (1 - delta_neq - delta_min) / 2
    gamma = np.empty(d)
    if alternative <= half:
        gamma[:half], gamma[half:] = high, low
    else:
        gamma[:half], gamma[half:] = low, high
    gamma[0] += delta_min
    gamma[half] += delta_min
    if 2 <= alternative <= half:
        gamma[alternative - 1] += 2 * delta_min
        gamma[half + alternative - 1] += 2 * delta_min
    bias = -delta_neq / 2 if alternative <= half else delta_neq / 2

    meta = InstanceMeta('gap', float(kappa), d, delta_min, delta_neq, alternative, omega_override=omega)
    instance = ProblemInstance(actions, Parameter(gamma, bias if omega is None else omega), meta)
    instance.verify(check_gaps=True)
    return instance


def gap_kappa_closed_form(kappa: float, delta_extra: float) -> float:
    """
    kappa(Delta) of a gap-family problem: (1 + sqrt(kappa))^2 Delta_{d+1} / 4.
    """
    return (1 + math.sqrt(kappa)) ** 2 * delta_extra / 4


def small_d_gap_instance(d: int, case: int, kappa: float, delta_min: float, delta_neq: float, alternative: int = 1) -> ProblemInstance:
    """
    Gap-dependent hard problems in dimension 2 or 3.

    Case 1 puts every covariate e_i in group +1 with zero bias, so only the minimum gap matters.
    Case 2 reuses the worst-case action set with gaps delta_neq between e_1 and e_2, so both the
    minimum gap and the between-group gap equal delta_neq.

    Args:
        d (int): 2 or 3.
        case (int): 1 or 2.
        kappa (float): Minimal bias variance of the action set, >= 1.
        delta_min (float): Minimum gap (case 1).
        delta_neq (float): Between-group gap.
        alternative (int): Problem index, 1..d for case 1 and 1..2 for case 2.

    Returns:
        ProblemInstance: The verified instance.
    """
    if d not in (2, 3):
        raise ValidationError(f"d must be 2 or 3, got {d}")
    if case not in (1, 2):
        raise ValidationError(f"case must be 1 or 2, got {case}")
    if not kappa >= 1:
        raise ValidationError(f"kappa must be >= 1, got {kappa}")
    _check_gap_ranges(delta_min, delta_neq)
    suggested = 1 if d / delta_min >= kappa / delta_neq ** 2 else 2
    if suggested != case:
        logging.warning(f"Case {case} requested but d/delta_min = {d / delta_min:.4g} vs kappa/delta_neq^2 = {kappa / delta_neq ** 2:.4g} suggests case {suggested}.")

    if case == 1:
        if not 1 <= alternative <= d:
            raise ValidationError(f"alternative must lie in 1..{d}, got {alternative}")
        actions = bias_action_set(kappa, d, split=d)
        gamma = np.full(d, (1 - delta_min) / 2)
        gamma[0] += delta_min
        if alternative >= 2:
            gamma[alternative - 1] += 2 * delta_min
        theta = Parameter(gamma, 0.0)
        declared_min = delta_min
    else:
        if alternative not in (1, 2):
            raise ValidationError(f"alternative must be 1 or 2, got {alternative}")
        actions = bias_action_set(kappa, d, split=1)
        sign = 1 if alternative == 1 else -1
        gamma = np.array([(1 + sign * delta_neq) / 2, (1 - sign * delta_neq) / 2, -sign * delta_neq / 2][:d])
        theta = Parameter(gamma, -sign * delta_neq / 2)
        declared_min = delta_neq

    meta = InstanceMeta('small-d', float(kappa), d, declared_min, delta_neq, alternative, case=case)
    instance = ProblemInstance(actions, theta, meta)
    instance.verify()
    summary = instance.gap_summary()
    if abs(summary.delta_min - declared_min) > GAP_TOL:
        raise SolverError(f"small-d instance has minimum gap {summary.delta_min}, declared {declared_min}")
    return instance


def biased_evaluation_instance(kappa: float = 4, d: int = 2, reward: float = 0.95, penalty: float = -0.6, omega: float = -0.9) -> ProblemInstance:
    """
    A fixed problem on the worst-case action set whose evaluation argmax is suboptimal by a
    constant gap, whatever the horizon.

    e_1 (group +1) earns `reward` and every other unit covariate earns `penalty`; a negative
    bias lifts the group -1 actions above e_1 in evaluation.

    Args:
        kappa (float): Minimal bias variance of the action set, >= 1.
        d (int): Covariate dimension, >= 2.
        reward (float): Reward of the best action e_1.
        penalty (float): Reward of e_2, ..., e_d.
        omega (float): Bias.

    Returns:
        ProblemInstance: The verified instance.

    Raises:
        ValidationError: If gamma is inadmissible or the evaluation argmax is the best action.
    """
    if not kappa >= 1:
        raise ValidationError(f"kappa must be >= 1, got {kappa}")
    if d < 2:
        raise ValidationError(f"d must be >= 2, got {d}")
    actions = bias_action_set(kappa, d, split=1)
    gamma = np.full(d, float(penalty))
    gamma[0] = reward
    theta = Parameter(gamma, omega)
    if not model.is_admissible(actions, theta):
        raise ValidationError(f"reward={reward}, penalty={penalty} give an inadmissible gamma")
    evaluations = actions.lifted @ theta.vector
    if int(np.argmax(evaluations)) == model.gaps(actions, theta).best_index:
        raise ValidationError(f"omega={omega} leaves the best action on top of the evaluations")

    meta = InstanceMeta('biased-evaluation', float(kappa), d, omega_override=float(omega))
    instance = ProblemInstance(actions, theta, meta)
    instance.verify()
    logging.info(f"Built the biased-evaluation instance for kappa={kappa}, d={d}: evaluation argmax {int(np.argmax(evaluations))}.")
    return instance
