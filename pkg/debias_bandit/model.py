"""
The biased linear bandit environment.

Pulling action x returns the unfair evaluation y = x^T gamma + z_x omega + sigma xi with xi
standard normal, while the regret is measured with the true reward x^T gamma.
"""

# Import the necessary libraries.
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from debias_bandit.errors import ValidationError

# Identifier of the bit generator, written into the output metadata.
RNG_ALGORITHM = 'numpy.Philox'

# Rewards within this distance of the maximum count as tied for best.
TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Parameter:
    """
    theta = (gamma, omega): reward vector and bias scalar.
    """

    gamma: np.ndarray
    omega: float

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float).reshape(-1)
        if not np.all(np.isfinite(gamma)) or not np.isfinite(self.omega):
            raise ValidationError("parameter contains NaN or Inf entries")
        object.__setattr__(self, 'gamma', gamma)
        object.__setattr__(self, 'omega', float(self.omega))

    @property
    def vector(self) -> np.ndarray:
        return np.append(self.gamma, self.omega)

    def to_dict(self) -> dict:
        return {'gamma': self.gamma.tolist(), 'omega': self.omega}

    @classmethod
    def from_dict(cls, data: dict) -> 'Parameter':
        if not isinstance(data, dict) or set(data) != {'gamma', 'omega'}:
            raise ValidationError("a parameter document has exactly the fields 'gamma' and 'omega'")
        return cls(np.array(data['gamma'], dtype=float), data['omega'])

    @classmethod
    def load(cls, path) -> 'Parameter':
        with open(path) as handle:
            return cls.from_dict(json.load(handle))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def _check_dimensions(actions, theta: Parameter):
    if theta.gamma.shape != (actions.d,):
        raise ValidationError(f"gamma has length {theta.gamma.size}, the action set has d={actions.d}")


class Environment:
    """
    Seeded source of unfair evaluations for one action set and one parameter.

    Each environment owns its own Philox stream, so two environments built with the same
    seed produce identical evaluation streams.
    """

    def __init__(self, actions, theta: Parameter, noise_std: float = 1.0, seed: int = 0):
        _check_dimensions(actions, theta)
        if not noise_std >= 0:
            raise ValidationError(f"noise_std must be nonnegative, got {noise_std}")
        self.actions = actions
        self.theta = theta
        self.noise_std = float(noise_std)
        self.seed = int(seed)
        self.rng = np.random.Generator(np.random.Philox(self.seed))
        self.means = actions.lifted @ theta.vector

    def _check_index(self, index: int):
        if not 0 <= index < self.actions.k:
            raise ValidationError(f"action index {index} out of range for {self.actions.k} actions")

    def evaluate(self, index: int) -> float:
        """
        One evaluation of action `index`.
        """
        self._check_index(index)
        return float(self.means[index] + self.noise_std * self.rng.standard_normal())

    def evaluate_batch(self, index: int, count: int) -> np.ndarray:
        """
        `count` consecutive evaluations of the same action.
        """
        self._check_index(index)
        return self.means[index] + self.noise_std * self.rng.standard_normal(int(count))


def evaluate(env: Environment, index: int) -> float:
    return env.evaluate(index)


class GapSummary(NamedTuple):
    gaps: np.ndarray
    delta_min: float
    delta_neq: float
    best_index: int
    unique: bool


def gaps(actions, theta: Parameter) -> GapSummary:
    """
    Reward gaps of every action with respect to the best one.

    Args:
        actions (ActionSet): The action set.
        theta (Parameter): The parameter; only gamma enters.

    Returns:
        GapSummary: Gap vector (zero at the best index), the smallest gap of a non-best action,
        the smallest gap in the group opposite to the best action, the best index (lowest on
        ties) and whether the best action is unique.
    """
    _check_dimensions(actions, theta)
    rewards = actions.covariates @ theta.gamma
    best = int(np.argmax(rewards))
    gap_vector = rewards[best] - rewards
    gap_vector[best] = 0.0
    unique = int(np.sum(gap_vector <= TIE_TOL)) == 1

    # Smallest gap among the other actions, and among the opposite group.
    others = np.delete(gap_vector, best)
    delta_min = float(others.min()) if others.size else float('inf')
    opposite = gap_vector[actions.groups == -actions.groups[best]]
    delta_neq = float(opposite.min()) if opposite.size else float('inf')
    return GapSummary(gap_vector, delta_min, delta_neq, best, unique)


def cumulative_regret(actions, theta: Parameter, chosen) -> float:
    """
    Sum of the true gaps of the chosen actions.
    """
    chosen = np.asarray(chosen, dtype=int).reshape(-1)
    if chosen.size and (chosen.min() < 0 or chosen.max() >= actions.k):
        raise ValidationError(f"chosen sequence has indices outside [0, {actions.k})")
    return float(np.sum(gaps(actions, theta).gaps[chosen]))


def is_admissible(actions, theta: Parameter, tol: float = 1e-12) -> bool:
    """
    Whether gamma lies in C(X), i.e. |x^T gamma| <= 1 for every covariate.
    """
    _check_dimensions(actions, theta)
    return bool(np.max(np.abs(actions.covariates @ theta.gamma)) <= 1 + tol)
