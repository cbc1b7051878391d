"""
Action sets and the geometry of bias estimation.

An action is a covariate x in R^d together with a group label z in {-1, +1}. The learner
observes x^T gamma + z omega, so everything that matters for estimating the bias goes
through the lifted vectors a_x = (x, z_x) in R^{d+1}. This module holds the action-set
type and the quantities that measure how hard the bias is to estimate: the minimal bias
variance kappa*, its margin characterization, the separating hyperplane, and the
alignment constant.
"""

# Import the necessary libraries.
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from debias_bandit import design, linalg
from debias_bandit.errors import SolverError, ValidationError

# Tolerance on kappa* above which the groups count as separable.
SEPARABLE_TOL = 1e-9

# Verification slack for the margin ratio.
MARGIN_TOL = 1e-6

# Options passed to HiGHS for the Chebyshev program.
HIGHS_OPTIONS = {'primal_feasibility_tolerance': 1e-10, 'dual_feasibility_tolerance': 1e-10}


@dataclass(frozen=True, eq=False)
class ActionSet:
    """
    Finite set of actions, stored as a (k, d) covariate matrix and a length-k label vector.
    """

    covariates: np.ndarray
    groups: np.ndarray

    def __post_init__(self):
        covariates = np.atleast_2d(np.array(self.covariates, dtype=float))
        groups = np.asarray(self.groups).reshape(-1)
        if covariates.shape[0] != groups.shape[0]:
            raise ValidationError(f"{covariates.shape[0]} covariates but {groups.shape[0]} group labels")
        if covariates.shape[0] == 0 or covariates.shape[1] == 0:
            raise ValidationError("an action set needs at least one action of dimension >= 1")
        if not np.all(np.isfinite(covariates)):
            raise ValidationError("covariates contain NaN or Inf entries")
        if not np.all(np.isin(groups, (-1, 1))):
            raise ValidationError(f"group labels must be -1 or +1, got {sorted(set(groups.tolist()))}")
        covariates.setflags(write=False)
        groups = groups.astype(np.int64)
        groups.setflags(write=False)
        object.__setattr__(self, 'covariates', covariates)
        object.__setattr__(self, 'groups', groups)

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    @property
    def k(self) -> int:
        return self.covariates.shape[0]

    @property
    def lifted(self) -> np.ndarray:
        """
        The (k, d+1) matrix whose rows are a_x = (x, z_x).
        """
        return np.column_stack([self.covariates, self.groups.astype(float)])

    def group(self, z: int) -> list[int]:
        """
        Indices of the actions with label z, in increasing order.
        """
        return [int(i) for i in np.flatnonzero(self.groups == z)]

    def bias_direction(self) -> np.ndarray:
        """
        The target vector e_{d+1} that picks the bias out of theta.
        """
        e = np.zeros(self.d + 1)
        e[-1] = 1.0
        return e

    def permuted(self, order) -> 'ActionSet':
        order = np.asarray(order, dtype=int)
        return ActionSet(self.covariates[order], self.groups[order])

    def to_dict(self) -> dict:
        return {'d': self.d, 'actions': [{'x': x.tolist(), 'z': int(z)} for x, z in zip(self.covariates, self.groups)]}

    @classmethod
    def from_dict(cls, data: dict) -> 'ActionSet':
        """
        Build an action set from its JSON document {"d": int, "actions": [{"x": [...], "z": +-1}, ...]}.

        Raises:
            ValidationError: On unknown or missing fields, or inconsistent dimensions.
        """
        if not isinstance(data, dict) or set(data) != {'d', 'actions'}:
            raise ValidationError("an action-set document has exactly the fields 'd' and 'actions'")
        d = data['d']
        if not isinstance(d, int) or d < 1:
            raise ValidationError(f"'d' must be a positive integer, got {d!r}")
        covariates, groups = [], []
        for position, action in enumerate(data['actions']):
            if not isinstance(action, dict) or set(action) != {'x', 'z'}:
                raise ValidationError(f"action {position} must have exactly the fields 'x' and 'z'")
            if len(action['x']) != d:
                raise ValidationError(f"action {position} has {len(action['x'])} coordinates, expected {d}")
            covariates.append(action['x'])
            groups.append(action['z'])
        if not covariates:
            raise ValidationError("the action list is empty")
        return cls(np.array(covariates, dtype=float), np.array(groups))

    @classmethod
    def load(cls, path) -> 'ActionSet':
        with open(path) as handle:
            return cls.from_dict(json.load(handle))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def validate(actions: ActionSet) -> list[str]:
    """
    Check the identifiability assumptions on an action set.

    Args:
        actions (ActionSet): The action set to check.

    Returns:
        list[str]: One description per violated assumption; empty iff the set is valid.
    """
    violations = []

    # Covariates must be pairwise distinct.
    for i in range(actions.k):
        for j in range(i + 1, actions.k):
            if np.array_equal(actions.covariates[i], actions.covariates[j]):
                violations.append(f"duplicate covariate at indices {i},{j}")

    # No group may be empty.
    for z in (1, -1):
        if not actions.group(z):
            violations.append(f"empty group: no action with z={z:+d}")

    # The lifted vectors must span R^{d+1}.
    lifted = actions.lifted
    rank = linalg.numerical_rank(lifted.T @ lifted)
    if rank < actions.d + 1:
        violations.append(f"span deficiency: rank {rank} < {actions.d + 1}")

    return violations


def require_valid(actions: ActionSet):
    """
    Raise a ValidationError listing every violated assumption.
    """
    violations = validate(actions)
    if violations:
        raise ValidationError("invalid action set: " + "; ".join(violations))


def kappa_star(actions: ActionSet) -> tuple[float, 'design.Design']:
    """
    Minimal variance of the bias estimator, i.e. the value of the e_{d+1}-optimal design problem.

    Args:
        actions (ActionSet): A valid action set.

    Returns:
        tuple: (kappa*, an optimal probability design supported on at most d+1 actions).
    """
    require_valid(actions)
    dsn, variance = design.c_optimal_design(actions, actions.bias_direction())
    return variance, dsn


def _chebyshev_program(actions: ActionSet) -> tuple[np.ndarray, float]:
    """
    Solve min_{u, t} t subject to |z_x x^T u + 1| <= t for every action.

    Returns:
        tuple: (maximizing normal u, optimal radius t).
    """
    signed = actions.covariates * actions.groups[:, None]
    k, d = signed.shape

    # Variables are (u_1, ..., u_d, t); two inequality rows per action.
    A_ub = np.vstack([np.column_stack([signed, -np.ones(k)]), np.column_stack([-signed, -np.ones(k)])])
    b_ub = np.concatenate([-np.ones(k), np.ones(k)])
    cost = np.zeros(d + 1)
    cost[-1] = 1.0
    bounds = [(None, None)] * d + [(0, None)]
    result = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method='highs-ds', options=HIGHS_OPTIONS)
    if result.status != 0:
        raise SolverError(f"Chebyshev program failed: {result.message}")
    u, t = result.x[:d], float(result.x[d])
    if t <= 0:
        raise SolverError("Chebyshev radius is zero: the bias is not identifiable from this action set")
    logging.debug(f"Chebyshev program solved with radius {t:.6g}.")
    return u, t


def kappa_star_margin_form(actions: ActionSet) -> float:
    """
    kappa* through its margin characterization max_u 1 / max_x (x^T u + z_x)^2.

    Only finite entries are required; the set does not need to span R^{d+1}.
    """
    _, t = _chebyshev_program(actions)
    return 1.0 / t ** 2


def separating_margin(actions: ActionSet) -> tuple[np.ndarray, float] | None:
    """
    Hyperplane through the origin separating the two groups, when one exists.

    Args:
        actions (ActionSet): A valid action set.

    Returns:
        tuple | None: (normal u, margin ratio (sqrt(kappa*) - 1) / (sqrt(kappa*) + 1)) if kappa* > 1,
        otherwise None. The normal satisfies sign(x^T u) = -z_x for every action.

    Raises:
        SolverError: If the Chebyshev solution fails the separation check.
    """
    kappa, _ = kappa_star(actions)
    if kappa <= 1 + SEPARABLE_TOL:
        return None

    # The Chebyshev center is the maximizing normal.
    u, _ = _chebyshev_program(actions)
    root = np.sqrt(kappa)
    margin_ratio = (root - 1) / (root + 1)

    # Check the separation and the margin it achieves.
    projections = actions.covariates @ u
    if not np.all(np.sign(projections) == -actions.groups):
        raise SolverError("Chebyshev normal does not separate the groups")
    observed = np.min(np.abs(projections)) / np.max(np.abs(projections))
    if observed < margin_ratio - MARGIN_TOL:
        raise SolverError(f"separating margin {observed:.6g} below the guaranteed {margin_ratio:.6g}")
    return u, float(margin_ratio)


def _alignment_ratios(actions: ActionSet, directions: np.ndarray) -> np.ndarray:
    """
    Alignment objective max_{x,x'} ((x - x')^T u)^2 / max_x (z_x x^T u + 1)^2 for each row u.
    """
    projections = directions @ actions.covariates.T
    spread = (projections.max(axis=1) - projections.min(axis=1)) ** 2
    denominator = np.max((projections * actions.groups + 1) ** 2, axis=1)
    ratios = np.full(len(directions), -np.inf)
    finite = denominator > 0
    ratios[finite] = spread[finite] / denominator[finite]
    return ratios


def _limit_ratios(actions: ActionSet, directions: np.ndarray) -> np.ndarray:
    """
    Limit of the alignment objective along lambda * u as lambda grows.
    """
    projections = directions @ actions.covariates.T
    spread = (projections.max(axis=1) - projections.min(axis=1)) ** 2
    peak = np.max(projections ** 2, axis=1)
    ratios = np.full(len(directions), -np.inf)
    finite = peak > 0
    ratios[finite] = spread[finite] / peak[finite]
    return ratios


def alignment_constant_estimate(actions: ActionSet, directions: int = 1000, seed: int = 0) -> float:
    """
    Lower estimate of the worst-case alignment constant by direction search.

    The objective is not concave, so the value returned is the best ratio found over random
    directions (uniform on the sphere, at several radii), the Chebyshev normal and its
    multiples, and the large-scale limit along directions where the covariates change sign.

    Args:
        actions (ActionSet): Action set with finite entries.
        directions (int): Number of random directions per radius.
        seed (int): Seed of the direction sampler.

    Returns:
        float: The estimate.
    """
    if directions < 1:
        raise ValidationError(f"directions must be >= 1, got {directions}")
    rng = np.random.Generator(np.random.Philox(seed))
    best = -np.inf

    # Random directions on the sphere, scaled over a geometric grid of radii.
    sphere = rng.standard_normal((directions, actions.d))
    sphere /= np.linalg.norm(sphere, axis=1, keepdims=True)
    for radius in np.geomspace(1e-2, 1e2, 9):
        best = max(best, float(np.max(_alignment_ratios(actions, radius * sphere))))
    best = max(best, float(np.max(_limit_ratios(actions, sphere))))

    # The Chebyshev normal and its multiples.
    try:
        u, _ = _chebyshev_program(actions)
        if np.any(u != 0):
            scaled = np.outer(np.geomspace(1e-1, 1e3, 9), u)
            best = max(best, float(np.max(_alignment_ratios(actions, scaled))))
            best = max(best, float(np.max(_limit_ratios(actions, u[None, :]))))
    except SolverError:
        logging.debug("Chebyshev program unavailable for the alignment search.")

    # Directions orthogonal to one covariate and positive on another, so that x^T u changes sign.
    candidates = []
    for i, x in enumerate(actions.covariates):
        norm = x @ x
        for j, other in enumerate(actions.covariates):
            residual = other - (other @ x / norm) * x if norm > 0 else other
            if i != j and np.linalg.norm(residual) > 1e-12:
                candidates.append(residual)
    if candidates:
        best = max(best, float(np.max(_limit_ratios(actions, np.array(candidates)))))

    return best
