"""
Optimal experimental designs over a finite action set.

- G-optimal designs minimize the largest leverage a_x^T V(pi)^+ a_x over an active set. They are
  computed with Fedorov-Wynn steps plus away steps, in coordinates of the span of the active set.
- c-optimal designs minimize c^T V(pi)^+ c. By Elfving's theorem the optimal variance is the
  squared minimal l1 norm of a representation c = sum_x beta_x a_x, which is a linear program.
- Delta-optimal measures minimize sum_x mu(x) Delta_x subject to e_{d+1}^T V(mu)^+ e_{d+1} <= 1.
  Rescaling the actions by Delta_x^{-1/2} reduces them to an e_{d+1}-optimal design.

The solvers only read the (k, d+1) matrix of lifted vectors of the action set they are given.
"""

# Import the necessary libraries.
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from debias_bandit import linalg
from debias_bandit.errors import SolverError, ValidationError

# Weights below this are dropped from G-design supports.
PRUNE_TOL = 1e-9

# Relative size below which an LP coefficient is treated as zero.
COEFFICIENT_TOL = 1e-12

# Slack on the bias-variance constraint of Delta-optimal measures.
VARIANCE_SLACK = 1e-6

# PSD slack of the rounding check, relative to 1 + the largest entry of m V(design).
ROUNDING_SLACK = 1e-9

# Options passed to HiGHS for the Elfving program.
HIGHS_OPTIONS = {'primal_feasibility_tolerance': 1e-10, 'dual_feasibility_tolerance': 1e-10}


@dataclass(frozen=True, eq=False)
class Design:
    """
    Nonnegative weights over the action indices.

    Attributes:
        weights (np.ndarray): One weight per action of the set, zero off the support.
        kind (str): 'probability' (weights sum to one) or 'measure' (any nonnegative mass).
        iterations (int): Iterations used by the producing solver.
    """

    weights: np.ndarray
    kind: str = 'probability'
    iterations: int = 0

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if weights.ndim != 1 or np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValidationError("design weights must be a finite nonnegative vector")
        if self.kind not in ('probability', 'measure'):
            raise ValidationError(f"unknown design kind {self.kind!r}")
        if self.kind == 'probability' and abs(weights.sum() - 1.0) > 1e-9:
            raise ValidationError(f"probability design sums to {weights.sum()!r}")
        object.__setattr__(self, 'weights', weights)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def covariance(self, lifted) -> np.ndarray:
        """
        V = sum_x w(x) a_x a_x^T.
        """
        return linalg.gram(lifted, self.weights)

    def to_dict(self, value: float) -> dict:
        return {'weights': {str(i): float(self.weights[i]) for i in self.support}, 'value': float(value), 'iterations': int(self.iterations)}


@dataclass(frozen=True, eq=False)
class Allocation:
    """
    Integer number of pulls per action.
    """

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.counts > 0)

    def covariance(self, lifted) -> np.ndarray:
        return linalg.gram(lifted, self.counts.astype(float))


def _lifted(actions) -> np.ndarray:
    return np.asarray(actions.lifted, dtype=float)


def _active_indices(actions, active) -> np.ndarray:
    if active is None:
        return np.arange(actions.k)
    active = np.unique(np.asarray(list(active), dtype=int))
    if active.size == 0:
        raise ValidationError("the active set is empty")
    if active[0] < 0 or active[-1] >= actions.k:
        raise ValidationError(f"active indices out of range for {actions.k} actions")
    return active


def leverages(vectors: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """
    Leverages a_i^T V(w)^+ a_i of the rows of `vectors` under the weights.
    """
    inverse = linalg.pseudo_inverse(linalg.gram(vectors, weights))
    return np.einsum('ij,jk,ik->i', vectors, inverse, vectors)


def _reduce_moments(vectors: np.ndarray, weights: np.ndarray, bound: int) -> np.ndarray:
    """
    Caratheodory reduction of a design to at most `bound` support points with the same V.

    Moves along null vectors of the upper-triangular moment map until a weight hits zero,
    then renormalizes.
    """
    weights = weights.copy()
    rows, cols = np.triu_indices(vectors.shape[1])
    while np.count_nonzero(weights) > bound:
        support = np.flatnonzero(weights)
        moments = (vectors[support][:, rows] * vectors[support][:, cols]).T
        _, _, vh = np.linalg.svd(moments)
        direction = vh[-1]
        if not np.any(direction > 0):
            direction = -direction

        # Largest step keeping every weight nonnegative.
        positive = direction > 0
        steps = weights[support][positive] / direction[positive]
        step = steps.min()
        weights[support] -= step * direction
        weights[support[positive][np.argmin(steps)]] = 0.0
        weights[weights < 1e-15] = 0.0
    return weights / weights.sum()


def g_optimal_design(actions, active=None, tol: float = 1e-3, max_iter: int = 100_000) -> tuple[Design, float]:
    """
    Approximate G-optimal design over an active subset of actions.

    The design minimizes max_{x active} a_x^T V(pi)^+ a_x. By the Kiefer-Wolfowitz theorem the
    optimum equals r, the dimension of the span of the active lifted vectors, and every
    supported action sits on the maximum.

    Args:
        actions (ActionSet): The action set.
        active (iterable[int] | None): Indices of the active actions; all actions if None.
        tol (float): Relative optimality tolerance; the result satisfies g_value <= (1 + tol) r.
        max_iter (int): Iteration cap.

    Returns:
        tuple: (probability Design supported on the active set, g_value).
    """
    active = _active_indices(actions, active)
    lifted = _lifted(actions)[active]
    d = actions.d

    # Work in coordinates of the span of the active set.
    basis = linalg.range_basis(lifted.T @ lifted)
    vectors = lifted @ basis
    r = basis.shape[1]
    if r == 0:
        raise ValidationError("active lifted vectors are all zero")

    # Start from the uniform design.
    m = len(active)
    pi = np.full(m, 1.0 / m)
    iterations = 0
    while iterations < max_iter:
        scores = leverages(vectors, pi)
        top = int(np.argmax(scores))
        top_score = scores[top]
        supported = np.flatnonzero(pi > 0)
        bottom = supported[int(np.argmin(scores[supported]))]
        bottom_score = scores[bottom]

        # Stop once the maximum is close to r and every supported point sits near it.
        if top_score <= (1 + tol) * r and bottom_score >= top_score - tol * r:
            break
        iterations += 1

        if top_score - r >= r - bottom_score:
            # Toward step on the max-leverage action with exact line search.
            step = (top_score - r) / (r * (top_score - 1))
            pi *= 1 - step
            pi[top] += step
        else:
            # Away step from the min-leverage supported action, dropping it if the step allows.
            limit = -pi[bottom] / (1 - pi[bottom])
            step = (bottom_score - r) / (r * (bottom_score - 1)) if bottom_score > 1 else limit
            if step <= limit:
                pi[bottom] = 0.0
                pi /= pi.sum()
            else:
                pi *= 1 - step
                pi[bottom] += step
    else:
        logging.warning(f"G-optimal design stopped at the iteration cap {max_iter} without reaching tolerance {tol}.")

    # Prune negligible weights and bound the support size.
    pi[pi < PRUNE_TOL] = 0.0
    pi /= pi.sum()
    bound = (d + 1) * (d + 2) // 2
    if np.count_nonzero(pi) > bound:
        logging.debug(f"Reducing a G-design support of {np.count_nonzero(pi)} points to {bound}.")
        pi = _reduce_moments(vectors, pi, bound)

    weights = np.zeros(actions.k)
    weights[active] = pi
    g_value = float(np.max(leverages(vectors, pi)))
    logging.debug(f"G-optimal design on {m} actions: value {g_value:.6g}, rank {r}, {iterations} iterations.")
    return Design(weights, 'probability', iterations), g_value


def _reduce_to_vertex(columns: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """
    Drop dependent columns from a representation sum_i beta_i columns_i without changing it.

    Along a null direction of the supported columns the l1 norm is linear, so at an optimum
    it is constant; the step stops when a coefficient reaches zero.
    """
    beta = beta.copy()
    while True:
        support = np.flatnonzero(beta)
        if support.size <= np.linalg.matrix_rank(columns[:, support]):
            return beta
        _, _, vh = np.linalg.svd(columns[:, support])
        direction = vh[-1]
        usable = np.abs(direction) > COEFFICIENT_TOL
        if not np.any(beta[support][usable] / direction[usable] > 0):
            direction = -direction

        # Step until the first coefficient reaches zero, keeping every sign.
        ratios = np.full(support.size, np.inf)
        ratios[usable] = beta[support][usable] / direction[usable]
        ratios[ratios <= 0] = np.inf
        position = int(np.argmin(ratios))
        beta[support] -= ratios[position] * direction
        beta[support[position]] = 0.0


def elfving_representation(vectors: np.ndarray, c: np.ndarray) -> np.ndarray:
    """
    Minimal-l1 coefficients beta with sum_i beta_i vectors_i = c.

    Args:
        vectors (np.ndarray): (m, D) matrix of candidate vectors, one per row.
        c (np.ndarray): Target of length D, in the span of the rows.

    Returns:
        np.ndarray: beta of length m, with at most rank(vectors) nonzero entries.
    """
    # Project onto the span of the vectors so that the equality system has full row rank.
    # The span is taken from the unit rows, which keeps it independent of the row scales.
    norms = np.linalg.norm(vectors, axis=1)
    units = vectors[norms > 0] / norms[norms > 0, None]
    basis = linalg.range_basis(units.T @ units)
    columns = (vectors @ basis).T
    target = basis.T @ c
    m = vectors.shape[0]

    # Split beta = beta_plus - beta_minus and minimize the total mass.
    result = linprog(np.ones(2 * m), A_eq=np.hstack([columns, -columns]), b_eq=target, bounds=(0, None), method='highs-ds', options=HIGHS_OPTIONS)
    if result.status != 0:
        raise SolverError(f"Elfving program failed: {result.message}")
    beta = result.x[:m] - result.x[m:]
    beta[np.abs(beta) <= COEFFICIENT_TOL * np.max(np.abs(beta))] = 0.0
    beta = _reduce_to_vertex(columns, beta)

    # Polish the coefficients by solving the equality system on the support.
    support = np.flatnonzero(beta)
    polished, *_ = np.linalg.lstsq(columns[:, support], target, rcond=None)
    if np.all(np.sign(polished) == np.sign(beta[support])):
        beta[support] = polished
    return beta


def c_optimal_design(actions, c, active=None) -> tuple[Design, float]:
    """
    c-optimal design through the l1 form of Elfving's theorem.

    Args:
        actions (ActionSet): The action set.
        c (array-like): Target vector of length d+1, nonzero and in the span of the lifted vectors.
        active (iterable[int] | None): Restrict the design to these indices.

    Returns:
        tuple: (probability Design with support size <= d+1, variance c^T V(pi)^+ c).

    Raises:
        ValidationError: If c is zero, has the wrong length, or is unattainable.
    """
    active = _active_indices(actions, active)
    lifted = _lifted(actions)[active]
    c = np.asarray(c, dtype=float)
    if c.shape != (actions.d + 1,):
        raise ValidationError(f"target has shape {c.shape}, expected ({actions.d + 1},)")
    if not np.any(c):
        raise ValidationError("target vector is zero")
    if not linalg.in_image(lifted.T @ lifted, c):
        raise ValidationError("unattainable target: c is not in the span of the lifted actions")

    beta = elfving_representation(lifted, c)
    total = np.abs(beta).sum()
    weights = np.zeros(actions.k)
    weights[active] = np.abs(beta) / total
    dsn = Design(weights / weights.sum(), 'probability')
    logging.debug(f"c-optimal design: variance {total ** 2:.6g} on {len(dsn.support)} actions.")
    return dsn, float(total ** 2)


def delta_optimal_design(actions, gaps) -> tuple[Design, float]:
    """
    Delta-optimal measure and the regret kappa(Delta) it costs.

    Args:
        actions (ActionSet): The action set.
        gaps (array-like): Positive gap (or gap estimate) per action.

    Returns:
        tuple: (measure mu with support size <= d+1, kappa(Delta) = sum_x mu(x) Delta_x).

    Raises:
        ValidationError: If a gap is nonpositive or the vector has the wrong length.
        SolverError: If the measure fails its bias-variance constraint.
    """
    gaps = np.asarray(gaps, dtype=float)
    if gaps.shape != (actions.k,):
        raise ValidationError(f"gap vector has shape {gaps.shape}, expected ({actions.k},)")
    if not np.all(np.isfinite(gaps)) or np.any(gaps <= 0):
        raise ValidationError("gap entries must be positive and finite")

    # Rescale the lifted vectors by Delta^{-1/2} and solve for e_{d+1}.
    rescaled = _lifted(actions) / np.sqrt(gaps)[:, None]
    target = np.zeros(actions.d + 1)
    target[-1] = 1.0
    beta = elfving_representation(rescaled, target)
    total = np.abs(beta).sum()
    kappa = total ** 2
    pi = np.abs(beta) / total
    mu = kappa * pi / gaps

    # V(mu) = kappa V_rescaled(pi); the bias variance under mu is at most one iff
    # the rescaled probability design reaches variance kappa. Tiny gaps make V(mu)
    # too badly conditioned to test directly.
    rescaled_variance = variance(rescaled, pi, target)
    if not np.isfinite(rescaled_variance):
        raise SolverError("Delta-optimal measure does not identify the bias")
    if rescaled_variance > kappa * (1 + VARIANCE_SLACK):
        raise SolverError(f"Delta-optimal measure has bias variance {rescaled_variance / kappa:.8g} > 1")
    return Design(mu, 'measure'), float(kappa)


def round_allocation(dsn: Design, m: float, lifted=None) -> Allocation:
    """
    Pull each supported action ceil(m * weight) times.

    Args:
        dsn (Design): Probability design or measure.
        m (float): Positive scale.
        lifted (np.ndarray | None): Lifted vectors of the actions; when given, the rounded
            counts are checked to dominate m * V(dsn) in the PSD order.

    Returns:
        Allocation: Integer counts, zero outside the support of dsn.

    Raises:
        ValidationError: If m is not positive or the design is empty.
        SolverError: If the dominance check fails.
    """
    if not m > 0:
        raise ValidationError(f"scale must be positive, got {m}")
    if dsn.support.size == 0:
        raise ValidationError("cannot round a design with empty support")
    counts = np.zeros(len(dsn.weights), dtype=np.int64)
    counts[dsn.support] = np.ceil(m * dsn.weights[dsn.support]).astype(np.int64)
    allocation = Allocation(counts)
    if lifted is not None:
        check_rounding(allocation, dsn, m, lifted)
    return allocation


def check_rounding(allocation: Allocation, dsn: Design, m: float, lifted):
    """
    Raise SolverError unless V(allocation) >= m * V(dsn) in the PSD order.
    """
    scaled = m * dsn.covariance(lifted)
    slack = ROUNDING_SLACK * (1.0 + np.max(np.abs(scaled)))
    if not linalg.psd_dominates(allocation.covariance(lifted), scaled, slack=slack):
        raise SolverError(f"rounded allocation of {allocation.total} pulls does not dominate the scaled design")


def variance(lifted, weights, c) -> float:
    """
    c^T V(w)^+ c, or inf when c is outside the image of V(w).
    """
    covariance = linalg.gram(lifted, weights)
    if not linalg.in_image(covariance, c):
        return float('inf')
    c = np.asarray(c, dtype=float)
    return float(c @ linalg.pseudo_inverse(covariance) @ c)
