# Import the necessary libraries.
import logging

import numpy as np
import pytest

from debias_bandit.geometry import ActionSet
from debias_bandit.model import Environment, Parameter


@pytest.fixture(autouse=True)
def restore_logging():
    # Quiet runs disable logging process-wide.
    yield
    logging.disable(logging.NOTSET)


@pytest.fixture
def triangle():
    """
    Three actions in R^2 with kappa* = 4: e_1 and (1/2, 1/2) in group +1, e_2 in group -1.
    """
    return ActionSet(np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]), np.array([1, -1, 1]))


@pytest.fixture
def triangle_theta():
    # Rewards 0.6, 0.3, 0.45: the best action is index 0.
    return Parameter(np.array([0.6, 0.3]), 0.2)


@pytest.fixture
def non_separable():
    """
    e_1 and -e_1 in group +1, e_2 in group -1: no hyperplane through the origin separates them.
    """
    return ActionSet(np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]), np.array([1, 1, -1]))


@pytest.fixture
def five_actions():
    return ActionSet(np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [-0.5, 0.2], [0.3, -0.6]]), np.array([1, -1, 1, -1, 1]))


@pytest.fixture
def five_theta():
    return Parameter(np.array([0.6, 0.3]), 0.2)


@pytest.fixture
def noiseless_env(triangle, triangle_theta):
    return Environment(triangle, triangle_theta, noise_std=0.0, seed=0)


def random_action_set(rng, d: int, k: int) -> ActionSet:
    """
    Random valid action set: Gaussian covariates, both groups present.
    """
    while True:
        covariates = rng.standard_normal((k, d))
        groups = rng.choice([-1, 1], size=k)
        groups[0], groups[1] = 1, -1
        lifted = np.column_stack([covariates, groups])
        if np.linalg.matrix_rank(lifted) == d + 1:
            return ActionSet(covariates, groups)
