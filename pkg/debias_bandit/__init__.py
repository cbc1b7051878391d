"""
Biased linear bandits: optimal designs, Fair Phased Elimination, baselines, lower-bound
instances and a Monte Carlo harness.
"""

from debias_bandit.errors import PhaseLimitError, SolverError, ValidationError
from debias_bandit.geometry import ActionSet
from debias_bandit.model import Environment, Parameter

__all__ = ['ActionSet', 'Environment', 'Parameter', 'PhaseLimitError', 'SolverError', 'ValidationError']
