"""
Exceptions raised by the debias-bandit library.
"""


class ValidationError(ValueError):
    """
    Raised when an input (action set, parameter, config, CLI argument) is invalid.
    """


class SolverError(RuntimeError):
    """
    Raised when a numerical routine fails to produce a usable answer.
    """


class PhaseLimitError(SolverError):
    """
    Raised when an elimination loop runs past its phase cap.
    """


class BudgetExhausted(Exception):
    """
    Raised by an exploration routine whose allocation does not fit in the remaining rounds.

    Nothing has been sampled when it is raised; the caller decides how to spend the rest.
    """

    def __init__(self, allocation, budget: int):
        super().__init__(f"allocation of {allocation.total} rounds exceeds the remaining {budget}")
        self.allocation = allocation
        self.budget = budget
