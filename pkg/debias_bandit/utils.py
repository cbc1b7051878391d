"""
Small helpers shared by the simulation modules.
"""

# Import the necessary libraries.
import logging
import numpy as np


def setup_logging(logging_enabled: bool = True):
    """
    Helper function to setup logging.
    """
    if logging_enabled:
        logging.disable(logging.NOTSET)
        logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    else:
        logging.disable(logging.CRITICAL)


def pow2_checkpoints(horizon: int) -> np.ndarray:
    """
    Checkpoint grid of a regret trace: every power of two up to the horizon, plus the horizon itself.

    Args:
        horizon (int): Number of rounds T >= 1.

    Returns:
        np.ndarray: Sorted, duplicate-free integer checkpoints.
    """
    powers = 2 ** np.arange(int(np.floor(np.log2(horizon))) + 1, dtype=np.int64)
    return np.unique(np.append(powers[powers <= horizon], horizon))
