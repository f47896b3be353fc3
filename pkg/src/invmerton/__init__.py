"""Inverse Merton toolkit.

Given an agent's consumption and investment rules, check the consistency
condition that makes them optimal for some utility-maximisation problem,
recover that utility numerically, classify the agent's risk attitude, and
verify everything by simulation.
"""

from .errors import InverseMertonError
from .market import MarketParams, StrategyPair, state_price_density
from .numerics import Grid1D, RngStream

__all__ = [
    "Grid1D",
    "InverseMertonError",
    "MarketParams",
    "RngStream",
    "StrategyPair",
    "state_price_density",
]

__version__ = "0.1.0"
