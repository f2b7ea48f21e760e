"""Optimal asset allocation for retirement decumulation under an annuity-style spending rule.

A scalarized expected-withdrawals / expected-shortfall objective is solved by
dynamic programming with Fourier expectation steps, and strategies are
evaluated on synthetic or bootstrapped market paths.
"""

__version__ = "0.1.0"

from .market import BASE_MARKET, BASE_MARKET_GBM, JumpParams, MarketParams  # noqa: E402
from .mortality import ArvaConfig, MortalityTable, cpm2014_male  # noqa: E402
from .scenario import Scenario  # noqa: E402

__all__ = ["BASE_MARKET", "BASE_MARKET_GBM", "JumpParams", "MarketParams", "ArvaConfig",
           "MortalityTable", "cpm2014_male", "Scenario", "__version__"]
