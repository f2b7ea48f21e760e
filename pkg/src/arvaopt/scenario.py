"""The decumulation scenario shared by the control solver and the path simulator."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .market import BASE_MARKET, MarketParams
from .mortality import ArvaConfig, MortalityTable, arva_withdrawal, cpm2014_male, withdrawal_schedule


@dataclass(frozen=True)
class Scenario:
    """Investor, spending rule and market.

    Withdrawals/rebalances happen at t_n = n * dt for n = 0..M with M = T / dt.
    At t_M the final withdrawal is taken and the remainder is terminal wealth;
    with ``final_withdrawal=False`` nothing is withdrawn at t_M (M withdrawals).
    """

    market: MarketParams = BASE_MARKET
    arva: ArvaConfig = field(default_factory=ArvaConfig)
    mortality: MortalityTable = field(default_factory=cpm2014_male, repr=False)
    w0: float = 1000.0
    horizon: float = 30.0
    final_withdrawal: bool = True

    def __post_init__(self):
        m = self.horizon / self.arva.dt
        if abs(m - round(m)) > 1e-9 or m < 1:
            raise ValueError("horizon must be a positive multiple of the withdrawal interval")

    @property
    def dt(self) -> float:
        return self.arva.dt

    @property
    def n_rebalances(self) -> int:
        """M: number of rebalancing dates (there are M + 1 withdrawals)."""
        return int(round(self.horizon / self.arva.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_rebalances + 1) * self.dt

    @cached_property
    def fractions(self) -> np.ndarray:
        """A(t_n), n = 0..M."""
        return withdrawal_schedule(self.arva, self.mortality, self.n_rebalances + 1)

    @property
    def n_withdrawals(self) -> int:
        return self.n_rebalances + int(self.final_withdrawal)

    def withdrawal(self, n: int, w_minus):
        """q_n as a function of wealth before withdrawal."""
        if n == self.n_rebalances and not self.final_withdrawal:
            return np.zeros_like(np.asarray(w_minus, dtype=float))
        return arva_withdrawal(w_minus, self.fractions[n], self.arva.q_min, self.arva.q_max)

    def replace(self, **kw) -> "Scenario":
        return replace(self, **kw)


def zero_market() -> MarketParams:
    """No drift, no volatility, no jumps, no spread: wealth only moves with cash flows."""
    return MarketParams()
