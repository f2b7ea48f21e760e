"""
====================================
The ARVA spending rule, year by year
====================================

A retiree aged 65 withdraws, each year, the payment of a virtual annuity that
current wealth could buy.  The annuity runs until the date by which 80% of
the surviving cohort is expected to have died, recomputed every year.  This
script prints that horizon, the lump-sum fraction A(t) and the resulting
withdrawal for a few wealth levels.
"""
from __future__ import annotations

import numpy as np

from arvaopt import ArvaConfig, Scenario, cpm2014_male
from arvaopt.mortality import annuity_factor_a, conditional_horizon

table = cpm2014_male()
cfg = ArvaConfig()
sc = Scenario(arva=cfg, mortality=table)

# Survival from 65: about 13% of 65-year-old men reach 95 and 2% reach 100.
s65 = table.survival(65.0)
print(f"S(95)/S(65) = {table.survival(95.0) / s65:.3f}   S(100)/S(65) = {table.survival(100.0) / s65:.3f}")

# The horizon shrinks slowly: a 90-year-old still plans several years ahead.
print("\n t   age   T* - t   a(T* - t)      A(t)")
for t in (0, 5, 10, 15, 20, 25, 30):
    horizon = conditional_horizon(table, cfg.x0, t, cfg.survival_fraction) - t
    print(f"{t:2d}  {65 + t:4d}  {horizon:7.2f}  {annuity_factor_a(cfg.r, horizon):9.3f}  {sc.fractions[t]:8.4f}")

# Withdrawals are A(t) * wealth, clipped to [30, 80] thousand dollars.
wealth = np.array([300.0, 800.0, 1000.0, 2000.0, 4000.0])
print("\nwithdrawal at t = 0 for wealth", wealth, "->", sc.withdrawal(0, wealth))
print("withdrawal at t = 20 for wealth", wealth, "->", sc.withdrawal(20, wealth))
