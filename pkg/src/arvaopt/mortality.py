"""Mortality tables, the conditional longevity horizon and the capped/floored ARVA rule."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np


class MortalityError(ValueError):
    pass


class DegenerateAnnuityError(ValueError):
    pass


@dataclass(frozen=True)
class MortalityTable:
    """One-year death probabilities q_x on contiguous integer ages.

    Survival is forced to zero at ``terminal_age`` (the last age in the table).
    """

    ages: np.ndarray
    qx: np.ndarray

    def __post_init__(self):
        ages = np.asarray(self.ages, dtype=int)
        qx = np.asarray(self.qx, dtype=float)
        if ages.ndim != 1 or ages.shape != qx.shape or len(ages) < 2:
            raise MortalityError("ages and qx must be equal-length 1-d sequences")
        if np.any(np.diff(ages) != 1):
            raise MortalityError("ages must be strictly increasing and contiguous")
        if np.any((qx < 0) | (qx > 1)):
            raise MortalityError("death probabilities must lie in [0, 1]")
        if qx[-1] != 1.0:
            raise MortalityError("q at the terminal age must equal 1")
        object.__setattr__(self, "ages", ages)
        object.__setattr__(self, "qx", qx)

    @property
    def terminal_age(self) -> int:
        return int(self.ages[-1])

    @classmethod
    def from_csv(cls, path) -> "MortalityTable":
        """Read a two-column ``age,qx`` CSV."""
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or set(rows[0]) != {"age", "qx"}:
            raise MortalityError(f"{path}: expected header 'age,qx'")
        return cls(np.array([int(r["age"]) for r in rows]), np.array([float(r["qx"]) for r in rows]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["age", "qx"])
            for a, q in zip(self.ages, self.qx):
                w.writerow([int(a), repr(float(q))])

    def survival_left(self, age):
        """Survival curve without the terminal step (left limit at the terminal age)."""
        s_int = np.concatenate(([1.0], np.cumprod(1.0 - self.qx[:-1])))
        return np.interp(np.asarray(age, dtype=float), self.ages.astype(float), s_int)

    def survival(self, age):
        """S(age) relative to the first table age, linear between integer ages.

        The drop to zero at the terminal age is a step, not a ramp.
        """
        age = np.asarray(age, dtype=float)
        return np.where(age >= self.terminal_age, 0.0, self.survival_left(age))


def cpm2014_male() -> MortalityTable:
    """Canadian Pensioners' Mortality 2014, male composite (CIA, base year, no improvement)."""
    ref = resources.files("arvaopt") / "data" / "cpm2014_male.csv"
    with resources.as_file(ref) as p:
        return MortalityTable.from_csv(Path(p))


@dataclass(frozen=True)
class ArvaConfig:
    x0: float = 65.0
    r: float = 0.00454
    survival_fraction: float = 0.2
    q_min: float = 30.0
    q_max: float = 80.0
    dt: float = 1.0
    # "interval-start": the virtual annuity bought at t_i runs to T*(t_i) and
    # a(t') = a(T*(t_i) - t') over [t_i, t_i + dt]. "continuous": a(t') uses T*(t').
    horizon_basis: str = "interval-start"

    def __post_init__(self):
        if self.q_min > self.q_max:
            raise ValueError("q_min must not exceed q_max")
        if not 0 < self.survival_fraction <= 1:
            raise ValueError("survival_fraction must lie in (0, 1]")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon_basis not in ("interval-start", "continuous"):
            raise ValueError(f"unknown horizon_basis {self.horizon_basis!r}")


def conditional_horizon(table: MortalityTable, x0: float, t: float, fraction: float) -> float:
    """T*_x(t): time at which only ``fraction`` of the cohort alive at age x0+t survives.

    Returns ``t + s`` with s the smallest non-negative time such that
    S(x0+t+s) / S(x0+t) <= fraction.
    """
    a = x0 + t
    if a >= table.terminal_age:
        raise MortalityError(f"age {a} is at or beyond the terminal age {table.terminal_age}")
    s_a = float(table.survival(a))
    if s_a <= 0.0:
        raise MortalityError(f"cohort is extinct at age {a}")
    if fraction >= 1.0:
        return float(t)
    target = fraction * s_a
    ages = table.ages.astype(float)
    s_left = table.survival_left(ages)
    later = np.nonzero((ages > a) & (s_left <= target))[0]
    if len(later) == 0:
        # survival only reaches the target at the terminal step
        return float(table.terminal_age - x0)
    k = later[0]
    hi = ages[k]
    lo = max(ages[k - 1], a)
    s_lo = float(table.survival_left(lo))
    s_hi = float(s_left[k])
    frac = (s_lo - target) / (s_lo - s_hi)
    return float(lo + frac * (hi - lo) - x0)


def annuity_factor_a(r: float, horizon):
    """PV of a continuous unit payment stream for ``horizon`` years at real rate r."""
    h = np.asarray(horizon, dtype=float)
    if np.any(h < 0):
        raise ValueError("horizon must be non-negative")
    if r == 0.0:
        out = h.copy()
    else:
        out = -np.expm1(-r * h) / r
    return float(out) if out.ndim == 0 else out


def lump_sum_integral(a_of: Callable[[float], float], r: float, t_i: float, dt: float,
                      panels_per_year: int = 12) -> float:
    """Composite Simpson value of int_{t_i}^{t_i+dt} exp(-r(t'-t_i)) / a(t') dt', capped at 1.

    If a(t') reaches zero after t_i the integral diverges: the virtual annuity is
    exhausted within the period and the whole portfolio is withdrawn (returns 1).
    """
    n = max(2, int(np.ceil(panels_per_year * dt)))
    n += n % 2
    nodes = t_i + np.linspace(0.0, dt, n + 1)
    a_vals = np.array([a_of(x) for x in nodes])
    if a_vals[0] <= 0.0:
        raise DegenerateAnnuityError(f"annuity factor vanishes at t={t_i}")
    if np.any(a_vals <= 0.0):
        return 1.0
    f = np.exp(-r * (nodes - t_i)) / a_vals
    h = dt / n
    val = h / 3.0 * (f[0] + f[-1] + 4.0 * f[1:-1:2].sum() + 2.0 * f[2:-1:2].sum())
    return float(min(val, 1.0))


def lump_sum_fraction(cfg: ArvaConfig, table: MortalityTable, t_i: float,
                      panels_per_year: int = 12) -> float:
    """A(t_i): fraction of wealth withdrawn at t_i under the (uncapped) ARVA rule."""
    if cfg.horizon_basis == "interval-start":
        t_star = conditional_horizon(table, cfg.x0, t_i, cfg.survival_fraction)

        def a_of(tp: float) -> float:
            return annuity_factor_a(cfg.r, max(t_star - tp, 0.0))
    else:
        def a_of(tp: float) -> float:
            if cfg.x0 + tp >= table.terminal_age:
                return 0.0
            horizon = conditional_horizon(table, cfg.x0, tp, cfg.survival_fraction) - tp
            return annuity_factor_a(cfg.r, horizon)

    return lump_sum_integral(a_of, cfg.r, t_i, cfg.dt, panels_per_year)


def withdrawal_schedule(cfg: ArvaConfig, table: MortalityTable, n_dates: int) -> np.ndarray:
    """A(t_i) for t_i = i * dt, i = 0 .. n_dates - 1."""
    return np.array([lump_sum_fraction(cfg, table, i * cfg.dt) for i in range(n_dates)])


def write_schedule_csv(path, cfg: ArvaConfig, fractions) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "age", "A"])
        for i, A in enumerate(fractions):
            w.writerow([i * cfg.dt, cfg.x0 + i * cfg.dt, repr(float(A))])


def arva_withdrawal(w_minus, A, q_min: float, q_max: float):
    """Capped and floored ARVA withdrawal max(q_min, min(A w, q_max))."""
    out = np.maximum(q_min, np.minimum(np.multiply(A, w_minus), q_max))
    return float(out) if np.ndim(out) == 0 else out
