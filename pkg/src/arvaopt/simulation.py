"""Path simulation of decumulation strategies and the EW / ES statistics computed from it."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Protocol

import numpy as np

from .market import MarketParams, sample_log_returns
from .scenario import Scenario

if TYPE_CHECKING:
    from .controls import ControlTable

# Paths are simulated in fixed-size blocks, each with its own seed-derived
# stream, so results do not depend on how blocks are spread over workers.
PATH_BLOCK = 1 << 14

STRATEGY_KINDS = ("constant-weight-constant-q", "constant-weight-arva", "control-table")


class PathSource(Protocol):
    def draw(self, rng: np.random.Generator, n_paths: int, n_periods: int, dt: float):
        """Gross returns (r_s, r_b), each shaped (n_periods, n_paths)."""


@dataclass(frozen=True)
class SyntheticMarket:
    """Exact per-period sampling from the parametric jump diffusion."""

    params: MarketParams

    def draw(self, rng, n_paths, n_periods, dt):
        r_s = np.empty((n_periods, n_paths))
        r_b = np.empty((n_periods, n_paths))
        for k in range(n_periods):
            x_s, x_b = sample_log_returns(self.params, dt, rng, n_paths)
            r_s[k] = np.exp(x_s)
            r_b[k] = np.exp(x_b)
        return r_s, r_b


@dataclass(frozen=True)
class StationaryBootstrap:
    """Paired stationary block bootstrap of monthly real log returns.

    Blocks start at a uniformly drawn month, have geometric length with mean
    ``b_hat`` years and wrap around the end of the sample.
    """

    log_s: np.ndarray
    log_b: np.ndarray
    b_hat: float
    periods_per_year: int = 12
    first_start: int | None = None

    def __post_init__(self):
        if self.b_hat <= 0:
            raise ValueError("expected blocksize must be positive")
        if len(self.log_s) == 0 or len(self.log_s) != len(self.log_b):
            raise ValueError("need two non-empty paired return series")

    def sample_indices(self, rng: np.random.Generator, n_paths: int, n_steps: int) -> np.ndarray:
        n = len(self.log_s)
        p_new = 1.0 / (self.b_hat * self.periods_per_year)
        idx = np.empty((n_steps, n_paths), dtype=np.int64)
        if self.first_start is None:
            cur = rng.integers(0, n, size=n_paths)
        else:
            cur = np.full(n_paths, self.first_start, dtype=np.int64)
        idx[0] = cur
        for k in range(1, n_steps):
            restart = rng.random(n_paths) < p_new
            fresh = rng.integers(0, n, size=n_paths)
            cur = np.where(restart, fresh, (cur + 1) % n)
            idx[k] = cur
        return idx

    def draw(self, rng, n_paths, n_periods, dt):
        per = int(round(dt * self.periods_per_year))
        idx = self.sample_indices(rng, n_paths, n_periods * per)
        xs = np.asarray(self.log_s)[idx].reshape(n_periods, per, n_paths).sum(axis=1)
        xb = np.asarray(self.log_b)[idx].reshape(n_periods, per, n_paths).sum(axis=1)
        return np.exp(xs), np.exp(xb)


def stationary_block_bootstrap(log_s, log_b, b_hat: float, **kw) -> StationaryBootstrap:
    return StationaryBootstrap(np.asarray(log_s, float), np.asarray(log_b, float), b_hat, **kw)


@dataclass(frozen=True)
class Strategy:
    kind: str
    p_const: float | None = None
    q_const: float | None = None
    control: "ControlTable | None" = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "control-table":
            if self.control is None or self.p_const is not None:
                raise ValueError("control-table strategy takes a control table only")
        else:
            if self.p_const is None or self.control is not None:
                raise ValueError("constant-weight strategies take p_const only")
            if not 0.0 <= self.p_const <= 1.0:
                raise ValueError("p_const must lie in [0, 1]")
        if self.kind == "constant-weight-constant-q" and self.q_const is None:
            raise ValueError("constant withdrawal strategy needs q_const")

    @classmethod
    def constant_q(cls, p: float, q: float) -> "Strategy":
        return cls("constant-weight-constant-q", p_const=p, q_const=q)

    @classmethod
    def constant_arva(cls, p: float) -> "Strategy":
        return cls("constant-weight-arva", p_const=p)

    @classmethod
    def optimal(cls, control: "ControlTable") -> "Strategy":
        return cls("control-table", control=control)


@dataclass
class PathOutcomes:
    """Per-path cash flows and wealth; rows are paths.

    withdrawals[:, n] = q_n, wealth_minus[:, n] = W(t_n^-), wealth_plus[:, n] = W(t_n^+)
    for n = 0..M; weights[:, n] = p_n for n = 0..M-1.
    """

    withdrawals: np.ndarray
    wealth_minus: np.ndarray
    wealth_plus: np.ndarray
    weights: np.ndarray

    @property
    def terminal_wealth(self) -> np.ndarray:
        return self.wealth_plus[:, -1]

    @property
    def n_paths(self) -> int:
        return self.withdrawals.shape[0]

    @classmethod
    def concatenate(cls, parts) -> "PathOutcomes":
        parts = list(parts)
        return cls(*(np.concatenate([getattr(p, f) for p in parts])
                     for f in ("withdrawals", "wealth_minus", "wealth_plus", "weights")))


def _simulate_block(source: PathSource, strat: Strategy, scenario: Scenario, n: int,
                    rng: np.random.Generator) -> PathOutcomes:
    M = scenario.n_rebalances
    dt = scenario.dt
    spread = math.exp(scenario.market.mu_c_b * dt)
    r_s, r_b = source.draw(rng, n, M, dt)

    q_out = np.empty((n, M + 1))
    w_minus = np.empty((n, M + 1))
    w_plus = np.empty((n, M + 1))
    p_out = np.empty((n, M))
    w = np.full(n, float(scenario.w0))
    for k in range(M + 1):
        w_minus[:, k] = w
        if strat.kind == "constant-weight-constant-q":
            q = np.full(n, strat.q_const if k < M or scenario.final_withdrawal else 0.0)
        else:
            q = scenario.withdrawal(k, w)
        q_out[:, k] = q
        w = w - q
        w_plus[:, k] = w
        if k == M:
            break
        if strat.kind == "control-table":
            p = strat.control.lookup(k, w)
        else:
            p = np.full(n, strat.p_const)
        solvent = w > 0.0
        p = np.where(solvent, p, 0.0)
        p_out[:, k] = p
        grown = w * (p * r_s[k] + (1.0 - p) * r_b[k])
        w = np.where(solvent, grown, w * r_b[k] * spread)
    return PathOutcomes(q_out, w_minus, w_plus, p_out)


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def simulate_strategy(source: PathSource, strat: Strategy, scenario: Scenario, n_paths: int,
                      seed: int = 0, workers: int = 1, block_size: int = PATH_BLOCK) -> PathOutcomes:
    """Simulate ``n_paths`` independent paths of the strategy.

    Insolvent paths (W(t_n^+) <= 0) hold only debt, which grows at the bond
    return plus the borrowing spread; the equity weight is then zero.
    """
    sizes = [min(block_size, n_paths - i) for i in range(0, n_paths, block_size)]

    def run(b):
        return _simulate_block(source, strat, scenario, sizes[b], block_rng(seed, b))

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]
    return PathOutcomes.concatenate(parts)


def _as_fraction(alpha) -> Fraction:
    return Fraction(alpha).limit_denominator(10**9)


def _exact_sum(values) -> Fraction:
    return sum((Fraction(v) for v in values), Fraction(0))


def expected_shortfall(terminal_wealths, alpha: float = 0.05) -> float:
    """Mean of the worst ``alpha`` fraction of outcomes.

    When n * alpha is not an integer the boundary outcome gets the fractional
    weight, which is the supremum of W' + E[min(W - W', 0)] / alpha. The tail
    sum is accumulated exactly so the result is the correctly rounded value.
    """
    x = np.asarray(terminal_wealths, dtype=float).ravel()
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    a = _as_fraction(alpha)
    if not 0 < a < 1:
        raise ValueError("alpha must lie in (0, 1)")
    tail = n * a
    if tail < 1:
        raise ValueError(f"need at least 1/alpha = {float(1 / a):.6g} samples, got {n}")
    k = math.ceil(tail)
    worst = np.sort(np.partition(x, k - 1)[:k])
    total = _exact_sum(worst[:-1]) + (tail - (k - 1)) * Fraction(worst[-1])
    return float(total / tail)


@dataclass(frozen=True)
class SummaryStats:
    es_alpha: float
    ew_per_withdrawal: float
    median_WT: float
    mean_median_weight: float
    alpha: float = 0.05
    n_paths: int = 0

    def as_row(self) -> dict:
        return {"es": self.es_alpha, "ew_per_withdrawal": self.ew_per_withdrawal,
                "median_WT": self.median_WT, "mean_median_weight": self.mean_median_weight}


def ew_es_summary(outcomes: PathOutcomes, alpha: float = 0.05, n_withdrawals: int | None = None) -> SummaryStats:
    """EW per withdrawal date, ES, median W_T and the time-average of the median weight."""
    if outcomes.n_paths * alpha < 1:
        raise ValueError("need at least 1/alpha paths")
    M1 = n_withdrawals or outcomes.withdrawals.shape[1]
    ew = float(np.mean(outcomes.withdrawals.sum(axis=1))) / M1
    med_p = np.median(outcomes.weights, axis=0)
    return SummaryStats(
        es_alpha=expected_shortfall(outcomes.terminal_wealth, alpha),
        ew_per_withdrawal=ew,
        median_WT=float(np.median(outcomes.terminal_wealth)),
        mean_median_weight=float(med_p.mean()) if med_p.size else 0.0,
        alpha=alpha,
        n_paths=outcomes.n_paths,
    )


FAN_FIELDS = {"weight": "weights", "withdrawal": "withdrawals", "wealth": "wealth_minus"}


def percentile_fan(outcomes: PathOutcomes, percentiles=(5, 50, 95), field: str = "wealth") -> np.ndarray:
    """Per-date empirical percentiles, shaped (n_dates, len(percentiles))."""
    if field not in FAN_FIELDS:
        raise ValueError(f"unknown fan field {field!r}")
    if outcomes.n_paths < 100:
        raise ValueError("percentile fans need at least 100 paths")
    data = getattr(outcomes, FAN_FIELDS[field])
    return np.percentile(data, percentiles, axis=0).T
