"""Threshold-based estimation of jump-diffusion and GBM parameters from monthly returns."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .market import JumpParams, MarketParams, jump_compensator

MONTH = 1.0 / 12.0
MAX_ITER = 100
# Smallest admissible up-jump rate; below 1 the jump multiplier has no mean.
ETA1_FLOOR = 1.01


class EstimationError(RuntimeError):
    pass


class DegenerateSeriesError(EstimationError):
    pass


class DataError(ValueError):
    """Malformed market data file."""


class EstimationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ReturnSeries:
    """Monthly log returns labelled by the month in which each return ends."""

    timestamps: np.ndarray
    log_returns: np.ndarray
    dt: float = MONTH

    def __post_init__(self):
        ts = np.asarray(self.timestamps)
        r = np.asarray(self.log_returns, dtype=float)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "log_returns", r)
        if ts.shape != r.shape or r.ndim != 1:
            raise ValueError("timestamps and log_returns must be 1-d and of equal length")
        if np.issubdtype(ts.dtype, np.datetime64) and ts.size > 1:
            steps = np.diff(ts.astype("datetime64[M]").astype(np.int64))
            if np.any(steps != 1):
                raise DataError("return series has missing or repeated months")

    def __len__(self) -> int:
        return self.log_returns.size

    @property
    def years(self) -> float:
        return len(self) * self.dt

    @classmethod
    def from_returns(cls, log_returns, start: str = "1926-02", dt: float = MONTH) -> "ReturnSeries":
        r = np.asarray(log_returns, dtype=float)
        ts = np.datetime64(start, "M") + np.arange(r.size)
        return cls(ts, r, dt)


@dataclass(frozen=True)
class JumpDetection:
    sigma_hat: float
    jump_indices: np.ndarray
    mean_diffusive: float
    beta: float
    iterations: int

    @property
    def n_jumps(self) -> int:
        return int(self.jump_indices.size)

    def mask(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        m[self.jump_indices] = True
        return m


def _flag(r: np.ndarray, keep: np.ndarray, beta: float, dt: float):
    """One threshold pass: statistics from the unflagged returns, then new flags."""
    mean = float(r[keep].mean())
    sigma = float(r[keep].std(ddof=1)) / np.sqrt(dt)
    return np.abs(r - mean) > beta * sigma * np.sqrt(dt), mean, sigma


def detect_jumps(series: ReturnSeries, beta: float = 3.0) -> JumpDetection:
    """Flag returns more than beta diffusive standard deviations from the diffusive mean.

    Starting from the full sample, the mean and volatility are re-estimated
    from the unflagged returns until the flagged set stops changing.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    r = series.log_returns
    if r.size < 24:
        raise ValueError("need at least 24 returns")
    flagged = np.zeros(r.size, dtype=bool)
    for it in range(1, MAX_ITER + 1):
        new, mean, sigma = _flag(r, ~flagged, beta, series.dt)
        if sigma == 0.0 or np.ptp(r[~flagged]) == 0.0:
            raise DegenerateSeriesError("zero diffusive volatility: the threshold is degenerate")
        if new.all() or (~new).sum() < 2:
            raise DegenerateSeriesError("every return flagged as a jump")
        if np.array_equal(new, flagged):
            return JumpDetection(sigma, np.flatnonzero(flagged), mean, beta, it)
        flagged = new
    raise EstimationError(f"jump detection did not settle within {MAX_ITER} iterations")


def is_fixed_point(series: ReturnSeries, det: JumpDetection) -> bool:
    """Re-applying the threshold at the returned estimates reproduces the same jumps."""
    r = series.log_returns
    again, _, _ = _flag(r, ~det.mask(r.size), det.beta, series.dt)
    return np.array_equal(np.flatnonzero(again), det.jump_indices)


class JumpDiffusionFit(NamedTuple):
    mu: float
    sigma: float
    jumps: JumpParams
    detection: JumpDetection


def _mean_log_jump(jp: JumpParams) -> float:
    up = 0.0 if np.isinf(jp.eta1) else jp.p_up / jp.eta1
    down = 0.0 if np.isinf(jp.eta2) else (1 - jp.p_up) / jp.eta2
    return up - down


def fit_jump_diffusion(series: ReturnSeries, beta: float = 3.0) -> JumpDiffusionFit:
    """Annualized (mu, sigma, jump law) from threshold-separated returns.

    Jump sizes are the flagged returns less the diffusive mean.  mu is the
    uncompensated drift, chosen so the model's expected log return matches
    the full-sample mean.
    """
    det = detect_jumps(series, beta)
    r = series.log_returns
    sizes = r[det.jump_indices] - det.mean_diffusive
    lam = det.n_jumps / series.years
    up, down = sizes[sizes > 0], sizes[sizes < 0]
    if det.n_jumps == 0:
        jp = JumpParams()
    else:
        p_up = up.size / det.n_jumps
        eta1 = 1.0 / up.mean() if up.size else np.inf
        eta2 = 1.0 / -down.mean() if down.size else np.inf
        if eta1 <= ETA1_FLOOR:
            warnings.warn(f"estimated eta1={eta1:.4g} raised to {ETA1_FLOOR}", EstimationWarning, stacklevel=2)
            eta1 = ETA1_FLOOR
        jp = JumpParams(lam, p_up, eta1, eta2)
    sigma = det.sigma_hat
    mean_rate = float(r.mean()) / series.dt
    mu = mean_rate + 0.5 * sigma**2 + jp.lam * (jump_compensator(jp) - _mean_log_jump(jp))
    return JumpDiffusionFit(mu, sigma, jp, det)


def fit_gbm(series: ReturnSeries) -> tuple[float, float]:
    r = series.log_returns
    if r.size < 2:
        raise ValueError("need at least two returns")
    sigma = float(r.std(ddof=1)) / np.sqrt(series.dt)
    return float(r.mean()) / series.dt + 0.5 * sigma**2, sigma


def estimate_correlation(s: ReturnSeries, b: ReturnSeries, jumps_s=(), jumps_b=()) -> float:
    """Correlation over the months flagged as a jump in neither series."""
    if len(s) != len(b):
        raise ValueError("series are not aligned")
    if np.issubdtype(s.timestamps.dtype, np.datetime64) and not np.array_equal(s.timestamps, b.timestamps):
        raise ValueError("series are not aligned")
    keep = np.ones(len(s), dtype=bool)
    keep[np.asarray(jumps_s, dtype=int)] = False
    keep[np.asarray(jumps_b, dtype=int)] = False
    if keep.sum() < 2:
        raise EstimationError("fewer than two common non-jump months")
    x, y = s.log_returns[keep], b.log_returns[keep]
    if x.std() == 0 or y.std() == 0:
        raise DegenerateSeriesError("constant series has no correlation")
    return float(np.corrcoef(x, y)[0, 1])


@dataclass(frozen=True)
class Calibration:
    market: MarketParams
    stock: JumpDiffusionFit | None
    bond: JumpDiffusionFit | None
    model: str


def calibrate_market(stock: ReturnSeries, bond: ReturnSeries, beta: float = 3.0,
                     model: str = "jump-diffusion", mu_c_b: float = 0.02) -> Calibration:
    """Fit both indexes and their correlation into one market parameter set."""
    if model == "gbm":
        mu_s, sig_s = fit_gbm(stock)
        mu_b, sig_b = fit_gbm(bond)
        rho = estimate_correlation(stock, bond)
        return Calibration(MarketParams(mu_s, sig_s, JumpParams(), mu_b, sig_b, JumpParams(), rho, mu_c_b),
                           None, None, model)
    if model != "jump-diffusion":
        raise ValueError(f"unknown model {model!r}")
    fs, fb = fit_jump_diffusion(stock, beta), fit_jump_diffusion(bond, beta)
    rho = estimate_correlation(stock, bond, fs.detection.jump_indices, fb.detection.jump_indices)
    mkt = MarketParams(fs.mu, fs.sigma, fs.jumps, fb.mu, fb.sigma, fb.jumps, rho, mu_c_b)
    return Calibration(mkt, fs, fb, model)


def ingest_market_csv(path) -> tuple[ReturnSeries, ReturnSeries]:
    """Real monthly log returns of the stock and bill indexes, deflated by the CPI.

    Dates may be written YYYY-MM or YYYY-MM-DD; each return is labelled with
    the month it ends in.
    """
    cols = ("date", "stock_index", "bill_index", "cpi")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in cols if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"missing columns: {', '.join(missing)}")
        rows = list(reader)
    if len(rows) < 2:
        raise DataError("need at least two monthly observations")
    try:
        months = np.array([np.datetime64(row["date"].strip()[:7], "M") for row in rows])
        levels = np.array([[float(row[c]) for c in cols[1:]] for row in rows])
    except ValueError as exc:
        raise DataError(f"unparseable value: {exc}") from None
    if not np.all(np.isfinite(levels)) or np.any(levels <= 0):
        raise DataError("index and CPI levels must be positive")
    steps = np.diff(months.astype(np.int64))
    if np.any(steps != 1):
        k = int(np.flatnonzero(steps != 1)[0])
        raise DataError(f"months not consecutive between {months[k]} and {months[k + 1]}")
    real = np.log(levels[:, :2]) - np.log(levels[:, 2:3])
    ret = np.diff(real, axis=0)
    return ReturnSeries(months[1:], ret[:, 0]), ReturnSeries(months[1:], ret[:, 1])
