"""Bivariate double-exponential jump diffusion for a stock index and a bond index.

Both indexes follow

    dX/X = (mu - lam * kappa) dt + sigma dZ + d(sum (xi_i - 1))

with log(xi) double-exponentially distributed.  Diffusions are correlated,
jump processes are independent.  All rates are real and annualized.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class JumpParams:
    """Intensity and double-exponential log-jump size distribution."""

    lam: float = 0.0
    p_up: float = 0.5
    eta1: float = np.inf
    eta2: float = np.inf

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"jump intensity must be >= 0, got {self.lam}")
        if not 0.0 <= self.p_up <= 1.0:
            raise ValueError(f"p_up must lie in [0, 1], got {self.p_up}")
        if not self.eta1 > 1.0:
            raise ValueError(f"eta1 must exceed 1 for a finite mean jump, got {self.eta1}")
        if not self.eta2 > 0.0:
            raise ValueError(f"eta2 must be positive, got {self.eta2}")

    @property
    def kappa(self) -> float:
        return jump_compensator(self)

    def log_jump_cf(self, omega):
        """E[exp(i omega Y)] for a single log jump Y."""
        omega = np.asarray(omega, dtype=complex)
        up = 0.0 if self.p_up == 0 else self._ratio(self.eta1, -1j * omega) * self.p_up
        down = 0.0 if self.p_up == 1 else self._ratio(self.eta2, 1j * omega) * (1 - self.p_up)
        return up + down

    @staticmethod
    def _ratio(eta, shift):
        # eta / (eta + shift), with eta = inf meaning a zero-size jump
        if np.isinf(eta):
            return np.ones_like(shift)
        return eta / (eta + shift)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw log jump sizes."""
        up = rng.random(size) < self.p_up
        e = rng.standard_exponential(size)
        with np.errstate(divide="ignore"):
            scale = np.where(up, 1.0 / self.eta1, -1.0 / self.eta2)
        return e * scale


def jump_compensator(jp: JumpParams) -> float:
    """kappa = E[xi - 1] for the double-exponential jump multiplier."""
    if not jp.eta1 > 1.0:
        raise ValueError("eta1 <= 1: the jump multiplier has infinite mean")
    up = 1.0 if np.isinf(jp.eta1) else jp.eta1 / (jp.eta1 - 1.0)
    down = 1.0 if np.isinf(jp.eta2) else jp.eta2 / (jp.eta2 + 1.0)
    return jp.p_up * up + (1.0 - jp.p_up) * down - 1.0


NO_JUMPS = JumpParams()


@dataclass(frozen=True)
class MarketParams:
    mu_s: float = 0.0
    sigma_s: float = 0.0
    jump_s: JumpParams = field(default_factory=JumpParams)
    mu_b: float = 0.0
    sigma_b: float = 0.0
    jump_b: JumpParams = field(default_factory=JumpParams)
    rho_sb: float = 0.0
    mu_c_b: float = 0.0

    def __post_init__(self):
        if self.sigma_s < 0 or self.sigma_b < 0:
            raise ValueError("volatilities must be non-negative")
        if abs(self.rho_sb) > 1:
            raise ValueError(f"|rho_sb| must be <= 1, got {self.rho_sb}")
        if self.mu_c_b < 0:
            raise ValueError("borrowing spread must be non-negative")

    def log_drifts(self, dt: float) -> tuple[float, float]:
        """Mean of the diffusive part of the log return over dt, per index."""
        a_s = (self.mu_s - self.jump_s.lam * jump_compensator(self.jump_s) - 0.5 * self.sigma_s**2) * dt
        a_b = (self.mu_b - self.jump_b.lam * jump_compensator(self.jump_b) - 0.5 * self.sigma_b**2) * dt
        return a_s, a_b

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("jump_s", "jump_b"):
            d[k] = dict(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MarketParams":
        d = dict(d)
        for k in ("jump_s", "jump_b"):
            if k in d and not isinstance(d[k], JumpParams):
                d[k] = JumpParams(**d[k])
        return cls(**d)


# Threshold (beta = 3) fit to real CRSP value-weighted / 30-day T-bill indexes,
# monthly 1926:1-2018:12, with a 2% borrowing spread.
BASE_MARKET = MarketParams(
    mu_s=0.08607,
    sigma_s=0.14600,
    jump_s=JumpParams(lam=0.32258, p_up=0.23333, eta1=4.3578, eta2=5.5089),
    mu_b=0.00454,
    sigma_b=0.01301,
    jump_b=JumpParams(lam=0.51610, p_up=0.39580, eta1=65.875, eta2=57.737),
    rho_sb=0.08311,
    mu_c_b=0.02,
)

# Same data, geometric Brownian motion fit.
BASE_MARKET_GBM = MarketParams(
    mu_s=0.08044, sigma_s=0.18460, mu_b=0.00448, sigma_b=0.01814, rho_sb=0.05870, mu_c_b=0.02
)


class PeriodReturns(NamedTuple):
    r_s: np.ndarray
    r_b: np.ndarray


def _compound_jumps(jp: JumpParams, dt: float, n: int, rng: np.random.Generator):
    counts = rng.poisson(jp.lam * dt, size=n)
    total = int(counts.sum())
    if total == 0:
        return np.zeros(n), counts
    sizes = jp.sample(rng, total)
    owner = np.repeat(np.arange(n), counts)
    return np.bincount(owner, weights=sizes, minlength=n), counts


def sample_log_returns(params: MarketParams, dt: float, rng: np.random.Generator, size: int = 1,
                       return_counts: bool = False):
    """Exact draws of (log r_s, log r_b) over one interval of length dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    a_s, a_b = params.log_drifts(dt)
    z1 = rng.standard_normal(size)
    z2 = rng.standard_normal(size)
    rho = params.rho_sb
    zb = rho * z1 + np.sqrt(1.0 - rho * rho) * z2
    js, ns = _compound_jumps(params.jump_s, dt, size, rng)
    jb, nb = _compound_jumps(params.jump_b, dt, size, rng)
    sq = np.sqrt(dt)
    x_s = a_s + params.sigma_s * sq * z1 + js
    x_b = a_b + params.sigma_b * sq * zb + jb
    if return_counts:
        return x_s, x_b, ns, nb
    return x_s, x_b


def sample_period_returns(params: MarketParams, dt: float, stream: np.random.Generator,
                          size: int = 1) -> PeriodReturns:
    """Gross real returns (r_s, r_b) over dt; the borrowing spread is not applied."""
    x_s, x_b = sample_log_returns(params, dt, stream, size)
    return PeriodReturns(np.exp(x_s), np.exp(x_b))


def joint_log_characteristic(params: MarketParams, dt: float, omega_s, omega_b):
    """E[exp(i(omega_s X_s + omega_b X_b))] for the joint log return over dt.

    Broadcasts over ``omega_s`` and ``omega_b``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    ws = np.asarray(omega_s, dtype=float)
    wb = np.asarray(omega_b, dtype=float)
    a_s, a_b = params.log_drifts(dt)
    ss, sb, rho = params.sigma_s, params.sigma_b, params.rho_sb
    expo = (1j * (ws * a_s + wb * a_b)
            - 0.5 * dt * (ss * ss * ws * ws + 2 * rho * ss * sb * ws * wb + sb * sb * wb * wb))
    if params.jump_s.lam > 0:
        expo = expo + params.jump_s.lam * dt * (params.jump_s.log_jump_cf(ws) - 1.0)
    if params.jump_b.lam > 0:
        expo = expo + params.jump_b.lam * dt * (params.jump_b.log_jump_cf(wb) - 1.0)
    return np.exp(expo)


def bond_log_characteristic(params: MarketParams, dt: float, omega, borrowing: bool = False):
    """Marginal characteristic function of the bond log return, optionally with spread."""
    out = joint_log_characteristic(params, dt, 0.0, omega)
    if borrowing:
        out = out * np.exp(1j * np.asarray(omega) * params.mu_c_b * dt)
    return out
