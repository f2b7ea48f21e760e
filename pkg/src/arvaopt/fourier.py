"""Fourier propagation of value functions across one rebalancing interval.

Values live on equally spaced grids in log s and log b.  The expectation
E[V(x + X)] over the joint log return X is computed as a periodic convolution
whose kernel is the transition density integrated against the linear
interpolation basis (hat functions).  In frequency space that kernel is

    M(w) = sum_m phi(w + 2 pi m / dx) * sinc^2((w + 2 pi m / dx) dx / 2)

so every weight is a probability mass of the linear interpolant, constants are
reproduced exactly and narrow densities (the bond index moves less than one
grid cell per year) are handled without ringing.  The grid is padded on every
side before the FFT so that wrap-around only pollutes the padding.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft as sfft

from .market import MarketParams, bond_log_characteristic, joint_log_characteristic

LOG_CENTER = float(np.log(100.0))
HALF_WIDTH = 8.0


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class StateGrid:
    """Log-price grid for (s, b > 0) plus a mirror grid for debt (s = 0, b < 0).

    Monetary units are thousands of dollars.  ``pad`` extra nodes are added on
    each side of every axis for the FFT; the padded size is n + 2 * pad.
    """

    n_x: int = 512
    n_y: int = 512
    x_min: float = LOG_CENTER - HALF_WIDTH
    x_max: float = LOG_CENTER + HALF_WIDTH
    pad_frac: float = 0.5
    # the 1-d wealth grid steps by min(dx, dy) / wealth_refine in log wealth
    wealth_refine: int = 8

    def __post_init__(self):
        for n in (self.n_x, self.n_y):
            if n < 8 or n & (n - 1):
                raise ValueError("grid sizes must be powers of two (>= 8)")
        if not self.x_max > self.x_min:
            raise ValueError("empty domain")
        if self.wealth_refine < 1:
            raise ValueError("wealth_refine must be >= 1")

    @property
    def y_min(self) -> float:
        return self.x_min

    @property
    def y_max(self) -> float:
        return self.x_max

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_x)

    @cached_property
    def y(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.n_y)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.n_y - 1)

    @property
    def pad_x(self) -> int:
        return int(round(self.pad_frac * self.n_x))

    @property
    def pad_y(self) -> int:
        return int(round(self.pad_frac * self.n_y))

    @cached_property
    def x_ext(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(-self.pad_x, self.n_x + self.pad_x)

    @cached_property
    def y_ext(self) -> np.ndarray:
        return self.y_min + self.dy * np.arange(-self.pad_y, self.n_y + self.pad_y)

    @property
    def interior_x(self) -> slice:
        return slice(self.pad_x, self.pad_x + self.n_x)

    @property
    def interior_y(self) -> slice:
        return slice(self.pad_y, self.pad_y + self.n_y)

    @cached_property
    def wealth_ext(self) -> np.ndarray:
        """s + b at every padded (x, y) node."""
        return np.exp(self.x_ext)[:, None] + np.exp(self.y_ext)[None, :]

    @cached_property
    def wealth_nodes(self) -> np.ndarray:
        """1-d total-wealth grid covering the padded domain, both signs.

        Negative nodes are exactly -exp(y_ext) so debt values need no
        interpolation; positive nodes are log spaced at a fraction of the grid step.
        """
        lo = min(self.x_ext[0], self.y_ext[0])
        hi = np.log(np.exp(self.x_ext[-1]) + np.exp(self.y_ext[-1]))
        h = min(self.dx, self.dy) / self.wealth_refine
        pos = np.exp(np.linspace(lo, hi, int(np.ceil((hi - lo) / h)) + 1))
        neg = -np.exp(self.y_ext[::-1])
        return np.concatenate((neg, [0.0], pos))

    def spec(self) -> dict:
        return {"n_x": self.n_x, "n_y": self.n_y, "x_min": self.x_min, "x_max": self.x_max,
                "pad_frac": self.pad_frac, "wealth_refine": self.wealth_refine}


def _sinc2(z):
    return np.sinc(z / np.pi) ** 2


def alias_folds(sigma: float, dx: float, dt: float, max_folds: int = 32) -> int:
    """Aliases needed before the diffusive factor exp(-sigma^2 w^2 dt / 2) drops below ~1e-12."""
    per_fold = sigma * np.sqrt(dt) * 2 * np.pi / dx
    if per_fold <= 0:
        return max_folds
    return int(min(max_folds, max(1, np.ceil(7.5 / per_fold))))


def _is_deterministic(market: MarketParams) -> bool:
    return (market.sigma_s == 0 and market.sigma_b == 0
            and market.jump_s.lam == 0 and market.jump_b.lam == 0)


def _shift_linear(v: np.ndarray, shift: float, h: float, axis: int) -> np.ndarray:
    """v(x + shift) by linear interpolation along one axis, edges held constant."""
    if shift == 0.0:
        return v
    k = int(np.floor(shift / h))
    frac = shift / h - k
    n = v.shape[axis]
    idx = np.clip(np.arange(n) + k, 0, n - 1)
    idx1 = np.clip(idx + 1, 0, n - 1)
    a = np.take(v, idx, axis=axis)
    b = np.take(v, idx1, axis=axis)
    return (1 - frac) * a + frac * b


class Propagator:
    """Precomputed frequency-space kernels for one (market, dt, grid).

    A market without volatility or jumps moves log prices by a constant; the
    hat-function kernel is then plain linear interpolation and is applied in
    real space.
    """

    def __init__(self, grid: StateGrid, market: MarketParams, dt: float,
                 folds: tuple[int, int] | None = None):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.grid = grid
        self.market = market
        self.dt = dt
        self.deterministic = _is_deterministic(market)
        if self.deterministic:
            self.shifts = market.log_drifts(dt)
            return
        if folds is None:
            folds = (alias_folds(market.sigma_s, grid.dx, dt), alias_folds(market.sigma_b, grid.dy, dt))
        self.folds = folds
        nx, ny = len(grid.x_ext), len(grid.y_ext)
        wx = 2 * np.pi * sfft.fftfreq(nx, grid.dx)
        wy = 2 * np.pi * sfft.rfftfreq(ny, grid.dy)
        kx, ky = folds
        mult = np.zeros((nx, len(wy)), dtype=complex)
        for mx in range(-kx, kx + 1):
            ox = wx + 2 * np.pi * mx / grid.dx
            sx = _sinc2(ox * grid.dx / 2)
            for my in range(-ky, ky + 1):
                oy = wy + 2 * np.pi * my / grid.dy
                sy = _sinc2(oy * grid.dy / 2)
                mult += (joint_log_characteristic(market, dt, ox[:, None], oy[None, :])
                         * sx[:, None] * sy[None, :])
        self.mult2d = mult

        wz = 2 * np.pi * sfft.rfftfreq(ny, grid.dy)
        m1 = np.zeros(len(wz), dtype=complex)
        for my in range(-ky, ky + 1):
            oz = wz + 2 * np.pi * my / grid.dy
            m1 += bond_log_characteristic(market, dt, oz, borrowing=True) * _sinc2(oz * grid.dy / 2)
        self.mult_debt = m1

    def expect_2d(self, v_ext: np.ndarray) -> np.ndarray:
        """E[v(x + X_s, y + X_b)] on the padded grid (only the interior is reliable)."""
        g = self.grid
        if v_ext.shape != (len(g.x_ext), len(g.y_ext)):
            raise GridMismatch(f"expected shape {(len(g.x_ext), len(g.y_ext))}, got {v_ext.shape}")
        if self.deterministic:
            out = _shift_linear(v_ext, self.shifts[0], g.dx, 0)
            return _shift_linear(out, self.shifts[1], g.dy, 1)
        return sfft.irfft2(sfft.rfft2(v_ext) * self.mult2d, s=v_ext.shape)

    def expect_debt(self, v_ext: np.ndarray) -> np.ndarray:
        """E[v(z + X_b + spread dt)] on the padded debt grid, z = log(-b)."""
        g = self.grid
        if v_ext.shape != (len(g.y_ext),):
            raise GridMismatch(f"expected shape {(len(g.y_ext),)}, got {v_ext.shape}")
        if self.deterministic:
            return _shift_linear(v_ext, self.shifts[1] + self.market.mu_c_b * self.dt, g.dy, 0)
        return sfft.irfft(sfft.rfft(v_ext) * self.mult_debt, n=len(v_ext))
