"""Dynamic programming for the pre-commitment EW-ES decumulation problem.

For a fixed candidate VaR level W* the auxiliary value

    V(s, b, W*, t_n^-) = sup E[ sum_{i>=n} q_i + kappa (W* + min(W_T - W*, 0) / alpha) + eps W_T ]

is computed backwards: a terminal payoff at T^+, then alternately a withdrawal
and rebalance (exhaustive search over the equity fraction) at each t_n and a
Fourier expectation step over (t_n, t_{n+1}).  The outer problem maximizes
V(0, W_0, W*, 0^-) over W*; the control computed at the maximizer is the
induced time-consistent strategy with W* held fixed.

Before a rebalance the value only depends on total wealth s + b, so it is
carried on a 1-d wealth grid and expanded onto the 2-d (log s, log b) grid for
the expectation step.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .controls import ControlTable
from .fourier import GridMismatch, Propagator, StateGrid
from .market import MarketParams
from .scenario import Scenario

log = logging.getLogger(__name__)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class BracketError(RuntimeError):
    """The outer optimum sits on the edge of the W* search interval."""


@dataclass(frozen=True)
class ObjectiveParams:
    kappa: float
    alpha: float = 0.05
    epsilon: float = -1e-4

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


@dataclass
class ValueGrid:
    """Values on the (log s, log b) grid plus the debt mirror grid b = -exp(y).

    ``wealth_values``, when present, gives the same function on
    ``grid.wealth_nodes``: the value then depends on s + b alone.
    """

    grid: StateGrid
    pos: np.ndarray
    debt: np.ndarray
    t_label: str = ""
    wealth_values: np.ndarray | None = None

    def __post_init__(self):
        if self.pos.shape != (self.grid.n_x, self.grid.n_y) or self.debt.shape != (self.grid.n_y,):
            raise GridMismatch("value arrays do not match the grid")

    @classmethod
    def from_wealth(cls, grid: StateGrid, values: np.ndarray, t_label: str = "") -> "ValueGrid":
        nodes = grid.wealth_nodes
        pos = np.interp(grid.wealth_ext[grid.interior_x, grid.interior_y], nodes, values)
        n_ext = len(grid.y_ext)
        # negative nodes are -exp(y_ext) in reverse order
        debt_ext = values[:n_ext][::-1]
        return cls(grid, pos, debt_ext[grid.interior_y].copy(), t_label, values)

    def at_wealth(self, w) -> np.ndarray:
        return np.interp(w, self.grid.wealth_nodes, self.wealth_values)

    def at_state(self, w_plus, p) -> np.ndarray:
        """Value after putting fraction p of wealth w_plus in stocks (debt if w_plus <= 0)."""
        w_plus = np.asarray(w_plus, dtype=float)
        if self.wealth_values is not None:
            return self.at_wealth(w_plus)
        p = np.broadcast_to(np.asarray(p, dtype=float), w_plus.shape)
        out = np.empty(w_plus.shape)
        solvent = w_plus > 0
        out[solvent] = _bilinear(self, w_plus[solvent] * p[solvent], w_plus[solvent] * (1 - p[solvent]))
        out[~solvent] = self._debt_value(w_plus[~solvent])
        return out

    def _debt_value(self, w) -> np.ndarray:
        g = self.grid
        z = np.log(np.maximum(-w, np.exp(g.y_min)))
        return np.interp(z, g.y, self.debt)


def _bilinear(v: ValueGrid, s, b) -> np.ndarray:
    """Linear interpolation in (log s, log b), clamped to the grid."""
    g = v.grid
    tiny = np.exp(g.x_min - 1.0)
    fx = (np.clip(np.log(np.maximum(s, tiny)), g.x_min, g.x_max) - g.x_min) / g.dx
    fy = (np.clip(np.log(np.maximum(b, tiny)), g.y_min, g.y_max) - g.y_min) / g.dy
    i = np.minimum(fx.astype(np.intp), g.n_x - 2)
    j = np.minimum(fy.astype(np.intp), g.n_y - 2)
    tx = fx - i
    ty = fy - j
    V = v.pos
    return ((1 - tx) * ((1 - ty) * V[i, j] + ty * V[i, j + 1])
            + tx * ((1 - ty) * V[i + 1, j] + ty * V[i + 1, j + 1]))


def terminal_value(grid: StateGrid, W_star: float, obj: ObjectiveParams) -> ValueGrid:
    """kappa (W* + min(W_T - W*, 0) / alpha) + eps W_T at T^+, evaluated node-wise."""
    def payoff(w):
        return obj.kappa * (W_star + np.minimum(w - W_star, 0.0) / obj.alpha) + obj.epsilon * w
    return _wealth_function(grid, payoff, "T+")


def _wealth_function(grid: StateGrid, fn, label: str) -> ValueGrid:
    """A function of s + b, evaluated exactly at the 2-d, debt and wealth nodes."""
    v = ValueGrid.from_wealth(grid, fn(grid.wealth_nodes), label)
    v.pos = fn(grid.wealth_ext[grid.interior_x, grid.interior_y])
    v.debt = fn(-np.exp(grid.y))
    return v


def propagate_period(v_next: ValueGrid, market: MarketParams | None = None, dt: float = 1.0,
                     propagator: Propagator | None = None) -> ValueGrid:
    """Conditional expectation of V(t_{n+1}^-) over one interval, giving V(t_n^+).

    Values outside the grid are taken from the wealth representation when
    available and otherwise by constant extension of the edges.
    """
    g = v_next.grid
    if propagator is None:
        propagator = Propagator(g, market, dt)
    elif propagator.grid != g:
        raise GridMismatch("propagator was built for another grid")
    if v_next.wealth_values is not None and getattr(propagator, "deterministic", False):
        a_s, a_b = propagator.shifts
        if a_s == a_b:
            # both indexes grow by the same factor: the value stays a function of wealth
            w = g.wealth_nodes
            growth = np.where(w > 0, np.exp(a_s), np.exp(a_b + propagator.market.mu_c_b * propagator.dt))
            vals = np.interp(w * growth, w, v_next.wealth_values)
            return ValueGrid.from_wealth(g, vals, "+")
    if v_next.wealth_values is not None:
        v_ext = np.interp(g.wealth_ext, g.wealth_nodes, v_next.wealth_values)
        debt_ext = v_next.wealth_values[: len(g.y_ext)][::-1]
    else:
        v_ext = np.pad(v_next.pos, ((g.pad_x, g.pad_x), (g.pad_y, g.pad_y)), mode="edge")
        debt_ext = np.pad(v_next.debt, (g.pad_y, g.pad_y), mode="edge")
    pos = propagator.expect_2d(v_ext)[g.interior_x, g.interior_y]
    debt = propagator.expect_debt(debt_ext)[g.interior_y]
    return ValueGrid(g, np.ascontiguousarray(pos), debt, "+")


@dataclass
class ControlSlice:
    w_plus: np.ndarray
    p: np.ndarray


def control_candidates(grid: StateGrid, n_p: int | None = None) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_p or grid.n_y)


def search_controls(v_plus: ValueGrid, w_plus, candidates, chunk: int = 256):
    """argmax over p of V(w p, w (1 - p), t_n^+) for each w_plus (p = 0 when w_plus <= 0).

    Ties (within round-off) go to the smallest p.  Wealth outside the grid's
    range has no resolvable control and is assigned p = 0.
    """
    w_plus = np.asarray(w_plus, dtype=float)
    p = np.zeros_like(w_plus)
    if v_plus.wealth_values is not None:
        return p, v_plus.at_wealth(w_plus)
    g = v_plus.grid
    lo = np.exp(g.y_min)
    hi = np.exp(g.x_max) + np.exp(g.y_max)
    idx = np.nonzero((w_plus >= lo) & (w_plus <= hi))[0]
    cand = np.asarray(candidates, dtype=float)
    for start in range(0, len(idx), chunk):
        rows = idx[start:start + chunk]
        w = w_plus[rows][:, None]
        vals = _bilinear(v_plus, w * cand[None, :], w * (1.0 - cand[None, :]))
        best = vals.max(axis=1)
        tol = 1e-12 * np.maximum(1.0, np.abs(best))
        p[rows] = cand[np.argmax(vals >= (best - tol)[:, None], axis=1)]
    return p, v_plus.at_state(w_plus, p)


def apply_rebalance(v_plus: ValueGrid, scenario: Scenario, n: int, extras=(), candidates=None):
    """Withdraw q_n and rebalance optimally at t_n, giving V(t_n^-) and p_n(w^+).

    ``extras`` is a sequence of (ValueGrid at t_n^+, add_withdrawal) pairs that
    are carried through the same control (e.g. expected withdrawals).
    """
    g = v_plus.grid
    nodes = g.wealth_nodes
    q = scenario.withdrawal(n, nodes)
    w_plus = nodes - q
    if candidates is None:
        candidates = control_candidates(g)
    p, best = search_controls(v_plus, w_plus, candidates)
    v_minus = ValueGrid.from_wealth(g, best + q, f"t{n}-")
    carried = []
    for e, add_q in extras:
        vals = e.at_state(w_plus, p) + (q if add_q else 0.0)
        carried.append(ValueGrid.from_wealth(g, vals, f"t{n}-"))
    return v_minus, ControlSlice(w_plus, p), carried


@dataclass
class AuxiliarySolution:
    W_star: float
    value: float
    controls: list[ControlSlice] = field(repr=False)
    p0: float = 0.0
    ew: float | None = None
    tail: float | None = None
    expected_WT: float | None = None
    v_plus0: ValueGrid | None = field(default=None, repr=False)

    def es(self, alpha: float) -> float | None:
        if self.tail is None:
            return None
        return self.W_star + self.tail / alpha


def solve_auxiliary(W_star: float, obj: ObjectiveParams, scenario: Scenario, grid: StateGrid,
                    propagator: Propagator | None = None, track: bool = False,
                    n_p: int | None = None) -> AuxiliarySolution:
    """Backward induction for fixed W*; returns V(0, W_0, W*, 0^-) and the controls.

    With ``track`` the expected total withdrawals, E[min(W_T - W*, 0)] and
    E[W_T] under the computed control are carried alongside.
    """
    M = scenario.n_rebalances
    if propagator is None:
        propagator = Propagator(grid, scenario.market, scenario.dt)
    cand = control_candidates(grid, n_p)

    v = terminal_value(grid, W_star, obj)
    extras = []
    if track:
        extras = [(_wealth_function(grid, np.zeros_like, "T+"), True),
                  (_wealth_function(grid, lambda w: np.minimum(w - W_star, 0.0), "T+"), False),
                  (_wealth_function(grid, lambda w: w, "T+"), False)]
    slices: list[ControlSlice | None] = [None] * M
    for n in range(M, 0, -1):
        v_minus, sl, carried = apply_rebalance(v, scenario, n, extras, cand)
        if n < M:
            slices[n] = sl
        v = propagate_period(v_minus, propagator=propagator)
        extras = [(propagate_period(c, propagator=propagator), add_q)
                  for c, (_, add_q) in zip(carried, extras)]

    # t_0: rebalance on the wealth grid, plus the exact initial state
    _, sl0, _ = apply_rebalance(v, scenario, 0, (), cand)
    q0 = float(scenario.withdrawal(0, scenario.w0))
    wp0 = scenario.w0 - q0
    p0, best0 = search_controls(v, np.array([wp0]), cand)
    k = np.searchsorted(sl0.w_plus, wp0)
    if k < len(sl0.w_plus) and sl0.w_plus[k] == wp0:
        sl0.p[k] = p0[0]
    else:
        sl0 = ControlSlice(np.insert(sl0.w_plus, k, wp0), np.insert(sl0.p, k, p0[0]))
    slices[0] = sl0

    sol = AuxiliarySolution(W_star, float(best0[0] + q0), slices, float(p0[0]), v_plus0=v)
    if track:
        vals = [float(e.at_state(np.array([wp0]), p0)[0]) for e, _ in extras]
        sol.ew = vals[0] + q0
        sol.tail = vals[1]
        sol.expected_WT = vals[2]
    return sol


def time_zero_values(sol: AuxiliarySolution, scenario: Scenario, w0, n_p: int | None = None) -> np.ndarray:
    """V(0, W_0, W*, 0^-) at other initial wealths, from the stored t_0^+ value."""
    w0 = np.asarray(w0, dtype=float)
    q0 = scenario.withdrawal(0, w0)
    _, best = search_controls(sol.v_plus0, w0 - q0, control_candidates(sol.v_plus0.grid, n_p))
    return best + q0


def _golden_max(f, a: float, b: float, tol: float):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


@dataclass
class PrecommitmentResult:
    W_star: float
    J: float
    controls: ControlTable
    solution: AuxiliarySolution
    scan: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    @property
    def es(self) -> float:
        return self.solution.es(self.controls.alpha)

    @property
    def ew(self) -> float:
        return self.solution.ew


def build_control_table(sol: AuxiliarySolution, obj: ObjectiveParams, scenario: Scenario,
                        grid: StateGrid, meta: dict | None = None) -> ControlTable:
    times = scenario.times[:-1]
    return ControlTable(times, [s.w_plus for s in sol.controls], [s.p for s in sol.controls],
                        sol.W_star, obj.kappa, obj.alpha, obj.epsilon,
                        {"grid": grid.spec(), **(meta or {})})


def solve_precommitment(obj: ObjectiveParams, scenario: Scenario, grid: StateGrid,
                        bracket: tuple[float, float] = (-500.0, 1500.0), n_scan: int = 129,
                        tol: float = 1e-2, scan_grid: StateGrid | None = None,
                        meta: dict | None = None, n_p: int | None = None) -> PrecommitmentResult:
    """Maximize V(0, W_0, W', 0^-) over W' and return the committed control.

    A uniform scan over ``bracket`` (optionally on a cheaper ``scan_grid``)
    locates the best cell; golden-section search then refines W* on ``grid``
    inside the neighbouring scan cells.  Ties in the scan go to the largest W'.
    """
    lo, hi = bracket
    if not hi > lo or n_scan < 3:
        raise ValueError("need a non-empty bracket and at least 3 scan points")
    t0 = time.perf_counter()
    prop = Propagator(grid, scenario.market, scenario.dt)
    sgrid = scan_grid or grid
    sprop = prop if sgrid == grid else Propagator(sgrid, scenario.market, scenario.dt)

    Ws = np.linspace(lo, hi, n_scan)
    vals = np.array([solve_auxiliary(w, obj, scenario, sgrid, sprop, n_p=n_p).value for w in Ws])
    best = vals.max()
    i = int(np.nonzero(vals >= best - 1e-12 * max(1.0, abs(best)))[0][-1])
    if i == 0 or i == n_scan - 1:
        raise BracketError(f"W* optimum at bracket edge {Ws[i]:.4g}; widen the bracket")
    log.info("W* scan best %.4f at %.4f (%.1fs)", best, Ws[i], time.perf_counter() - t0)

    cache: dict[float, float] = {}

    def f(w):
        if w not in cache:
            cache[w] = solve_auxiliary(w, obj, scenario, grid, prop, n_p=n_p).value
        return cache[w]

    # The scan grid can misplace the optimum by a cell: walk uphill on the
    # solve grid until the middle of three scan points beats both neighbours.
    h = Ws[1] - Ws[0]
    mid = float(Ws[i])
    while True:
        left, right = f(mid - h), f(mid + h)
        if f(mid) >= left and f(mid) >= right:
            break
        mid = mid - h if left > right else mid + h
        if not lo < mid < hi:
            raise BracketError(f"W* optimum at bracket edge {mid:.4g}; widen the bracket")
    w_star, _ = _golden_max(f, mid - h, mid + h, tol)
    if f(mid) > f(w_star):
        w_star = mid
    sol = solve_auxiliary(w_star, obj, scenario, grid, prop, track=True, n_p=n_p)
    table = build_control_table(sol, obj, scenario, grid, meta)
    log.info("W*=%.4f J=%.4f (%.1fs)", w_star, sol.value, time.perf_counter() - t0)
    return PrecommitmentResult(float(w_star), sol.value, table, sol, (Ws, vals))
