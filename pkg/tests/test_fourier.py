import numpy as np
import pytest

from arvaopt.fourier import GridMismatch, Propagator, StateGrid, alias_folds
from arvaopt.market import BASE_MARKET, MarketParams, sample_period_returns


@pytest.fixture(scope="module")
def grid():
    return StateGrid(256, 256)


@pytest.fixture(scope="module")
def prop(grid):
    return Propagator(grid, BASE_MARKET, 1.0)


def test_grid_layout(grid):
    assert grid.x[0] == pytest.approx(np.log(100) - 8) and grid.x[-1] == pytest.approx(np.log(100) + 8)
    assert np.allclose(np.diff(grid.x), grid.dx) and np.allclose(np.diff(grid.y), grid.dy)
    assert len(grid.x_ext) == 2 * grid.n_x
    assert np.allclose(grid.x_ext[grid.interior_x], grid.x)
    nodes = grid.wealth_nodes
    assert np.all(np.diff(nodes) > 0)
    assert np.array_equal(nodes[: len(grid.y_ext)], -np.exp(grid.y_ext[::-1]))


@pytest.mark.parametrize("n", [100, 4])
def test_grid_sizes_must_be_powers_of_two(n):
    with pytest.raises(ValueError):
        StateGrid(n, 64)


def test_alias_folds():
    assert alias_folds(0.146, 16 / 511, 1.0) == 1
    assert alias_folds(0.013, 16 / 127, 1.0) > 2
    assert alias_folds(0.0, 0.1, 1.0) == 32


def test_constants_are_preserved(grid, prop):
    v = np.full((len(grid.x_ext), len(grid.y_ext)), 7.25)
    out = prop.expect_2d(v)[grid.interior_x, grid.interior_y]
    assert np.max(np.abs(out / 7.25 - 1)) < 1e-6
    d = prop.expect_debt(np.full(len(grid.y_ext), -3.0))[grid.interior_y]
    assert np.max(np.abs(d / -3.0 - 1)) < 1e-6


def test_wealth_expectation_matches_simulation(grid, prop, rng):
    r = sample_period_returns(BASE_MARKET, 1.0, rng, 1_000_000)
    ers, erb = r.r_s.mean(), r.r_b.mean()
    out = prop.expect_2d(grid.wealth_ext)
    sel_x = np.nonzero((grid.x_ext > np.log(10)) & (grid.x_ext < np.log(1000)))[0]
    sel_y = np.nonzero((grid.y_ext > np.log(10)) & (grid.y_ext < np.log(1000)))[0]
    s = np.exp(grid.x_ext[sel_x])[:, None]
    b = np.exp(grid.y_ext[sel_y])[None, :]
    mc = s * ers + b * erb
    assert np.max(np.abs(out[np.ix_(sel_x, sel_y)] / mc - 1)) < 1e-3


def test_debt_expectation_includes_spread(grid, prop):
    b = -np.exp(grid.y_ext)
    out = prop.expect_debt(b)
    sel = np.nonzero((grid.y_ext > np.log(10)) & (grid.y_ext < np.log(1000)))[0]
    expected = b[sel] * np.exp(BASE_MARKET.mu_b + BASE_MARKET.mu_c_b)
    assert np.max(np.abs(out[sel] / expected - 1)) < 1e-3


def test_deterministic_market_shifts(grid):
    m = MarketParams(mu_s=0.05, mu_b=0.01)
    p = Propagator(grid, m, 1.0)
    out = p.expect_2d(grid.wealth_ext)
    s = np.exp(grid.x_ext)[:, None]
    b = np.exp(grid.y_ext)[None, :]
    exact = s * np.exp(0.05) + b * np.exp(0.01)
    inner = (slice(1, -grid.pad_x), slice(1, -grid.pad_y))
    assert np.max(np.abs(out[inner] / exact[inner] - 1)) < grid.dx**2


def test_zero_market_is_identity(grid):
    p = Propagator(grid, MarketParams(), 1.0)
    v = np.random.default_rng(3).random((len(grid.x_ext), len(grid.y_ext)))
    assert np.array_equal(p.expect_2d(v), v)


def test_shape_checked(prop):
    with pytest.raises(GridMismatch):
        prop.expect_2d(np.zeros((3, 3)))
    with pytest.raises(GridMismatch):
        prop.expect_debt(np.zeros(3))
