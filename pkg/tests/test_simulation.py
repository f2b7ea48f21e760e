from fractions import Fraction

import numpy as np
import pytest

from arvaopt.controls import ControlTable
from arvaopt.market import BASE_MARKET, MarketParams
from arvaopt.mortality import ArvaConfig
from arvaopt.scenario import Scenario
from arvaopt.simulation import (PathOutcomes, StationaryBootstrap, Strategy, SyntheticMarket, ew_es_summary,
                                expected_shortfall, percentile_fan, simulate_strategy,
                                stationary_block_bootstrap)


def dual_es(x, alpha):
    """sup over sample points W' of W' + mean(min(x - W', 0)) / alpha, in exact arithmetic."""
    fx = [Fraction(v) for v in x]
    a = Fraction(alpha).limit_denominator(10**9)
    n = len(fx)
    return max(w + sum(min(v - w, 0) for v in fx) / (n * a) for w in set(fx))


def test_es_examples():
    assert expected_shortfall(np.arange(1, 101), 0.05) == 3.0
    assert expected_shortfall(np.full(40, -7.25), 0.05) == -7.25
    assert expected_shortfall(np.full(40, -7.25), 0.5) == -7.25


def test_es_fractional_tail():
    # 30 samples at 5%: 1.5 outcomes in the tail, the second worst gets half weight
    x = np.arange(30.0)
    assert expected_shortfall(x, 0.05) == pytest.approx((0 + 0.5 * 1) / 1.5, rel=1e-15)


@pytest.mark.parametrize("n", [20, 37, 100, 211])
def test_es_equals_dual_form(rng, n):
    x = np.round(rng.normal(size=n) * 100, 3)
    assert expected_shortfall(x, 0.05) == float(dual_es(x, 0.05))


def test_es_errors():
    with pytest.raises(ValueError):
        expected_shortfall([], 0.05)
    with pytest.raises(ValueError):
        expected_shortfall(np.arange(19.0), 0.05)
    with pytest.raises(ValueError):
        expected_shortfall(np.arange(100.0), 1.0)


def test_zero_market_accounting():
    sc = Scenario(market=MarketParams(), arva=ArvaConfig(q_min=40.0, q_max=40.0))
    out = simulate_strategy(SyntheticMarket(sc.market), Strategy.constant_q(0.5, 40.0), sc, 50, seed=3)
    assert np.all(out.terminal_wealth == 1000.0 - 31 * 40.0)
    assert np.all(out.withdrawals == 40.0)
    # the ARVA rule with both bounds at 40 gives the same cash flows
    out2 = simulate_strategy(SyntheticMarket(sc.market), Strategy.constant_arva(0.5), sc, 50, seed=3)
    assert np.all(out2.terminal_wealth == -240.0)


def test_thirty_withdrawal_toggle():
    sc = Scenario(market=MarketParams(), arva=ArvaConfig(q_min=40.0, q_max=40.0), final_withdrawal=False)
    out = simulate_strategy(SyntheticMarket(sc.market), Strategy.constant_q(0.0, 40.0), sc, 20, seed=0)
    assert np.all(out.terminal_wealth == 1000.0 - 30 * 40.0)
    assert sc.n_withdrawals == 30
    assert ew_es_summary(out, 0.05, sc.n_withdrawals).ew_per_withdrawal == 40.0


@pytest.fixture(scope="module")
def arva_paths():
    sc = Scenario()
    return sc, simulate_strategy(SyntheticMarket(sc.market), Strategy.constant_arva(0.7), sc, 20000, seed=11)


def test_wealth_accounting_identity(arva_paths):
    _, out = arva_paths
    assert np.array_equal(out.wealth_plus, out.wealth_minus - out.withdrawals)


def test_arva_withdrawal_bounds(arva_paths):
    sc, out = arva_paths
    assert np.all((out.withdrawals >= sc.arva.q_min) & (out.withdrawals <= sc.arva.q_max))


def test_absorbing_debt(arva_paths):
    _, out = arva_paths
    broke = out.wealth_plus[:, :-1] <= 0
    assert broke.any()
    assert np.all(out.weights[broke] == 0)
    # once insolvent, wealth stays negative at every later date
    first = np.argmax(broke, axis=1)
    for i in np.flatnonzero(broke.any(axis=1))[:200]:
        assert np.all(out.wealth_plus[i, first[i]:] <= 0)


def test_debt_grows_with_spread():
    mkt = MarketParams(mu_b=0.01, mu_c_b=0.02)
    sc = Scenario(market=mkt, arva=ArvaConfig(q_min=40.0, q_max=40.0))
    out = simulate_strategy(SyntheticMarket(mkt), Strategy.constant_q(0.0, 40.0), sc, 5, seed=0)
    w = out.wealth_plus[0]
    k = int(np.argmax(w < 0))
    assert out.wealth_minus[0, k + 1] == pytest.approx(w[k] * np.exp(0.03), rel=1e-12)


def test_reproducible_across_workers():
    sc = Scenario()
    strat = Strategy.constant_arva(0.4)
    src = SyntheticMarket(sc.market)
    a = ew_es_summary(simulate_strategy(src, strat, sc, 40000, seed=5, workers=1))
    b = ew_es_summary(simulate_strategy(src, strat, sc, 40000, seed=5, workers=4))
    assert a == b
    c = ew_es_summary(simulate_strategy(src, strat, sc, 40000, seed=6, workers=1))
    assert c != a


def test_strategy_validation():
    with pytest.raises(ValueError):
        Strategy("constant-weight-arva")
    with pytest.raises(ValueError):
        Strategy.constant_arva(1.5)
    with pytest.raises(ValueError):
        Strategy("constant-weight-constant-q", p_const=0.5)
    with pytest.raises(ValueError):
        Strategy("bogus", p_const=0.5)


def test_control_table_strategy_matches_constant():
    sc = Scenario()
    w = [np.array([-10.0, 0.0, 1e-12, 5000.0])] * sc.n_rebalances
    p = [np.array([0.0, 0.0, 0.3, 0.3])] * sc.n_rebalances
    table = ControlTable(sc.times[:-1], w, p, 0.0, 2.5, 0.05, -1e-4)
    src = SyntheticMarket(sc.market)
    a = simulate_strategy(src, Strategy.optimal(table), sc, 2000, seed=2)
    b = simulate_strategy(src, Strategy.constant_arva(0.3), sc, 2000, seed=2)
    assert np.allclose(a.terminal_wealth, b.terminal_wealth, rtol=1e-12)


def test_identical_paths_summary():
    q = np.tile(np.arange(31.0), (40, 1))
    w = np.full((40, 31), 12.5)
    out = PathOutcomes(q, w + q, w, np.full((40, 30), 0.25))
    st = ew_es_summary(out)
    assert st.ew_per_withdrawal == 15.0
    assert st.es_alpha == 12.5 and st.median_WT == 12.5
    assert st.mean_median_weight == 0.25
    fan = percentile_fan(PathOutcomes(*(np.tile(a, (3, 1)) for a in (q, w + q, w, out.weights))), field="wealth")
    assert np.allclose(fan, (w + q)[0][:, None])


def test_summary_es_below_quantile(arva_paths):
    _, out = arva_paths
    st = ew_es_summary(out)
    assert st.es_alpha <= np.quantile(out.terminal_wealth, 0.05)


def test_fan_preconditions(arva_paths):
    _, out = arva_paths
    with pytest.raises(ValueError):
        percentile_fan(out, field="equity")
    small = PathOutcomes(out.withdrawals[:50], out.wealth_minus[:50], out.wealth_plus[:50], out.weights[:50])
    with pytest.raises(ValueError):
        percentile_fan(small)
    fan = percentile_fan(out, (5, 50, 95), "withdrawal")
    assert fan.shape == (31, 3)
    assert np.all(np.diff(fan, axis=1) >= 0)


def test_bootstrap_infinite_block_reproduces_history(rng):
    ls, lb = rng.normal(size=(2, 360)) * 0.03
    bs = StationaryBootstrap(ls, lb, np.inf, first_start=0)
    idx = bs.sample_indices(rng, 3, 360)
    assert np.array_equal(idx, np.tile(np.arange(360)[:, None], (1, 3)))
    r_s, r_b = bs.draw(rng, 2, 30, 1.0)
    assert np.allclose(np.log(r_s[:, 0]), ls.reshape(30, 12).sum(axis=1))
    assert np.allclose(np.log(r_b[:, 1]), lb.reshape(30, 12).sum(axis=1))


def test_bootstrap_samples_paired_history(rng):
    ls, lb = rng.normal(size=(2, 120))
    bs = stationary_block_bootstrap(ls, lb, 2.0)
    idx = bs.sample_indices(rng, 500, 60)
    assert idx.min() >= 0 and idx.max() < 120
    # consecutive months either continue the block (with wrap-around) or restart
    cont = (idx[1:] == (idx[:-1] + 1) % 120)
    assert 0.9 < cont.mean() < 0.98  # restart probability 1/24


def test_bootstrap_block_length_mean(rng):
    bs = StationaryBootstrap(np.zeros(1000), np.zeros(1000), 2.0)
    idx = bs.sample_indices(rng, 4000, 240)
    restarts = (idx[1:] != (idx[:-1] + 1) % 1000).mean()
    assert restarts == pytest.approx(1 / 24, rel=0.05)


def test_bootstrap_validation():
    with pytest.raises(ValueError):
        StationaryBootstrap(np.zeros(3), np.zeros(3), 0.0)
    with pytest.raises(ValueError):
        StationaryBootstrap(np.zeros(3), np.zeros(4), 2.0)


def test_synthetic_mean_return(rng):
    r_s, r_b = SyntheticMarket(BASE_MARKET).draw(rng, 200000, 1, 1.0)
    assert r_s.mean() == pytest.approx(np.exp(BASE_MARKET.mu_s), rel=0.005)
    assert r_b.mean() == pytest.approx(np.exp(BASE_MARKET.mu_b), rel=0.001)
