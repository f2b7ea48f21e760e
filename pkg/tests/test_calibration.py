import warnings

import numpy as np
import pytest

from arvaopt.calibration import (DataError, DegenerateSeriesError, EstimationError, EstimationWarning, ReturnSeries,
                                 calibrate_market, detect_jumps, estimate_correlation, fit_gbm,
                                 fit_jump_diffusion, ingest_market_csv, is_fixed_point)
from arvaopt.market import BASE_MARKET, MarketParams, sample_log_returns
from arvaopt.config import RunConfig


def normal_series(rng, n=600, sigma=0.04):
    return ReturnSeries.from_returns(rng.normal(0.005, sigma, n))


def test_constant_series_is_degenerate():
    s = ReturnSeries.from_returns(np.full(60, 0.01))
    with pytest.raises(DegenerateSeriesError):
        detect_jumps(s)
    mu, sigma = fit_gbm(s)
    assert sigma < 1e-12 and mu == pytest.approx(0.12)


def test_single_outlier_is_flagged():
    # uniform noise never exceeds sqrt(3) standard deviations, so no false flags
    rng = np.random.default_rng(4)
    h = 0.03 * np.sqrt(3)
    r = rng.uniform(-h, h, 400)
    r[137] += 10 * 0.03
    det = detect_jumps(ReturnSeries.from_returns(r))
    assert det.jump_indices.tolist() == [137]
    assert det.sigma_hat == pytest.approx(0.03 * np.sqrt(12), rel=0.1)
    assert is_fixed_point(ReturnSeries.from_returns(r), det)


def test_fixed_point_on_random_series():
    rng = np.random.default_rng(8)
    for _ in range(25):
        s = ReturnSeries.from_returns(sample_log_returns(BASE_MARKET, 1 / 12, rng, 1116)[0])
        det = detect_jumps(s)
        assert is_fixed_point(s, det)


def test_detect_jumps_preconditions(rng):
    with pytest.raises(ValueError):
        detect_jumps(normal_series(rng, 23))
    with pytest.raises(ValueError):
        detect_jumps(normal_series(rng), beta=0.0)


def test_gbm_series_has_few_jumps():
    rng = np.random.default_rng(12)
    fit = fit_jump_diffusion(normal_series(rng, 1200, 0.04))
    assert fit.detection.n_jumps <= 8
    assert fit.sigma == pytest.approx(0.04 * np.sqrt(12), rel=0.05)


def test_one_sided_jumps_report_absent_rate():
    rng = np.random.default_rng(3)
    r = rng.uniform(-0.03, 0.03, 600)
    r[[50, 200, 410]] -= 0.3
    fit = fit_jump_diffusion(ReturnSeries.from_returns(r))
    assert fit.jumps.p_up == 0.0
    assert np.isinf(fit.jumps.eta1)
    # each flagged return also carries up to 0.03 of noise
    assert fit.jumps.eta2 == pytest.approx(1 / 0.3, rel=0.1)
    assert fit.jumps.lam == pytest.approx(3 / 50)


def test_small_up_jump_rate_is_floored():
    rng = np.random.default_rng(3)
    r = rng.uniform(-0.03, 0.03, 600)
    r[[50, 200]] += 1.5
    with pytest.warns(EstimationWarning):
        fit = fit_jump_diffusion(ReturnSeries.from_returns(r))
    assert fit.jumps.eta1 == 1.01


def test_gbm_fit_recovers_drift():
    rng = np.random.default_rng(21)
    r = rng.normal((0.08 - 0.5 * 0.18**2) / 12, 0.18 / np.sqrt(12), 12000)
    mu, sigma = fit_gbm(ReturnSeries.from_returns(r))
    assert sigma == pytest.approx(0.18, rel=0.02)
    assert mu == pytest.approx(0.08, abs=0.01)


def test_correlation_examples(rng):
    s = normal_series(rng)
    assert estimate_correlation(s, s) == pytest.approx(1.0)
    with pytest.raises(EstimationError):
        estimate_correlation(s, s, jumps_s=np.arange(len(s) - 1))
    with pytest.raises(ValueError):
        estimate_correlation(s, normal_series(rng, 500))


def test_jump_diffusion_recovers_mean_log_return():
    rng = np.random.default_rng(5)
    x_s, x_b = sample_log_returns(BASE_MARKET, 1 / 12, rng, 1116)
    s = ReturnSeries.from_returns(x_s)
    fit = fit_jump_diffusion(s)
    # the fitted model reproduces the sample mean log return by construction
    jp = fit.jumps
    up = jp.p_up / jp.eta1 if np.isfinite(jp.eta1) else 0.0
    down = (1 - jp.p_up) / jp.eta2 if np.isfinite(jp.eta2) else 0.0
    model_mean = fit.mu - 0.5 * fit.sigma**2 - jp.lam * jp.kappa + jp.lam * (up - down)
    assert model_mean == pytest.approx(x_s.mean() * 12, rel=1e-10)


def test_round_trip_volatility_and_fit_validity():
    rng = np.random.default_rng(9)
    x_s, x_b = sample_log_returns(BASE_MARKET, 1 / 12, rng, 1116)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EstimationWarning)
        cal = calibrate_market(ReturnSeries.from_returns(x_s), ReturnSeries.from_returns(x_b))
    m = cal.market
    assert isinstance(m, MarketParams)
    assert m.sigma_s == pytest.approx(BASE_MARKET.sigma_s, rel=0.1)
    assert m.sigma_b == pytest.approx(BASE_MARKET.sigma_b, rel=0.1)
    assert abs(m.rho_sb - BASE_MARKET.rho_sb) < 0.1


def test_gbm_calibration():
    rng = np.random.default_rng(9)
    x_s, x_b = sample_log_returns(BASE_MARKET, 1 / 12, rng, 1116)
    cal = calibrate_market(ReturnSeries.from_returns(x_s), ReturnSeries.from_returns(x_b), model="gbm")
    assert cal.market.jump_s.lam == 0 and cal.market.jump_b.lam == 0
    with pytest.raises(ValueError):
        calibrate_market(ReturnSeries.from_returns(x_s), ReturnSeries.from_returns(x_b), model="heston")


def _write_csv(path, rows, header="date,stock_index,bill_index,cpi"):
    path.write_text(header + "\n" + "\n".join(",".join(map(str, r)) for r in rows) + "\n")
    return path


def test_ingest_constant_levels_give_zero_returns(tmp_path):
    p = _write_csv(tmp_path / "m.csv", [("2000-01", 100, 50, 1.0), ("2000-02", 100, 50, 1.0)])
    s, b = ingest_market_csv(p)
    assert s.log_returns.tolist() == [0.0] and b.log_returns.tolist() == [0.0]


def test_ingest_deflates_by_cpi(tmp_path):
    p = _write_csv(tmp_path / "m.csv", [("2000-01-31", 100, 50, 1.0), ("2000-02-29", 200, 50, 2.0)])
    s, b = ingest_market_csv(p)
    assert s.log_returns[0] == pytest.approx(0.0, abs=1e-15)
    assert b.log_returns[0] == pytest.approx(-np.log(2.0))
    assert str(s.timestamps[0]) == "2000-02"


def test_ingest_1116_levels_give_1115_returns(tmp_path):
    months = np.datetime64("1926-01", "M") + np.arange(1116)
    assert str(months[-1]) == "2018-12"
    rows = [(str(m), 100 + i, 50 + 0.1 * i, 1 + 0.001 * i) for i, m in enumerate(months)]
    s, b = ingest_market_csv(_write_csv(tmp_path / "m.csv", rows))
    assert len(s) == len(b) == 1115


@pytest.mark.parametrize("rows, header", [
    ([("2000-01", 100, 50, 1.0), ("2000-03", 100, 50, 1.0)], None),
    ([("2000-01", 100, 50, 1.0), ("2000-02", 0, 50, 1.0)], None),
    ([("2000-01", 100, 50, 1.0), ("2000-02", 100, 50, -1.0)], None),
    ([("2000-01", 100, 50, 1.0), ("2000-02", "x", 50, 1.0)], None),
    ([("2000-01", 100, 50), ("2000-02", 100, 50)], "date,stock_index,bill_index"),
    ([("2000-01", 100, 50, 1.0)], None),
])
def test_ingest_rejects_bad_files(tmp_path, rows, header):
    p = _write_csv(tmp_path / "m.csv", rows, header or "date,stock_index,bill_index,cpi")
    with pytest.raises(DataError):
        ingest_market_csv(p)


def test_return_series_rejects_gaps():
    ts = np.array(["2000-01", "2000-02", "2000-04"], dtype="datetime64[M]")
    with pytest.raises(DataError):
        ReturnSeries(ts, np.zeros(3))


def test_calibration_fragment_loads_as_config(tmp_path):
    from arvaopt.config import market_fragment
    rng = np.random.default_rng(9)
    x_s, x_b = sample_log_returns(BASE_MARKET, 1 / 12, rng, 1116)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EstimationWarning)
        cal = calibrate_market(ReturnSeries.from_returns(x_s), ReturnSeries.from_returns(x_b))
    p = tmp_path / "market.toml"
    p.write_text(market_fragment(cal.market, ["test fit"]))
    assert RunConfig.load(p).market() == cal.market
