import numpy as np
import pytest
from scipy import integrate

from arvaopt.mortality import (ArvaConfig, DegenerateAnnuityError, MortalityError, MortalityTable,
                               annuity_factor_a, arva_withdrawal, conditional_horizon, cpm2014_male,
                               lump_sum_fraction, lump_sum_integral, withdrawal_schedule)


@pytest.fixture(scope="module")
def cpm():
    return cpm2014_male()


def test_table_shape_and_terminal(cpm):
    assert cpm.ages[0] == 18 and cpm.terminal_age == 115
    assert cpm.qx[-1] == 1.0
    assert float(cpm.survival(cpm.terminal_age)) == 0.0


def test_cohort_survival_probabilities(cpm):
    # a 65-year-old has about a 13% chance of reaching 95 and 2% of reaching 100
    s65 = cpm.survival(65)
    assert cpm.survival(95) / s65 == pytest.approx(0.13, abs=0.005)
    assert cpm.survival(100) / s65 == pytest.approx(0.02, abs=0.0025)


def test_table_validation(tmp_path):
    with pytest.raises(MortalityError):
        MortalityTable(np.array([60, 62]), np.array([0.1, 1.0]))
    with pytest.raises(MortalityError):
        MortalityTable(np.array([60, 61]), np.array([0.1, 0.9]))
    bad = tmp_path / "t.csv"
    bad.write_text("x,y\n1,2\n")
    with pytest.raises(MortalityError):
        MortalityTable.from_csv(bad)


def test_csv_round_trip(tmp_path, cpm):
    p = tmp_path / "m.csv"
    cpm.to_csv(p)
    back = MortalityTable.from_csv(p)
    assert np.array_equal(back.qx, cpm.qx) and np.array_equal(back.ages, cpm.ages)


def test_horizon_fraction_one_is_zero(cpm):
    assert conditional_horizon(cpm, 65, 3.0, 1.0) == 3.0


def test_horizon_without_deaths_runs_to_terminal_age():
    t = MortalityTable(np.arange(60, 71), np.r_[np.zeros(10), 1.0])
    for f in (0.01, 0.5, 0.99):
        assert conditional_horizon(t, 62, 1.0, f) == 70 - 62


def test_horizon_extinct_cohort(cpm):
    with pytest.raises(MortalityError):
        conditional_horizon(cpm, 65, 50.0, 0.2)


def test_horizon_base_case_brackets_target(cpm):
    t_star = conditional_horizon(cpm, 65, 0.0, 0.2)
    # 20% of 65-year-olds survive to 65 + T*; 13% reach 95, so T* is a bit under 30
    assert 25 < t_star < 30
    assert cpm.survival(65 + t_star) / cpm.survival(65) == pytest.approx(0.2, abs=1e-12)


def test_horizon_is_monotone_in_fraction(cpm):
    hs = [conditional_horizon(cpm, 65, 5.0, f) for f in (0.9, 0.5, 0.2, 0.05)]
    assert np.all(np.diff(hs) > 0)


def test_annuity_factor_limits():
    assert annuity_factor_a(0.00454, 0.0) == 0.0
    assert annuity_factor_a(0.0, 17.5) == 17.5
    quad = integrate.quad(lambda t: np.exp(-0.00454 * t), 0, 20)[0]
    assert annuity_factor_a(0.00454, 20) == pytest.approx(quad, rel=1e-12)
    assert annuity_factor_a(0.00454, 20) == pytest.approx(19.119, abs=5e-4)
    # stable for tiny rates
    assert annuity_factor_a(1e-14, 10.0) == pytest.approx(10.0, rel=1e-12)
    with pytest.raises(ValueError):
        annuity_factor_a(0.01, -1.0)


def test_lump_sum_constant_annuity():
    assert lump_sum_integral(lambda t: 12.5, 0.0, 3.0, 1.0) == pytest.approx(1 / 12.5, rel=1e-14)


def test_lump_sum_exhausted_annuity_is_one():
    assert lump_sum_integral(lambda t: 1.0 - (t - 4.0), 0.0, 4.0, 1.0) == 1.0


def test_lump_sum_degenerate_start():
    with pytest.raises(DegenerateAnnuityError):
        lump_sum_integral(lambda t: 0.0, 0.01, 0.0, 1.0)


@pytest.mark.parametrize("basis", ["interval-start", "continuous"])
def test_lump_sum_quadrature_is_converged(cpm, basis):
    cfg = ArvaConfig(horizon_basis=basis)
    for t in (0.0, 10.0, 25.0):
        coarse = lump_sum_fraction(cfg, cpm, t, panels_per_year=12)
        fine = lump_sum_fraction(cfg, cpm, t, panels_per_year=24)
        assert abs(coarse - fine) < 1e-6


def test_initial_withdrawal_is_interior(cpm):
    A0 = lump_sum_fraction(ArvaConfig(), cpm, 0.0)
    assert 30 < 1000 * A0 < 80


def test_schedule_increases_and_stays_below_one(cpm):
    A = withdrawal_schedule(ArvaConfig(), cpm, 31)
    assert np.all(np.diff(A) > 0) and np.all(A <= 1.0)


@pytest.mark.parametrize("w, q", [(1000, 50), (200, 30), (5000, 80), (-100, 30)])
def test_arva_withdrawal(w, q):
    assert arva_withdrawal(w, 0.05, 30, 80) == pytest.approx(q)


def test_arva_config_validation():
    with pytest.raises(ValueError):
        ArvaConfig(q_min=90, q_max=80)
    with pytest.raises(ValueError):
        ArvaConfig(horizon_basis="weekly")
