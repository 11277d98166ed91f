import numpy as np
import pytest

from cropcast.errors import InputError
from cropcast.models.ets import ets_fit, ets_forecast
from cropcast.models.naive import naive_forecast, seasonal_naive_forecast
from cropcast.models.stl import stl_decompose, stl_forecast
from cropcast.timeseries import MonthSeries, MonthStamp


def series(values, start=(2000, 1)):
    return MonthSeries(MonthStamp(*start), np.asarray(values, dtype=float))


class TestNaive:
    def test_repeats_last_value(self):
        s = series([3.0, 4.0, 5.0])
        np.testing.assert_array_equal(naive_forecast(s, 12), np.full(12, 5.0))

    def test_h1_is_last(self):
        s = series([9.5, 7.25])
        assert naive_forecast(s, 1)[0] == 7.25

    def test_empty_history_is_input_error(self):
        with pytest.raises(InputError):
            MonthSeries(MonthStamp(2000, 1), [])

    def test_bad_horizon(self):
        with pytest.raises(InputError):
            naive_forecast(series([1.0]), 0)


class TestSeasonalNaive:
    def test_two_identical_cycles_repeat(self):
        cycle = [3, 4, 5, 6, 7, 8, 8, 7, 6, 5, 4, 3]
        s = series(cycle * 2)
        np.testing.assert_array_equal(seasonal_naive_forecast(s, 12), np.array(cycle, float))

    def test_short_history_rejected(self):
        with pytest.raises(InputError):
            seasonal_naive_forecast(series(np.arange(1.0, 12.0)), 6)

    def test_h24_on_12_month_history(self):
        # hand-unrolled recursion: forecasts for months 13-24 equal those
        # for 1-12 because the seasonal lag lands on the same cycle
        cycle = np.array([5, 6, 7, 8, 9, 8, 7, 6, 5, 4, 3, 4], float)
        s = series(cycle)
        fc = seasonal_naive_forecast(s, 24)
        np.testing.assert_array_equal(fc[:12], cycle)
        np.testing.assert_array_equal(fc[12:], fc[:12])

    def test_positive_output(self):
        s = series(np.linspace(2, 3, 24))
        assert np.all(seasonal_naive_forecast(s, 30) > 0)


class TestEts:
    def test_hand_recursion_alpha_half(self):
        # values 2,4,6 with alpha=0.5: levels 2, 3, 4.5; next forecast 4.5
        s = series([2.0, 4.0, 6.0])
        st = ets_fit(s, "none", "none", smoothing=(0.5, 0.0, 0.0))
        assert st.level == pytest.approx(4.5)
        assert ets_forecast(st, 1)[0] == pytest.approx(4.5)

    def test_constant_series_fixed_point(self):
        s = series(np.full(48, 7.25))
        st = ets_fit(s, "additive", "additive")
        np.testing.assert_allclose(ets_forecast(st, 24), 7.25, atol=1e-9)

    def test_exact_line_continues(self):
        s = series(3.0 + 0.25 * np.arange(60))
        st = ets_fit(s, "additive", "none")
        np.testing.assert_allclose(
            ets_forecast(st, 6), 3.0 + 0.25 * np.arange(60, 66), atol=1e-8
        )

    def test_zero_trend_constant_forecast(self):
        s = series(np.full(30, 2.0))
        st = ets_fit(s, "none", "none", smoothing=(0.3, 0.0, 0.0))
        assert np.ptp(ets_forecast(st, 12)) == 0.0

    def test_h13_vs_h1_differ_by_12b(self):
        rng = np.random.default_rng(3)
        y = 10 + 0.05 * np.arange(120) + np.tile(np.sin(2 * np.pi * np.arange(12) / 12), 10) + rng.normal(0, 0.1, 120)
        st = ets_fit(series(np.abs(y) + 0.1), "additive", "additive")
        f = ets_forecast(st, 13)
        assert f[12] - f[0] == pytest.approx(12 * st.trend, abs=1e-10)

    def test_all_zero_seasonals_pure_holt(self):
        s = series(5.0 + 0.1 * np.arange(48))
        st_holt = ets_fit(s, "additive", "none", smoothing=(0.4, 0.2, 0.0))
        st_seas = ets_fit(s, "additive", "additive", smoothing=(0.4, 0.2, 0.0))
        # an exact line has zero seasonal startup, so both paths coincide
        np.testing.assert_allclose(st_seas.seasonals, 0.0, atol=1e-9)
        np.testing.assert_allclose(
            ets_forecast(st_seas, 12), ets_forecast(st_holt, 12), atol=1e-8
        )

    def test_seasonal_needs_two_years(self):
        with pytest.raises(InputError):
            ets_fit(series(np.arange(1.0, 20.0)), "none", "additive")

    def test_additive_shift_equivariance(self):
        rng = np.random.default_rng(11)
        y = np.abs(10 + np.cumsum(rng.normal(0, 0.2, 96))) + 1
        a = ets_fit(series(y), "additive", "additive")
        b = ets_fit(series(y + 5.0), "additive", "additive")
        np.testing.assert_allclose(
            ets_forecast(b, 12) - ets_forecast(a, 12), 5.0, atol=1e-6
        )

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        y = np.abs(8 + np.cumsum(rng.normal(0, 0.3, 72))) + 1
        f1 = ets_forecast(ets_fit(series(y), "additive", "multiplicative"), 12)
        f2 = ets_forecast(ets_fit(series(y), "additive", "multiplicative"), 12)
        np.testing.assert_array_equal(f1, f2)


class TestStl:
    def test_pure_sinusoid_residual_negligible(self):
        t = np.arange(144)
        amp = 2.0
        y = 10.0 + amp * np.sin(2 * np.pi * t / 12)
        comp = stl_decompose(series(y), n_s=13)
        assert np.max(np.abs(comp.residual)) < 1e-6 * amp

    def test_constant_series(self):
        comp = stl_decompose(series(np.full(48, 5.0)), n_s=7)
        np.testing.assert_allclose(comp.seasonal, 0.0, atol=1e-9)
        np.testing.assert_allclose(comp.trend, 5.0, atol=1e-9)

    def test_additive_identity(self):
        rng = np.random.default_rng(0)
        y = np.abs(6 + np.cumsum(rng.normal(0, 0.3, 120))) + np.tile(np.sin(2 * np.pi * np.arange(12) / 12), 10) + 3
        comp = stl_decompose(series(y), n_s=25)
        np.testing.assert_allclose(comp.reconstruction, y, atol=1e-8)

    def test_robust_trend_moves_less_at_outlier(self):
        t = np.arange(144)
        clean = 5 + 0.1 * t + 1.5 * np.sin(2 * np.pi * t / 12)
        dirty = clean.copy()
        dirty[70] += 8.0
        rob_clean = stl_decompose(series(clean), n_s=25, robust=True)
        rob_dirty = stl_decompose(series(dirty), n_s=25, robust=True)
        non_clean = stl_decompose(series(clean), n_s=25, robust=False)
        non_dirty = stl_decompose(series(dirty), n_s=25, robust=False)
        robust_shift = abs(rob_dirty.trend[70] - rob_clean.trend[70])
        plain_shift = abs(non_dirty.trend[70] - non_clean.trend[70])
        assert robust_shift < plain_shift

    def test_trend_window_longer_than_series(self):
        with pytest.raises(InputError):
            stl_decompose(series(np.full(30, 3.0)), n_s=7, n_t=51)

    def test_even_or_small_windows_rejected(self):
        s = series(np.full(48, 3.0))
        with pytest.raises(InputError):
            stl_decompose(s, n_s=8)
        with pytest.raises(InputError):
            stl_decompose(s, n_s=5)

    def test_forecast_linear_plus_periodic_exact(self):
        t = np.arange(144)
        y = 5 + 0.1 * t + 1.5 * np.sin(2 * np.pi * t / 12)
        comp = stl_decompose(series(y), n_s=25)
        fc = stl_forecast(comp, 12)
        truth = 5 + 0.1 * np.arange(144, 156) + 1.5 * np.sin(2 * np.pi * np.arange(144, 156) / 12)
        np.testing.assert_allclose(fc, truth, atol=1e-6)

    def test_forecast_seasonal_path_is_last_cycle(self):
        rng = np.random.default_rng(9)
        y = np.abs(8 + np.cumsum(rng.normal(0, 0.2, 120))) + np.tile(np.cos(2 * np.pi * np.arange(12) / 12), 10) + 3
        comp = stl_decompose(series(y), n_s=13)
        fc = stl_forecast(comp, 12)
        holt_only = stl_forecast(
            type(comp)(trend=comp.trend, seasonal=np.zeros_like(comp.seasonal),
                       residual=comp.residual, n_s=comp.n_s, n_t=comp.n_t), 12)
        np.testing.assert_allclose(fc - holt_only, comp.seasonal[-12:], atol=1e-12)
