import numpy as np
import pytest

from cropcast.errors import ConvergenceError, InputError, SelectionError
from cropcast.models.naive import naive_forecast, seasonal_naive_forecast
from cropcast.models.sarima import (
    SarimaOrder,
    full_order_grid,
    sarima_fit,
    sarima_forecast,
    sarima_select,
)
from cropcast.timeseries import MonthSeries, MonthStamp


def series(values, start=(2000, 1)):
    return MonthSeries(MonthStamp(*start), np.asarray(values, dtype=float))


def simulate_ar1(phi, n, seed, mean=20.0, sigma=1.0):
    rng = np.random.default_rng(seed)
    x = np.zeros(n)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + rng.normal(0, sigma)
    return series(x + mean)


class TestOrder:
    def test_grid_bounds_enforced(self):
        with pytest.raises(InputError):
            SarimaOrder(3, 0, 0, 0, 0, 0)
        with pytest.raises(InputError):
            SarimaOrder(0, 2, 0, 0, 0, 0)
        with pytest.raises(InputError):
            SarimaOrder(0, 0, 0, 0, 0, 0, s=4)

    def test_grid_size(self):
        assert len(full_order_grid()) == 3 * 2 * 3 * 3 * 2 * 3

    def test_precondition_length(self):
        # (1,1,1)(1,1,1)_12 needs > 2*(1+1+12+12) + 13 + 12 = 77 observations
        s = series(np.full(60, 5.0) + np.linspace(0, 1, 60))
        with pytest.raises(InputError):
            sarima_fit(s, SarimaOrder(1, 1, 1, 1, 1, 1))


class TestFit:
    def test_random_walk_equals_naive(self):
        rng = np.random.default_rng(0)
        s = series(np.abs(5 + np.cumsum(rng.normal(0, 0.1, 100))) + 1)
        fit = sarima_fit(s, SarimaOrder(0, 1, 0, 0, 0, 0))
        np.testing.assert_allclose(fit.forecast(12), naive_forecast(s, 12))

    def test_ar1_parameter_recovery(self):
        s = simulate_ar1(0.7, 300, seed=42)
        fit = sarima_fit(s, SarimaOrder(1, 0, 0, 0, 0, 0))
        assert 0.6 <= fit.coefficients["phi"][0] <= 0.8

    def test_ar1_closed_form_decay(self):
        s = simulate_ar1(0.7, 300, seed=42)
        fit = sarima_fit(s, SarimaOrder(1, 0, 0, 0, 0, 0), params=[0.5])
        last_dev = s.values[-1] - fit.mean
        expected = fit.mean + last_dev * 0.5 ** np.arange(1, 4)
        np.testing.assert_allclose(fit.forecast(3), expected)

    def test_pure_seasonal_equals_seasonal_naive(self):
        pat = np.array([5, 6, 7, 8, 9, 8, 7, 6, 5, 4, 3, 4], float)
        s = series(np.tile(pat, 6))
        fit = sarima_fit(s, SarimaOrder(0, 0, 0, 0, 1, 0))
        np.testing.assert_allclose(fit.forecast(12), seasonal_naive_forecast(s, 12))

    def test_deterministic(self):
        s = simulate_ar1(0.5, 150, seed=7)
        f1 = sarima_fit(s, SarimaOrder(1, 0, 1, 0, 0, 0)).forecast(12)
        f2 = sarima_fit(s, SarimaOrder(1, 0, 1, 0, 0, 0)).forecast(12)
        np.testing.assert_array_equal(f1, f2)

    def test_aic_formula(self):
        s = simulate_ar1(0.4, 100, seed=1)
        fit = sarima_fit(s, SarimaOrder(1, 0, 0, 0, 0, 0))
        expected = fit.n_resid * np.log(fit.sse / fit.n_resid) + 2 * (1 + 1)
        assert fit.aic == pytest.approx(expected)


class TestSelect:
    def test_white_noise_selects_no_arma_terms(self):
        # oracle: brute-force AIC over the full grid equals the selection
        rng = np.random.default_rng(0)
        s = series(np.abs(rng.normal(0, 1, 120)) + 10)
        order = sarima_select(s)
        assert order.p + order.q + order.P + order.Q == 0
        fits = {}
        for cand in full_order_grid():
            try:
                fits[cand.as_tuple()] = sarima_fit(s, cand).aic
            except (InputError, ConvergenceError):
                continue
        best_bruteforce = min(
            fits.items(),
            key=lambda kv: (kv[1], sum(kv[0][i] for i in (0, 2, 3, 5)), kv[0]),
        )
        assert order.as_tuple() == best_bruteforce[0]

    def test_seasonal_series_selects_seasonal_terms(self):
        rng = np.random.default_rng(5)
        pat = np.array([5, 6, 7, 9, 11, 10, 8, 6, 5, 4, 3, 4], float)
        s = series(np.abs(np.tile(pat, 12) + rng.normal(0, 0.05, 144)) + 0.1)
        order = sarima_select(s)
        assert order.D == 1 or order.Q >= 1

    def test_constant_series_degenerate(self):
        s = series(np.full(120, 5.0))
        assert sarima_select(s) == SarimaOrder(0, 1, 0, 0, 0, 0)

    def test_no_candidate_fits(self):
        s = series(np.full(30, 5.0) + np.linspace(0, 1, 30))
        with pytest.raises(SelectionError):
            sarima_select(s, orders=[SarimaOrder(2, 1, 2, 2, 1, 2)])

    def test_select_is_deterministic(self):
        rng = np.random.default_rng(2)
        s = series(np.abs(10 + np.cumsum(rng.normal(0, 0.5, 140))) + 1)
        sub = [SarimaOrder(*t) for t in
               [(0, 1, 0, 0, 0, 0), (1, 0, 0, 0, 0, 0), (0, 1, 1, 0, 0, 0), (1, 1, 1, 0, 0, 0)]]
        assert sarima_select(s, orders=sub) == sarima_select(s, orders=sub)


class TestForecastShapes:
    def test_exact_forecast_count_and_finiteness(self):
        s = simulate_ar1(0.6, 200, seed=3)
        for order in [SarimaOrder(1, 1, 1, 0, 0, 0), SarimaOrder(2, 0, 0, 1, 0, 1),
                      SarimaOrder(0, 1, 1, 0, 1, 1)]:
            fc = sarima_forecast(sarima_fit(s, order), 12)
            assert fc.shape == (12,)
            assert np.all(np.isfinite(fc))
