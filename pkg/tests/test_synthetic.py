import numpy as np
import pytest

from cropcast.errors import CalibrationError, GenerationError, InputError
from cropcast.synthetic import (
    CalibrationTargets,
    KernelSpec,
    annualized_volatility,
    batch_stats,
    benchmark_statistics,
    calibrate,
    evaluate_on_benchmark,
    generate_benchmark,
    gram_matrix,
    kernel_eval,
    lag1_autocorrelation,
    read_benchmark,
    regenerate_from_manifest,
    sample_gp,
    seasonal_variation,
    write_benchmark,
)
from cropcast.timeseries import Commodity

SPEC = KernelSpec(seasonal_var=1.0, seasonal_length=1.5, trend_var=0.5,
                  trend_length=36.0, noise_var=0.1, mean_level=5.0)


class TestKernels:
    def test_periodic_diagonal(self):
        assert kernel_eval(SPEC, "periodic", 7, 7) == pytest.approx(1.0)

    def test_periodic_lag_12(self):
        assert kernel_eval(SPEC, "periodic", 0, 12) == pytest.approx(1.0)
        assert kernel_eval(SPEC, "periodic", 3, 27) == pytest.approx(1.0)

    def test_noise_kronecker(self):
        assert kernel_eval(SPEC, "noise", 4, 4) == pytest.approx(0.1)
        assert kernel_eval(SPEC, "noise", 4, 5) == 0.0

    def test_combined_is_sum(self):
        for t, u in [(0, 0), (2, 9), (5, 30)]:
            total = sum(kernel_eval(SPEC, k, t, u) for k in ("periodic", "rbf", "noise"))
            assert kernel_eval(SPEC, "combined", t, u) == pytest.approx(total)

    def test_rbf_decay(self):
        near = kernel_eval(SPEC, "rbf", 0, 1)
        far = kernel_eval(SPEC, "rbf", 0, 100)
        assert near > far

    def test_unknown_kind(self):
        with pytest.raises(InputError):
            kernel_eval(SPEC, "matern", 0, 1)

    def test_invalid_spec(self):
        with pytest.raises(InputError):
            KernelSpec(-1.0, 1.0, 0.1, 30.0, 0.0, 4.0)
        with pytest.raises(InputError):
            KernelSpec(1.0, 0.0, 0.1, 30.0, 0.0, 4.0)


class TestGram:
    def test_t1_diagonal_sum(self):
        K = gram_matrix(SPEC, 1)
        assert K.shape == (1, 1)
        assert K[0, 0] == pytest.approx(1.0 + 0.5 + 0.1)

    def test_exactly_symmetric(self):
        K = gram_matrix(SPEC, 40)
        assert np.array_equal(K, K.T)
        np.testing.assert_allclose(np.diag(K), 1.6)

    def test_eigenvalues_nonnegative(self):
        # dense eigensolver oracle on a small matrix
        K = gram_matrix(SPEC, 36)
        eig = np.linalg.eigvalsh(K)
        assert eig.min() >= -1e-8 * np.trace(K)


class TestSampling:
    def test_zero_covariance_constant_at_mean(self):
        z = KernelSpec(0.0, 1.0, 0.0, 30.0, 0.0, 7.0)
        s = sample_gp(z, 24, seed=3)
        assert np.all(s.values.values == 7.0)

    def test_fixed_seed_identical(self):
        a = sample_gp(SPEC, 156, seed=42)
        b = sample_gp(SPEC, 156, seed=42)
        np.testing.assert_array_equal(a.values.values, b.values.values)

    def test_distinct_seeds_differ(self):
        a = sample_gp(SPEC, 60, seed=1)
        b = sample_gp(SPEC, 60, seed=2)
        assert not np.array_equal(a.values.values, b.values.values)

    def test_always_positive(self):
        tight = KernelSpec(1.0, 1.5, 1.0, 30.0, 0.3, 2.0)
        for seed in range(30):
            assert np.all(sample_gp(tight, 120, seed=seed).values.values > 0)

    def test_retry_budget_exhaustion(self):
        # independent months each negative with probability ~1/2: no
        # 120-month path survives any realistic retry budget
        hopeless = KernelSpec(0.0, 1.5, 0.0, 30.0, 400.0, 0.01)
        with pytest.raises(GenerationError) as err:
            sample_gp(hopeless, 120, seed=0)
        assert "mean" in str(err.value)

    def test_t1_mean_within_3_se(self):
        spec = KernelSpec(0.25, 1.5, 0.2, 30.0, 0.05, 8.0)
        draws = np.array([sample_gp(spec, 1, seed=i).values.values[0] for i in range(10_000)])
        sigma = np.sqrt(0.25 + 0.2 + 0.05)
        se = sigma / np.sqrt(10_000)
        assert abs(draws.mean() - 8.0) <= 3 * se

    def test_t2_empirical_covariance_matches_gram(self):
        spec = KernelSpec(0.2, 1.5, 0.15, 30.0, 0.05, 9.0)
        K = gram_matrix(spec, 2)
        draws = np.array([sample_gp(spec, 2, seed=i).values.values for i in range(10_000)])
        emp = np.cov(draws.T, bias=True)
        np.testing.assert_allclose(emp, K, rtol=0.05, atol=0.005)


class TestStatistics:
    def test_seasonal_variation_of_pure_cycle(self):
        pattern = np.array([1.0, 1.2, 1.4, 1.2, 1.0, 0.8, 0.6, 0.8] + [1.0] * 4)
        x = 5.0 + np.tile(pattern - pattern.mean(), 13)
        sv = seasonal_variation(x)
        expected = np.mean(np.abs(pattern - pattern.mean())) / 5.0
        assert sv == pytest.approx(expected, rel=1e-9)

    def test_acf1_of_constant_is_zero(self):
        assert lag1_autocorrelation(np.full(50, 3.0)) == 0.0

    def test_acf1_of_smooth_series_high(self):
        x = 5 + np.sin(np.arange(200) / 30.0)
        assert lag1_autocorrelation(x) > 0.95

    def test_volatility_scale_free(self):
        rng = np.random.default_rng(0)
        x = np.abs(5 + np.cumsum(rng.normal(0, 0.1, 200))) + 1
        assert annualized_volatility(x) == pytest.approx(annualized_volatility(10 * x))


@pytest.fixture(scope="module")
def calibrated():
    return calibrate(seed=0, n_draws=200, budget=120)


class TestCalibration:
    def test_returns_spec_per_commodity(self, calibrated):
        assert set(calibrated) == set(Commodity)

    def test_aggregates_in_range_on_fresh_seeds(self, calibrated):
        targets = CalibrationTargets()
        st = batch_stats(calibrated[Commodity.CORN], targets, n_draws=300, seed=99_999)
        lo, hi = targets.seasonal_variation
        assert lo - 0.02 <= st.seasonal_variation <= hi + 0.02
        lo, hi = targets.lag1_autocorrelation
        assert lo - 0.02 <= st.lag1_autocorrelation <= hi + 0.02
        lo, hi = targets.annualized_volatility
        assert lo - 0.03 <= st.annualized_volatility <= hi + 0.03

    def test_trend_length_inside_window(self, calibrated):
        for spec in calibrated.values():
            assert 24.0 <= spec.trend_length <= 60.0

    def test_scaled_specs_share_relative_shape(self, calibrated):
        corn = calibrated[Commodity.CORN]
        cotton = calibrated[Commodity.COTTON]
        ratio = (cotton.mean_level / corn.mean_level) ** 2
        assert cotton.seasonal_var == pytest.approx(corn.seasonal_var * ratio)
        assert cotton.seasonal_length == corn.seasonal_length

    def test_zero_noise_raises_acf(self, calibrated):
        # paired simulation: removing the white-noise component leaves a
        # smoother series, so the lag-1 autocorrelation rises
        spec = calibrated[Commodity.CORN]
        from dataclasses import asdict
        spec10 = KernelSpec(**{**asdict(spec), "noise_var": spec.seasonal_var * 0.02})
        spec0 = KernelSpec(**{**asdict(spec10), "noise_var": 0.0})
        t = CalibrationTargets()
        noisy = batch_stats(spec10, t, n_draws=150, seed=5)
        clean = batch_stats(spec0, t, n_draws=150, seed=5)
        assert clean.lag1_autocorrelation > noisy.lag1_autocorrelation

    def test_empty_intersection_calibration_error(self):
        bad = CalibrationTargets(
            seasonal_variation=(0.15, 0.25),
            annualized_volatility=(0.0, 0.01),
        )
        with pytest.raises(CalibrationError) as err:
            calibrate(targets=bad, n_draws=60, budget=25, seed=1)
        assert err.value.nearest is not None


class TestBenchmark:
    def test_count_and_length(self, calibrated):
        series, manifest = generate_benchmark(calibrated, n_per_commodity=5,
                                              length=156, seed=7)
        assert len(series) == 20
        assert all(len(s.values) == 156 for s in series)
        assert manifest.train_months == 144

    def test_regeneration_bit_identical(self, calibrated):
        series, manifest = generate_benchmark(calibrated, n_per_commodity=3,
                                              length=156, seed=7)
        regen = regenerate_from_manifest(manifest)
        assert len(regen) == len(series)
        for a, b in zip(series, regen):
            assert a.series_id == b.series_id
            np.testing.assert_array_equal(a.values.values, b.values.values)

    def test_write_read_roundtrip(self, tmp_path, calibrated):
        series, manifest = generate_benchmark(calibrated, n_per_commodity=2,
                                              length=60, seed=11)
        write_benchmark(tmp_path, series, manifest)
        assert sorted(p.name for p in tmp_path.glob("synthetic_*.csv")) == [
            "synthetic_corn.csv", "synthetic_cotton.csv",
            "synthetic_soybeans.csv", "synthetic_wheat.csv",
        ]
        back, manifest2 = read_benchmark(tmp_path)
        assert manifest2 == manifest
        for a, b in zip(series, back):
            np.testing.assert_array_equal(a.values.values, b.values.values)

    def test_statistics_summary_shape(self, calibrated):
        series, _ = generate_benchmark(calibrated, n_per_commodity=5, length=156, seed=3)
        stats = benchmark_statistics(series)
        assert stats["n"] == 20
        assert 0.0 <= stats["frac_acf_in_range"] <= 1.0

    def test_ets_beats_seasonal_naive(self, calibrated):
        series, _ = generate_benchmark(calibrated, n_per_commodity=10, length=156, seed=21)
        res = evaluate_on_benchmark(series, ["ets", "seasonal_naive"], seed=0)
        assert res["ets"]["mae"] < res["seasonal_naive"]["mae"]
        assert res["ets"]["rmse"] < res["seasonal_naive"]["rmse"]
