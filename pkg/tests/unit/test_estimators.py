"""Tests for the Monte Carlo estimators."""

import math

import numpy as np
import pytest

from rangelab.ancestry import ModulusReport
from rangelab.estimators import (
    MIN_SURVIVORS,
    ONE_ARM_HORIZON,
    distinct_sites,
    estimate_modulus,
    estimate_one_arm,
    estimate_survival,
    integrate_step,
    integrated_mass,
    modulus_tail_frequency,
    one_arm_prediction,
    pure_birth_tail,
    range_statistics,
    resampled_ks_quantile,
    wilson_interval,
)
from rangelab.exceptions import PreconditionError
from rangelab.lattice import scaling_m
from rangelab.loader import BrwSupplier, GwSupplier
from rangelab.models.brw import gw_survival, offspring_law


@pytest.fixture
def geometric_gw():
    """Geometric Galton-Watson supplier with a short horizon."""
    return GwSupplier(None, "geometric", n_max=20)


class TestWilsonInterval:
    """Tests for the Wilson score interval."""

    def test_contains_proportion(self):
        """Test interval brackets the observed proportion."""
        lo, hi = wilson_interval(np.array([0, 3, 10]), 10)

        p = np.array([0.0, 0.3, 1.0])
        assert np.all(lo <= p)
        assert np.all(p <= hi)
        assert lo[0] == 0.0
        assert hi[0] > 0.0

    def test_zero_trials(self):
        """Test zero trials gives the trivial interval."""
        lo, hi = wilson_interval(np.array([0, 0]), 0)

        assert np.all(lo == 0.0)
        assert np.all(hi == 1.0)


class TestSurvival:
    """Tests for estimate_survival."""

    @pytest.mark.slow
    def test_matches_exact_gw(self, geometric_gw):
        """Test geometric GW survival against theta(n) = 1/(n+1)."""
        grid = [1, 2, 4, 8]
        curve = estimate_survival(geometric_gw, grid, replicas=4000, seed=5)
        exact = gw_survival(offspring_law("geometric"), 8)

        assert curve.replicas == 4000
        for t, est, se in zip(grid, curve.estimate, curve.stderr):
            assert exact[t] == pytest.approx(1.0 / (t + 1))
            assert abs(est - exact[t]) <= 4 * se + 1e-3

    def test_curve_is_monotone(self, geometric_gw):
        """Test shared replicas give a non-increasing curve."""
        curve = estimate_survival(geometric_gw, [1, 2, 3, 5, 10], replicas=300, seed=1)

        assert curve.is_monotone()
        assert np.all(curve.ci_lo <= curve.estimate)
        assert np.all(curve.estimate <= curve.ci_hi)

    def test_normalized_column(self, geometric_gw):
        """Test normalized column is m(t) theta(t)."""
        curve = estimate_survival(geometric_gw, [1, 4], replicas=200, seed=2)
        m = np.array([scaling_m(geometric_gw.scaling(), t) for t in [1, 4]])

        np.testing.assert_allclose(curve.normalized, m * curve.estimate)
        assert curve.envelope["min"] <= curve.envelope["max"]

    def test_reproducible(self, geometric_gw):
        """Test same seed gives the same curve."""
        a = estimate_survival(geometric_gw, [1, 2], replicas=150, seed=9)
        b = estimate_survival(geometric_gw, [1, 2], replicas=150, seed=9)

        np.testing.assert_array_equal(a.estimate, b.estimate)

    def test_extras(self, geometric_gw):
        """Test provenance extras."""
        curve = estimate_survival(geometric_gw, [1], replicas=20, seed=3)

        assert curve.extras["seed"] == 3
        assert curve.extras["truncated"] == 0
        assert curve.extras["model"]["model"] == "gw"

    def test_empty_grid(self, geometric_gw):
        """Test empty grid is refused."""
        with pytest.raises(PreconditionError):
            estimate_survival(geometric_gw, [], replicas=10, seed=0)

    def test_decreasing_grid(self, geometric_gw):
        """Test non-increasing grid is refused."""
        with pytest.raises(PreconditionError):
            estimate_survival(geometric_gw, [2, 1], replicas=10, seed=0)


class TestOneArm:
    """Tests for the one-arm estimator."""

    def test_prediction_brw_d1(self, nn1):
        """Test predicted limit for binary BRW on Z."""
        supplier = BrwSupplier(nn1, "binary", n_max=20)

        assert one_arm_prediction(supplier) == pytest.approx(8.85, rel=1e-2)

    def test_no_prediction_spaceless(self, geometric_gw):
        """Test spaceless model has no one-arm prediction."""
        assert one_arm_prediction(geometric_gw) is None

    def test_curve(self, nn2):
        """Test one-arm curve shape."""
        supplier = BrwSupplier(nn2, "binary", n_max=15)
        curve = estimate_one_arm(supplier, [1, 2, 4], replicas=200, seed=4)

        assert curve.is_monotone()
        assert curve.prediction is not None
        assert curve.extras["prediction"] == curve.prediction
        assert 0 <= curve.extras["unfinished"] <= 200

    def test_horizon_covers_largest_radius(self, nn2):
        """Test the horizon grows to a multiple of max(r)^2 and every run is decided."""
        supplier = BrwSupplier(nn2, "binary", n_max=15)
        curve = estimate_one_arm(supplier, [1, 2, 4], replicas=200, seed=4)

        assert curve.extras["horizon"] == ONE_ARM_HORIZON * 16
        assert curve.extras["unfinished"] == 0

    def test_horizon_factor(self, nn2):
        """Test an explicit horizon factor."""
        supplier = BrwSupplier(nn2, "binary", n_max=15)
        curve = estimate_one_arm(supplier, [1, 5], replicas=20, seed=4, horizon_factor=2.0)

        assert curve.extras["horizon"] == 50


class TestIntegrateStep:
    """Tests for integrate_step."""

    def test_partial_overlap(self):
        """Test integral across a step boundary."""
        times = np.array([0.0, 1.0, 2.0])
        values = np.array([1.0, 2.0, 0.0])

        assert integrate_step(times, values, 0.5, 1.5) == pytest.approx(1.5)

    def test_last_step_extends(self):
        """Test last value holds beyond the last time."""
        times = np.array([0.0, 1.0])
        values = np.array([1.0, 3.0])

        assert integrate_step(times, values, 0.0, 3.0) == pytest.approx(7.0)

    def test_empty_interval(self):
        """Test b <= a integrates to zero."""
        assert integrate_step(np.array([0.0]), np.array([1.0]), 2.0, 2.0) == 0.0


class TestIntegratedMass:
    """Tests for integrated_mass."""

    def test_mean_matches_martingale(self, geometric_gw):
        """Test E value = (t1 - t0)/m(n) since E|T_t| = 1."""
        result = integrated_mass(geometric_gw, n=4, t0=0.5, t1=1.0, replicas=1000, seed=7)
        report = result.to_report()

        expected = 0.5 / result.m_n
        assert result.values.shape == (1000,)
        assert np.all(result.values >= 0)
        assert abs(report.estimate - expected) <= 5 * report.stderr

    def test_conditioned(self, geometric_gw):
        """Test conditioning keeps replicas surviving past t0."""
        result = integrated_mass(geometric_gw, n=4, t0=0.5, t1=1.0, replicas=200, seed=8)
        kept = result.conditioned()

        assert kept.size == int((result.survival > 0.5).sum())
        assert result.to_report().extras["survivors"] == kept.size

    def test_small_mass_curve(self, geometric_gw):
        """Test small-mass curve is a distribution function in a."""
        result = integrated_mass(geometric_gw, n=4, t0=0.5, t1=1.0, replicas=300, seed=9)
        curve = result.small_mass_curve([0.05, 0.1, 0.5, 1.0])

        assert np.all(np.diff(curve.estimate) >= 0)
        np.testing.assert_allclose(curve.normalized, curve.estimate / np.sqrt(curve.grid))

    def test_moments(self, geometric_gw):
        """Test moment keys."""
        result = integrated_mass(geometric_gw, n=2, t0=0.5, t1=1.0, replicas=50, seed=1)

        assert set(result.moments(p_max=3)) == {1, 2, 3}

    def test_bad_interval(self, geometric_gw):
        """Test t0 >= t1 is refused."""
        with pytest.raises(PreconditionError):
            integrated_mass(geometric_gw, n=4, t0=1.0, t1=1.0, replicas=10, seed=0)

    def test_bad_scale(self, geometric_gw):
        """Test n < 1 is refused."""
        with pytest.raises(PreconditionError):
            integrated_mass(geometric_gw, n=0.5, t0=0.0, t1=1.0, replicas=10, seed=0)


class TestRangeStatistics:
    """Tests for range_statistics."""

    def test_statistics(self, nn2):
        """Test conditioned r0 and d0 samples."""
        supplier = BrwSupplier(nn2, "binary", n_max=8)
        stats = range_statistics(supplier, n=4, s=1, replicas=100, seed=3)

        assert stats.replicas == 100
        assert stats.widened_ci == (stats.survivors < MIN_SURVIVORS)
        assert np.all(stats.r0 >= 0)
        assert np.all((stats.d0 >= 0) & (stats.d0 <= 1))
        assert stats.d0.size == stats.survivors // 2

    def test_summary(self, nn2):
        """Test summary fields."""
        supplier = BrwSupplier(nn2, "binary", n_max=8)
        summary = range_statistics(supplier, n=4, s=1, replicas=40, seed=3).to_dict()

        assert summary["model"] == "brw"
        assert "r0_median" in summary
        assert "extras" in summary

    def test_without_ranges(self, nn2):
        """Test keep_ranges=False skips d0."""
        supplier = BrwSupplier(nn2, "binary", n_max=8)
        stats = range_statistics(supplier, n=4, s=1, replicas=20, seed=3, keep_ranges=False)

        assert stats.d0.size == 0

    def test_bad_threshold(self, nn2):
        """Test s <= 0 is refused."""
        with pytest.raises(PreconditionError):
            range_statistics(BrwSupplier(nn2), n=4, s=0, replicas=10, seed=0)

    def test_bad_extension(self, nn2):
        """Test an extension below one is refused."""
        with pytest.raises(PreconditionError):
            range_statistics(BrwSupplier(nn2), n=4, s=1, replicas=10, seed=0, extension=0.5)

    def test_survivors_run_past_threshold(self, nn1):
        """Test kept runs are replayed to the long horizon, not cut at n*s."""
        short = range_statistics(
            BrwSupplier(nn1, "geometric", n_max=4), n=4, s=1, replicas=100, seed=5, extension=50
        )
        long = range_statistics(
            BrwSupplier(nn1, "geometric", n_max=200), n=4, s=1, replicas=100, seed=5, extension=1
        )

        assert short.survivors == long.survivors
        np.testing.assert_array_equal(short.r0, long.r0)
        assert short.extras["unfinished"] == long.extras["unfinished"]
        assert short.extras["horizon"] == long.extras["horizon"] == 200

    def test_without_extension_every_survivor_is_unfinished(self, nn1):
        """Test extension=1 leaves every kept run alive at the cut-off."""
        stats = range_statistics(
            BrwSupplier(nn1, "geometric", n_max=4), n=4, s=1, replicas=100, seed=5, extension=1
        )

        assert stats.survivors > 0
        assert stats.extras["unfinished"] == stats.survivors

    def test_kept_runs_are_extinct(self):
        """Test a long extension lets every kept run die out."""
        stats = range_statistics(
            GwSupplier(None, "geometric", n_max=2),
            n=2,
            s=1,
            replicas=30,
            seed=11,
            extension=5000,
        )

        assert stats.survivors > 0
        assert stats.extras["unfinished"] == 0
        assert stats.extras["capped"] == 0


class TestResampledKs:
    """Tests for the split-half KS threshold."""

    def test_quantile_in_range(self, rng):
        """Test quantile is a KS distance."""
        sample = rng.normal(size=200)
        q = resampled_ks_quantile(sample, 0.95, draws=50, rng=rng)

        assert 0.0 < q <= 1.0

    def test_too_small(self, rng):
        """Test fewer than four values is refused."""
        with pytest.raises(PreconditionError):
            resampled_ks_quantile(np.array([1.0, 2.0, 3.0]), 0.95, draws=10, rng=rng)


class TestModulus:
    """Tests for the modulus estimators."""

    def test_estimate_modulus(self, nn1):
        """Test Delta(0) = 0 and Delta non-decreasing in rho."""
        supplier = BrwSupplier(nn1, "binary", n_max=10)
        reports = estimate_modulus(supplier, n=4, rho_grid=[0, 0.5, 2], replicas=20, seed=2)

        assert len(reports) == 20
        for report in reports:
            assert report.delta[0] == 0.0
            assert report.delta == sorted(report.delta)
            assert report.lower_bound

    def test_tail_frequency(self):
        """Test scaled exceedance frequency."""
        reports = [
            ModulusReport(n=4, rho_grid=[0.0, 1.0], delta=[0.0, 1.0]),
            ModulusReport(n=4, rho_grid=[0.0, 1.0], delta=[0.0, 0.1]),
        ]

        # threshold 0.2 * (1 + 4^-0.5) = 0.3
        frequency = modulus_tail_frequency(reports, 1.0, C=0.2, alpha=0.5, n=4, m_n=4.0)
        assert frequency == pytest.approx(2.0)

    def test_tail_frequency_empty(self):
        """Test no reports gives zero."""
        assert modulus_tail_frequency([], 1.0, C=1.0, alpha=0.5, n=4, m_n=4.0) == 0.0


class TestPureBirth:
    """Tests for the pure-birth tail fit."""

    def test_exact_geometric_tail(self):
        """Test fit on counts with tail 2^{1-N}."""
        counts = [1] * 16 + [2] * 8 + [3] * 4 + [4] * 2 + [5] * 2
        fit = pure_birth_tail(counts, [1, 2, 3, 4, 5])

        assert fit.lam == pytest.approx(math.log(2))
        assert fit.C == pytest.approx(2.0)
        assert fit.to_dict()["tail"][0] == 1.0

    def test_too_few_points(self):
        """Test fewer than two positive tail points is refused."""
        with pytest.raises(PreconditionError):
            pure_birth_tail([1, 1, 1], [1, 2, 3])

    def test_distinct_sites(self, nn1):
        """Test distinct-site counts stay inside the light cone."""
        counts = distinct_sites(BrwSupplier(nn1, "binary", n_max=5), t=5, replicas=50, seed=1)

        assert counts.shape == (50,)
        assert np.all(counts >= 1)
        assert np.all(counts <= 11)
