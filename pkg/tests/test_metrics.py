import numpy as np
import pytest

from sep_ergo.core import ResourceLimitError, TorusLattice
from sep_ergo.ensembles import Bernoulli, DiffLawSpec, MarkovChain1d
from sep_ergo.metrics import (
    EstimateSeries,
    canonical_engine,
    dbar_bound_series,
    duality_check,
    estimate_discrepancy_density,
    fit_decay_exponent,
    state_distribution_comparison,
    theoretical_exponent,
    variance_bound_check,
)

DIFF_HALF = DiffLawSpec(Bernoulli(0.5), 0.5)


class TestExponent:
    def test_values(self):
        assert theoretical_exponent(1) == 0.25
        assert theoretical_exponent(2) == 0.5
        assert theoretical_exponent(4) == 1.0
        assert theoretical_exponent(5) == 1.0
        assert theoretical_exponent(9) == 1.0

    def test_rejects(self):
        with pytest.raises(ValueError):
            theoretical_exponent(0)

    def test_engine_names(self):
        assert canonical_engine("stirring") == "stirring+thin"
        assert canonical_engine("gillespie") == "gillespie"
        with pytest.raises(ValueError):
            canonical_engine("exact")


class TestEstimateSeries:
    def _series(self, **kw):
        base = dict(kind="x", times=[1.0, 2.0, 4.0],
                    estimates=[0.4, 0.3, 0.2], stderrs=[0.01, 0.01, 0.01],
                    replicas=8, master_seed=0,
                    metadata={"gamma": 0.25, "correlation_sum_a": 0.25})
        base.update(kw)
        return EstimateSeries(**base)

    def test_validation(self):
        with pytest.raises(ValueError):
            self._series(times=[2.0, 1.0, 4.0])
        with pytest.raises(ValueError):
            self._series(estimates=[0.4, 1.3, 0.2])
        with pytest.raises(ValueError):
            self._series(stderrs=[0.01, -0.01, 0.01])
        with pytest.raises(ValueError):
            self._series(replicas=1)

    def test_envelope_ratio(self):
        s = self._series()
        manual = np.array([0.4, 0.3, 0.2]) * np.array([1.0, 2.0, 4.0]) ** 0.25 / 0.5
        assert np.allclose(s.envelope_ratio(), manual, atol=1e-15)

    def test_csv_rows(self):
        rows = self._series().to_csv_rows()
        assert len(rows) == 3 and len(rows[0]) == 5
        assert float(rows[0][0]) == 1.0
        assert float(rows[2][4]) == pytest.approx(0.2 * 4**0.25 / 0.5)


class TestFit:
    def _power_series(self, slope, noise=0.0):
        t = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
        est = 0.5 * t**slope + noise
        return EstimateSeries("x", t, est, np.full(5, 1e-3), 8, 0, {})

    def test_recovers_exact_power_law(self):
        f = fit_decay_exponent(self._power_series(-0.25))
        assert f.slope == pytest.approx(-0.25, abs=1e-12)
        assert np.exp(f.intercept) == pytest.approx(0.5, abs=1e-12)

    def test_drops_unusable_points(self):
        t = np.array([0.0, 1.0, 2.0, 4.0, 8.0, 16.0])
        est = np.concatenate([[0.9], 0.5 * t[1:] ** -0.25])
        s = EstimateSeries("x", t, est, np.full(6, 1e-3), 8, 0, {})
        f = fit_decay_exponent(s)
        assert f.dropped_times == (0.0,)
        assert f.slope == pytest.approx(-0.25, abs=1e-12)

    def test_window(self):
        s = self._power_series(-0.25)
        f = fit_decay_exponent(s, window=[2.0, 16.0])
        assert f.used_times == (2.0, 4.0, 8.0, 16.0)
        with pytest.raises(ValueError):
            fit_decay_exponent(s, window=[8.0, 16.0])  # two points only

    def test_half_width_scales_with_stderr(self):
        t = np.array([1.0, 2.0, 4.0, 8.0])
        est = 0.5 * t**-0.25
        narrow = EstimateSeries("x", t, est, np.full(4, 1e-4), 8, 0, {})
        wide = EstimateSeries("x", t, est, np.full(4, 1e-2), 8, 0, {})
        a = fit_decay_exponent(narrow).half_width
        b = fit_decay_exponent(wide).half_width
        assert b == pytest.approx(100 * a, rel=1e-9)


class TestDensityEstimates:
    def test_time_zero_matches_initial_law(self):
        # E|xi_0(0)| = 2 rho (1 - rho) = 1/2 for the symmetric Bernoulli pair
        lat = TorusLattice(1, 64)
        s = estimate_discrepancy_density(DIFF_HALF, lat, [0.0, 1.0], 64, seed=31)
        assert abs(s.estimates[0] - 0.5) <= 5 * s.stderrs[0]

    def test_worker_invariance(self):
        lat = TorusLattice(1, 32)
        a = estimate_discrepancy_density(DIFF_HALF, lat, [1.0], 12, seed=7, workers=1)
        b = estimate_discrepancy_density(DIFF_HALF, lat, [1.0], 12, seed=7, workers=4)
        assert np.array_equal(a.estimates, b.estimates)
        assert np.array_equal(a.stderrs, b.stderrs)

    def test_engines_agree(self):
        # independent realizations of one law: means within a joint band
        lat = TorusLattice(1, 64)
        g = estimate_discrepancy_density(DIFF_HALF, lat, [1.0], 400, seed=13,
                                         engine="gillespie")
        s = estimate_discrepancy_density(DIFF_HALF, lat, [1.0], 400, seed=14,
                                         engine="stirring+thin")
        joint = float(np.hypot(g.stderrs[0], s.stderrs[0]))
        assert abs(g.estimates[0] - s.estimates[0]) <= 4 * joint

    def test_dbar_metadata(self):
        lat = TorusLattice(1, 32)
        s = dbar_bound_series(DIFF_HALF, lat, [1.0, 2.0], 8, seed=3)
        assert s.kind == "dbar_upper_bound"
        assert s.metadata["gamma"] == 0.25
        assert s.metadata["correlation_sum_a"] == pytest.approx(0.25)
        assert s.metadata["correlation_sum_b"] == pytest.approx(0.5)
        assert s.envelope_ratio().shape == (2,)

    def test_replica_floor(self):
        with pytest.raises(ValueError):
            estimate_discrepancy_density(DIFF_HALF, TorusLattice(1, 16),
                                         [1.0], 1, seed=0)


class TestStateComparison:
    @pytest.mark.parametrize("engine", ["gillespie", "stirring+thin"])
    def test_sep_small(self, engine):
        out = state_distribution_comparison("sep", TorusLattice(1, 3), 1.0,
                                            3000, seed=5, engine=engine)
        assert out["pass"], out

    def test_reports_real_monte_carlo_error(self):
        out = state_distribution_comparison("sep", TorusLattice(1, 3), 1.0,
                                            3000, seed=5)
        assert 0.0 < out["max_abs_error"] < 0.05
        assert out["max_excess"] <= 0.0


class TestVarianceBound:
    def test_passes_with_margin(self):
        lat = TorusLattice(1, 64)
        out = variance_bound_check(DIFF_HALF, 8, [1.0], 400, 17, lat)
        assert out["pass"]
        assert out["bound"] == pytest.approx(2 * 8 * 0.5)
        assert out["estimates"][0] < out["bound"]

    def test_box_validation(self):
        with pytest.raises(ValueError):
            variance_bound_check(DIFF_HALF, 80, [1.0], 4, 0, TorusLattice(1, 16))


class TestDuality:
    def test_oracle_mode_small(self):
        mu = MarkovChain1d(((0.7, 0.3), (0.4, 0.6)))
        out = duality_check(mu, 0, 2, 0.8, TorusLattice(1, 4), mode="oracle")
        assert out["discrepancy"] <= 1e-10

    def test_monte_carlo_mode(self):
        out = duality_check(Bernoulli(0.3), 0, 3, 0.5, TorusLattice(1, 8),
                            mode="monte_carlo", replicas=4000, seed=23)
        assert out["pass"], out

    def test_guards(self):
        with pytest.raises(ValueError):
            duality_check(Bernoulli(0.3), 1, 1, 0.5, TorusLattice(1, 4))
        with pytest.raises(ResourceLimitError):
            duality_check(Bernoulli(0.3), 0, 1, 0.5, TorusLattice(1, 16),
                          mode="oracle")
