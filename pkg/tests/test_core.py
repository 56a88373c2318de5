import numpy as np
import pytest
from app.core.helpers import CoreHelpers
from app.core.main import Core
from app.exceptions import ConfigurationError, ContractViolation, DomainError


def series_for(calendar, values_by_quarter):
    stamps = calendar.week_stamps()
    values = [values_by_quarter(s) for s in stamps]
    return CoreHelpers.series_from_values("DT", stamps, values)


class TestMape:
    def test_identity(self):
        assert Core.mape([100, 200], [100, 200]) == 0.0

    def test_hand_computed(self):
        assert Core.mape([110, 90], [100, 100]) == pytest.approx(10.0)

    def test_zero_actual(self):
        with pytest.raises(DomainError):
            Core.mape([50], [0])

    def test_length_mismatch(self):
        with pytest.raises(ContractViolation):
            Core.mape([1, 2], [1])

    def test_non_finite_prediction(self):
        with pytest.raises(DomainError):
            Core.mape([np.nan], [1])

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(1, 50))
            actual = rng.uniform(0.1, 1000, n)
            predicted = actual * rng.uniform(0.2, 1.8, n)
            expected = 100.0 * sum(abs(p - a) / a for p, a in zip(predicted, actual)) / n
            assert abs(Core.mape(predicted, actual) - expected) < 1e-12 * max(1.0, expected)

    def test_permutation_and_scale_invariant(self):
        rng = np.random.default_rng(1)
        actual = rng.uniform(50, 150, 40)
        predicted = actual + rng.normal(0, 10, 40)
        order = rng.permutation(40)
        value = Core.mape(predicted, actual)
        assert Core.mape(predicted[order], actual[order]) == pytest.approx(value, rel=1e-12)
        for factor in (1e-3, 7.5, 1e6):
            assert Core.mape(factor * predicted, factor * actual) == pytest.approx(value, rel=1e-12)


class TestZscore:
    def test_already_standard(self):
        np.testing.assert_allclose(Core.zscore([1, -1]), [1, -1])

    def test_population_std(self):
        np.testing.assert_allclose(Core.zscore([10, 20, 30]), [-1.2247449, 0, 1.2247449], atol=1e-6)

    def test_zero_variance(self):
        with pytest.raises(DomainError):
            Core.zscore([5, 5, 5])

    def test_random_vectors_are_standardized(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            values = rng.normal(rng.uniform(-100, 100), rng.uniform(0.1, 50), int(rng.integers(2, 200)))
            scores = Core.zscore(values)
            assert abs(scores.mean()) < 1e-12
            assert scores.std() == pytest.approx(1.0, abs=1e-12)


class TestQuarterlyYoy:
    def test_constant_series(self, make_calendar):
        calendar = make_calendar(8)
        yoy = Core.quarterly_yoy(series_for(calendar, lambda s: 10.0), calendar)
        assert list(yoy.index) == [5, 6, 7, 8]
        np.testing.assert_allclose(yoy.to_numpy(), 0.0, atol=1e-12)

    def test_doubling(self, make_calendar):
        calendar = make_calendar(8)
        series = series_for(calendar, lambda s: 10.0 if s.fiscal_year == 2011 else 5.0)
        yoy = Core.quarterly_yoy(series, calendar)
        np.testing.assert_allclose(yoy.to_numpy(), 1.0)

    def test_long_quarter_is_normalized(self, make_calendar):
        calendar = make_calendar(8, long_quarters=(5,))
        yoy = Core.quarterly_yoy(series_for(calendar, lambda s: 10.0), calendar)
        assert yoy.loc[5] == pytest.approx(0.0)

    def test_short_history_is_empty(self, make_calendar):
        calendar = make_calendar(4)
        assert Core.quarterly_yoy(series_for(calendar, lambda s: 1.0), calendar).empty

    def test_scale_invariant(self, make_calendar):
        calendar = make_calendar(12, long_quarters=(6,))
        rng = np.random.default_rng(3)
        stamps = calendar.week_stamps()
        series = CoreHelpers.series_from_values("DT", stamps, rng.uniform(50, 150, len(stamps)))
        yoy = Core.quarterly_yoy(series, calendar)
        assert len(yoy) == 8
        for factor in (0.01, 3.0, 1e5):
            scaled = Core.quarterly_yoy(series.scaled(factor), calendar)
            np.testing.assert_allclose(scaled.to_numpy(), yoy.to_numpy(), rtol=1e-12, atol=1e-14)
            assert list(scaled.index) == list(yoy.index)


class TestCalendar:
    def test_week_stamp_fields(self, make_calendar):
        stamps = make_calendar(8).week_stamps()
        assert (stamps[0].quarter, stamps[0].week_of_quarter, stamps[0].quarter_seq) == (1, 1, 1)
        seventh = [s for s in stamps if s.quarter_seq == 7]
        assert (seventh[-1].quarter, seventh[-1].week_of_quarter, seventh[-1].quarter_seq) == (3, 13, 7)

    def test_long_quarter_has_week_14(self, make_calendar):
        stamps = make_calendar(4, long_quarters=(4,)).week_stamps()
        assert stamps[-1].week_of_quarter == 14
        assert len(stamps) == 53

    def test_bundled_calendar(self, bundled_calendar):
        assert len(bundled_calendar.quarters) == 48
        assert bundled_calendar.has_dates
        assert 2015 in bundled_calendar.lunar_new_year

    def test_head_beyond_calendar(self, make_calendar):
        with pytest.raises(ConfigurationError):
            make_calendar(8).head(3)

    def test_series_csv_roundtrip(self, make_calendar, tmp_path):
        calendar = make_calendar(4)
        series = series_for(calendar, lambda s: float(s.absolute_week))
        CoreHelpers.write_weekly_series([series], tmp_path / "sales.csv")
        assert CoreHelpers.read_weekly_series(tmp_path / "sales.csv", calendar)["DT"] == series

    def test_unknown_week_in_file(self, make_calendar, tmp_path):
        (tmp_path / "sales.csv").write_text(
            "lob,fiscal_year,quarter,week_of_quarter,value\nDT,2030,1,1,5\n"
        )
        with pytest.raises(ConfigurationError):
            CoreHelpers.read_weekly_series(tmp_path / "sales.csv", make_calendar(4))


class TestSeeds:
    def test_derived_seed_is_stable(self):
        assert CoreHelpers.derive_seed(2015, "search", "MLR") == CoreHelpers.derive_seed(2015, "search", "MLR")

    def test_paths_give_distinct_seeds(self):
        assert CoreHelpers.derive_seed(2015, "search", "MLR") != CoreHelpers.derive_seed(2015, "search", "RF")
        assert CoreHelpers.derive_seed(1, "a") != CoreHelpers.derive_seed(2, "a")

    def test_manifest_is_reproducible(self, tmp_path):
        output = tmp_path / "result.csv"
        output.write_text("a\n1\n")
        first = CoreHelpers.write_manifest(tmp_path, "synth", "{}", 1, "1.0.0", [], [output]).read_text()
        second = CoreHelpers.write_manifest(tmp_path, "synth", "{}", 1, "1.0.0", [], [output]).read_text()
        assert first == second
        assert "result.csv" in first
