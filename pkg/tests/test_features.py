from datetime import date
import numpy as np
import pandas as pd
import pytest
from app.core.helpers import CoreHelpers
from app.core.schemas import FiscalCalendar, FiscalQuarter
from app.exceptions import ConfigurationError, ContractViolation, DomainError
from app.features.builder import FeatureBuilder
from app.features.helpers import FeatureHelpers
from app.features.main import Features
from app.features.schemas import FeatureColumns, FeatureConfig


def outlook(rows):
    return pd.DataFrame(rows, columns=["indicator", "as_of_quarter_seq", "target_quarter_seq", "value"])


def dated_calendar(lunar_new_year):
    return FiscalCalendar(
        quarters=(FiscalQuarter(fiscal_year=2015, quarter=1, weeks_in_quarter=13, start_date=date(2015, 1, 4)),),
        lunar_new_year=lunar_new_year,
    )


class TestLags:
    def test_shift_by_one(self, make_calendar):
        stamps = make_calendar(1).week_stamps()[:3]
        series = CoreHelpers.series_from_values("DT", stamps, [10, 20, 30])
        lagged = Features.lag_features(series, [1]).frame
        assert list(lagged.index) == [2, 3]
        assert list(lagged["DT_w_1"]) == [10, 20]

    def test_column_naming(self, make_calendar):
        stamps = make_calendar(1).week_stamps()
        series = CoreHelpers.series_from_values("SVR", stamps, np.arange(1, 14))
        assert list(Features.lag_features(series, [3]).frame.columns) == ["SVR_w_3"]

    @pytest.mark.parametrize("lag", [0, 3])
    def test_lag_out_of_range(self, make_calendar, lag):
        stamps = make_calendar(1).week_stamps()[:3]
        series = CoreHelpers.series_from_values("DT", stamps, [10, 20, 30])
        with pytest.raises(ConfigurationError):
            Features.lag_features(series, [lag])


class TestAssemble:
    def response(self, calendar, n_weeks):
        stamps = calendar.week_stamps()[:n_weeks]
        return CoreHelpers.series_from_values("DT", stamps, np.arange(1, n_weeks + 1))

    def test_lead_one_loses_one_row(self, make_calendar):
        response = self.response(make_calendar(1), 10)
        column = FeatureColumns(frame=response.to_series().rename("x").to_frame())
        table = Features.assemble([column], response, 1)
        assert len(table) == 9
        assert table.response == "DT_target"
        # Row at origin week t holds the response of week t + 1.
        assert table.frame.loc[3, "DT_target"] == 4

    def test_long_lead_with_lags(self, make_calendar):
        response = self.response(make_calendar(10), 120)
        lags = Features.lag_features(response, [1, 2, 3])
        assert len(Features.assemble([lags], response, 16)) == 101

    def test_disjoint_ranges(self, make_calendar):
        response = self.response(make_calendar(1), 5)
        frame = pd.DataFrame({"x": [1.0, 2.0]}, index=pd.Index([50, 51], name="week"))
        with pytest.raises(DomainError):
            Features.assemble([FeatureColumns(frame=frame)], response, 1)

    def test_duplicate_columns(self, make_calendar):
        response = self.response(make_calendar(1), 10)
        column = FeatureColumns(frame=response.to_series().rename("x").to_frame())
        with pytest.raises(ContractViolation):
            Features.assemble([column, column], response, 1)


class TestOutlookDelta:
    def weeks(self, make_calendar):
        return [s for s in make_calendar(3).week_stamps()]

    def test_unchanged_outlook(self, make_calendar):
        weeks = self.weeks(make_calendar)
        rows = outlook([("GDP_WW", 1, 2, 3.0), ("GDP_WW", 2, 2, 3.0)])
        delta = Features.outlook_delta(rows, weeks).frame["gdp_ww_delta"]
        assert (delta == 0).all()

    def test_downward_revision(self, make_calendar):
        weeks = self.weeks(make_calendar)
        rows = outlook([("GDP_WW", 1, 2, 3.0), ("GDP_WW", 2, 2, 2.6)])
        delta = Features.outlook_delta(rows, weeks).frame["gdp_ww_delta"]
        in_quarter = [w.absolute_week for w in weeks if w.quarter_seq == 2]
        # The revision is issued in week 1 and visible from week 2.
        assert delta.loc[in_quarter[0]] == 0
        np.testing.assert_allclose(delta.loc[in_quarter[1:]], -0.4)
        assert (delta.loc[[w.absolute_week for w in weeks if w.quarter_seq != 2]] == 0).all()

    def test_single_snapshot(self, make_calendar):
        weeks = self.weeks(make_calendar)
        delta = Features.outlook_delta(outlook([("FX_RMB", 1, 2, 6.5)]), weeks).frame
        assert (delta["fx_rmb_delta"] == 0).all()

    def test_unordered_snapshots(self, make_calendar):
        rows = outlook([("GDP_WW", 2, 2, 3.0), ("GDP_WW", 1, 2, 2.6)])
        with pytest.raises(ContractViolation):
            Features.outlook_delta(rows, self.weeks(make_calendar))


class TestCnyEffect:
    def test_window_split_across_weeks(self):
        # Window 2015-01-07..2015-01-17: 4 days in week 1, 7 days in week 2.
        effect = Features.cny_effect(dated_calendar({2015: date(2015, 1, 12)}))
        assert effect.loc[1] == pytest.approx(4 / 11)
        assert effect.loc[2] == pytest.approx(7 / 11)
        assert effect.sum() == pytest.approx(1.0)
        assert effect.loc[5] == 0

    def test_missing_date(self):
        with pytest.raises(ConfigurationError):
            Features.cny_effect(dated_calendar({}))

    def test_bundled_weight_sums_per_year(self, bundled_calendar):
        effect = Features.cny_effect(bundled_calendar)
        assert effect.sum() == pytest.approx(12.0, abs=1.0)
        assert effect.max() <= 1.0


class TestFeatureTable:
    def test_response_must_be_positive(self, make_table):
        with pytest.raises(DomainError):
            make_table({"x": [1.0, 2.0]}, [1.0, 0.0])

    def test_categorical_out_of_range(self, make_table):
        with pytest.raises(ContractViolation):
            make_table({"q": [1, 5]}, [1.0, 2.0], categorical={"q": 4})

    def test_one_hot_over_declared_levels(self, make_table):
        table = make_table({"x": [1.0, 2.0], "q": [1, 2]}, [1.0, 2.0], categorical={"q": 4})
        design = table.design(["x", "q"], one_hot=True)
        assert list(design.columns) == ["x", "q_2", "q_3", "q_4"]
        assert design["q_3"].sum() == 0

    def test_unknown_variable(self, make_table):
        with pytest.raises(ContractViolation):
            make_table({"x": [1.0]}, [1.0]).select(["z"])


class TestBuilder:
    def test_tables_per_lob_and_lead(self, small_bundle):
        tables = FeatureBuilder.build(small_bundle, FeatureConfig(leads=[1, 3]))
        assert sorted(tables) == [("DT", 1), ("DT", 3), ("SVR", 1), ("SVR", 3)]
        table = tables[("DT", 3)]
        assert table.response == "DT_target"
        assert {"DT_w_1", "SVR_w_13", "DT_backlog_3", "SVR_backlog_3", "gdp_ww_delta", "cny_effect"} <= set(table.numeric)
        assert "DT_backlog_1" not in table.variables
        assert table.categorical["seasonality"] == 4
        assert int(table.response_weeks.max()) == small_bundle.calendar.n_weeks

    def test_feature_switches(self, small_bundle):
        config = FeatureConfig(leads=[1], lags=[1], asp_lags=[], include_outlook=False, include_cny=False)
        table = FeatureBuilder.build(small_bundle, config)[("SVR", 1)]
        assert sorted(table.numeric) == ["DT_backlog_1", "DT_w_1", "SVR_backlog_1", "SVR_w_1", "quarter_seq"]

    def test_unknown_lob(self, small_bundle):
        with pytest.raises(ConfigurationError):
            FeatureBuilder.build(small_bundle, FeatureConfig(lobs=["XX"]))

    def test_tables_read_back(self, small_bundle, tmp_path):
        table = FeatureBuilder.lead_table(small_bundle, "DT", 2, FeatureConfig())
        FeatureHelpers.write_table(table, tmp_path / "DT_lead_02.csv")
        loaded = FeatureHelpers.read_tables(tmp_path)[("DT", 2)]
        assert loaded.variables == table.variables
        assert loaded.categorical == table.categorical
        np.testing.assert_allclose(loaded.y, table.y)

    def test_empty_directory(self, tmp_path):
        with pytest.raises(ConfigurationError):
            FeatureHelpers.read_tables(tmp_path)
