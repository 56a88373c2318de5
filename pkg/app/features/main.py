import logging
from datetime import timedelta
import numpy as np
import pandas as pd
from app.core.schemas import FiscalCalendar, WeekStamp, WeeklySeries
from app.exceptions import ConfigurationError, ContractViolation, DomainError
from app.features.schemas import FeatureColumns, FeatureTable

OUTLOOK_COLUMNS = ["indicator", "as_of_quarter_seq", "target_quarter_seq", "value"]

# Lunar new year is spread evenly over the day itself and five days either side.
CNY_HALF_WINDOW = 5
CNY_DAY_WEIGHT = 1 / (2 * CNY_HALF_WINDOW + 1)


class Features:
    @classmethod
    def outlook_delta(
        cls, snapshots: pd.DataFrame, weeks: list[WeekStamp]
    ) -> FeatureColumns:
        """
        Per week, the latest outlook for the week's own quarter that was issued
        strictly before the week, minus the outlook before it. A snapshot with
        as_of quarter a is issued during week 1 of quarter a, so it is visible
        from week 2 of a onwards. Fewer than two visible snapshots give 0.
        """
        missing = [c for c in OUTLOOK_COLUMNS if c not in snapshots.columns]
        if missing:
            raise ContractViolation(
                f"outlook table is missing columns {missing}",
                module="features",
                field=missing[0],
            )

        quarter_seq = np.array([w.quarter_seq for w in weeks])
        # Highest as_of quarter visible in each week.
        cutoff = np.array([w.quarter_seq - (w.week_of_quarter == 1) for w in weeks])
        index = pd.Index([w.absolute_week for w in weeks], name="week")

        columns = {}
        for indicator, rows in snapshots.groupby("indicator", sort=True):
            history = {}
            for target, target_rows in rows.groupby("target_quarter_seq", sort=False):
                as_of = target_rows["as_of_quarter_seq"].to_numpy(dtype=int)
                if np.any(np.diff(as_of) <= 0):
                    raise ContractViolation(
                        f"{indicator} snapshots for quarter {target} are not ordered by as_of",
                        module="features",
                        field="as_of_quarter_seq",
                    )
                history[int(target)] = (as_of, target_rows["value"].to_numpy(dtype=float))

            delta = np.zeros(len(weeks))
            for i, (target, visible_until) in enumerate(zip(quarter_seq, cutoff)):
                if target not in history:
                    continue
                as_of, values = history[target]
                visible = np.searchsorted(as_of, visible_until, side="right")
                if visible >= 2:
                    delta[i] = values[visible - 1] - values[visible - 2]
            columns[f"{str(indicator).lower()}_delta"] = delta

        return FeatureColumns(frame=pd.DataFrame(columns, index=index))

    @classmethod
    def cny_effect(cls, calendar: FiscalCalendar) -> pd.Series:
        n_weeks = calendar.n_weeks
        first_day = calendar.week_start(1)
        effect = np.zeros(n_weeks)

        for year in calendar.covered_years():
            try:
                lny = calendar.lunar_new_year[year]
            except KeyError:
                raise ConfigurationError(
                    f"no lunar new year date for {year}",
                    module="features",
                    field="lunar_new_year",
                )
            for offset in range(-CNY_HALF_WINDOW, CNY_HALF_WINDOW + 1):
                day = lny + timedelta(days=offset)
                week = (day - first_day).days // 7
                if 0 <= week < n_weeks:
                    effect[week] += CNY_DAY_WEIGHT

        return pd.Series(
            effect,
            index=pd.Index(range(1, n_weeks + 1), name="week"),
            name="cny_effect",
        )

    @classmethod
    def calendar_features(
        cls, weeks: list[WeekStamp], calendar: FiscalCalendar
    ) -> FeatureColumns:
        frame = pd.DataFrame(
            {
                "seasonality": [w.quarter for w in weeks],
                "week_of_quarter": [w.week_of_quarter for w in weeks],
                "quarter_seq": [w.quarter_seq for w in weeks],
            },
            index=pd.Index([w.absolute_week for w in weeks], name="week"),
        )
        longest_quarter = max(q.weeks_in_quarter for q in calendar.quarters)
        return FeatureColumns(
            frame=frame,
            categorical={"seasonality": 4, "week_of_quarter": longest_quarter},
        )

    @classmethod
    def lag_features(cls, series: WeeklySeries, lags: list[int]) -> FeatureColumns:
        values = series.to_series()
        columns = {}
        for lag in lags:
            if lag < 1 or lag >= len(values):
                raise ConfigurationError(
                    f"lag {lag} is outside 1..{len(values) - 1} for {series.line_of_business}",
                    module="features",
                    field="lags",
                )
            columns[f"{series.line_of_business}_w_{lag}"] = values.shift(lag)
        return FeatureColumns(frame=pd.DataFrame(columns).dropna())

    @classmethod
    def assemble(
        cls, columns: list[FeatureColumns], response: WeeklySeries, lead_time: int
    ) -> FeatureTable:
        if lead_time < 1:
            raise ConfigurationError(
                f"lead time must be at least 1, got {lead_time}",
                module="features",
                field="lead_time",
            )
        response_name = f"{response.line_of_business}_target"

        names = [name for part in columns for name in part.frame.columns]
        duplicated = sorted({n for n in names if names.count(n) > 1})
        if duplicated or response_name in names:
            field = duplicated[0] if duplicated else response_name
            raise ContractViolation(
                f"column {field} is supplied twice", module="features", field=field
            )

        target = response.to_series()
        target.index = target.index - lead_time

        frame = pd.concat(
            [part.frame for part in columns] + [target.rename(response_name)],
            axis=1,
            join="inner",
        ).dropna()
        if frame.empty:
            raise DomainError(
                f"features and the lead-{lead_time} response share no weeks",
                module="features",
                field=response_name,
            )

        categorical = {}
        for part in columns:
            categorical.update(part.categorical)
        for name in categorical:
            frame[name] = frame[name].astype(int)
        numeric = [n for n in names if n not in categorical]

        logging.debug(
            f"Assembled lead {lead_time} table for {response.line_of_business}: "
            f"{len(frame)} rows, {len(names)} variables."
        )
        return FeatureTable(
            frame=frame.sort_index(),
            numeric=numeric,
            categorical=categorical,
            response=response_name,
            lead_time=lead_time,
        )
