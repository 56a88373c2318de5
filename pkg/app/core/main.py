import logging
import numpy as np
import pandas as pd
from app.core.schemas import FiscalCalendar, WeeklySeries
from app.exceptions import ContractViolation, DomainError


class Core:
    # A 14-week quarter is scaled down to 13 weeks before growth rates are taken.
    QUARTER_WEEKS = 13

    @classmethod
    def mape(cls, predicted, actual) -> float:
        """
        Mean absolute percentage error, in percent. Nonpositive actuals raise DomainError.
        """
        predicted = np.asarray(predicted, dtype=float).ravel()
        actual = np.asarray(actual, dtype=float).ravel()

        if predicted.shape != actual.shape:
            raise ContractViolation(
                f"predicted has {predicted.size} values, actual has {actual.size}",
                module="core",
                field="predicted",
            )
        if actual.size == 0:
            raise ContractViolation(
                "MAPE needs at least one point", module="core", field="actual"
            )
        # Written as a negation so NaN actuals fail too.
        if np.any(~(actual > 0)):
            raise DomainError(
                "MAPE is undefined for nonpositive actual values",
                module="core",
                field="actual",
            )
        if not np.all(np.isfinite(predicted)):
            raise DomainError(
                "predictions hold non-finite values", module="core", field="predicted"
            )

        return float(100.0 * np.mean(np.abs(predicted - actual) / actual))

    @classmethod
    def quarterly_yoy(cls, series: WeeklySeries, calendar: FiscalCalendar) -> pd.Series:
        frame = series.to_frame()
        totals = frame.groupby(["fiscal_year", "quarter"]).agg(
            total=("value", "sum"),
            weeks=("value", "size"),
            quarter_seq=("quarter_seq", "first"),
        )
        totals["weeks_in_quarter"] = [
            calendar.weeks_in(year, quarter) for year, quarter in totals.index
        ]

        # Quarters the series only partly covers carry no comparable total.
        complete = totals[totals["weeks"] == totals["weeks_in_quarter"]]
        if len(complete) < 5:
            logging.debug(
                f"{series.line_of_business} spans {len(complete)} complete quarters, no YoY available."
            )
            return pd.Series(dtype=float, name="yoy")

        normalized = complete["total"].where(
            complete["weeks_in_quarter"] == cls.QUARTER_WEEKS,
            complete["total"] * cls.QUARTER_WEEKS / 14,
        )
        prior = normalized.copy()
        prior.index = pd.MultiIndex.from_tuples(
            [(year + 1, quarter) for year, quarter in prior.index],
            names=prior.index.names,
        )
        aligned = pd.concat([normalized.rename("current"), prior.rename("prior")], axis=1)
        aligned = aligned.dropna()
        aligned = aligned.join(complete["quarter_seq"])

        yoy = aligned["current"] / aligned["prior"] - 1.0
        yoy.index = pd.Index(aligned["quarter_seq"].astype(int), name="quarter_seq")
        return yoy.sort_index().rename("yoy")

    @classmethod
    def zscore(cls, series) -> np.ndarray:
        # Population standard deviation (divide by n).
        values = np.asarray(series, dtype=float).ravel()
        if values.size < 2:
            raise DomainError(
                "zscore needs at least two values", module="core", field="series"
            )
        std = values.std()
        if np.ptp(values) == 0 or not np.isfinite(std):
            raise DomainError(
                "zscore is undefined for a zero-variance series",
                module="core",
                field="series",
            )
        return (values - values.mean()) / std
