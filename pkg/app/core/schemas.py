import math
from datetime import date, timedelta
from typing import Literal
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from app.exceptions import ConfigurationError


class StrictModel(BaseModel):
    # Configuration blocks reject unknown keys.
    model_config = ConfigDict(extra="forbid")


class WeekStamp(BaseModel):
    model_config = ConfigDict(frozen=True)

    absolute_week: int = Field(
        ..., ge=1, description="Consecutive week index over the calendar."
    )
    fiscal_year: int
    quarter: int = Field(..., ge=1, le=4)
    week_of_quarter: int = Field(..., ge=1, le=14)
    quarter_seq: int = Field(
        ..., ge=1, description="Consecutive quarter counter starting at 1."
    )


class FiscalQuarter(BaseModel):
    model_config = ConfigDict(frozen=True)

    fiscal_year: int
    quarter: int = Field(..., ge=1, le=4)
    weeks_in_quarter: Literal[13, 14]
    start_date: date | None = Field(
        default=None, description="First day of the quarter, when known."
    )


class FiscalCalendar(BaseModel):
    model_config = ConfigDict(frozen=True)

    quarters: tuple[FiscalQuarter, ...]
    lunar_new_year: dict[int, date] = Field(
        default_factory=dict, description="Calendar year -> lunar new year date."
    )

    @model_validator(mode="after")
    def check_contiguous(self):
        if not self.quarters:
            raise ValueError("calendar needs at least one quarter")

        for previous, current in zip(self.quarters, self.quarters[1:]):
            expected = (
                (previous.fiscal_year, previous.quarter + 1)
                if previous.quarter < 4
                else (previous.fiscal_year + 1, 1)
            )
            if (current.fiscal_year, current.quarter) != expected:
                raise ValueError(
                    f"quarters are not contiguous: {previous.fiscal_year}Q{previous.quarter}"
                    f" followed by {current.fiscal_year}Q{current.quarter}"
                )

        dated = [q.start_date is not None for q in self.quarters]
        if any(dated) and not all(dated):
            raise ValueError("start_date must be given for every quarter or none")
        if all(dated):
            for previous, current in zip(self.quarters, self.quarters[1:]):
                gap = (current.start_date - previous.start_date).days
                if gap != 7 * previous.weeks_in_quarter:
                    raise ValueError(
                        f"start_date of {current.fiscal_year}Q{current.quarter} is {gap} days"
                        f" after the previous quarter, expected {7 * previous.weeks_in_quarter}"
                    )

        for year, lny in self.lunar_new_year.items():
            if lny.year != year:
                raise ValueError(f"lunar new year {lny} filed under year {year}")
        return self

    @property
    def n_weeks(self) -> int:
        return sum(q.weeks_in_quarter for q in self.quarters)

    @property
    def has_dates(self) -> bool:
        return self.quarters[0].start_date is not None

    def weeks_in(self, fiscal_year: int, quarter: int) -> int:
        for item in self.quarters:
            if item.fiscal_year == fiscal_year and item.quarter == quarter:
                return item.weeks_in_quarter
        raise ConfigurationError(
            f"{fiscal_year}Q{quarter} is not covered by the calendar",
            module="core",
            field="fiscal_year",
        )

    def week_stamps(self) -> list[WeekStamp]:
        stamps = []
        absolute_week = 1
        for quarter_seq, item in enumerate(self.quarters, start=1):
            for week_of_quarter in range(1, item.weeks_in_quarter + 1):
                stamps.append(
                    WeekStamp(
                        absolute_week=absolute_week,
                        fiscal_year=item.fiscal_year,
                        quarter=item.quarter,
                        week_of_quarter=week_of_quarter,
                        quarter_seq=quarter_seq,
                    )
                )
                absolute_week += 1
        return stamps

    def stamp_lookup(self) -> dict[tuple[int, int, int], WeekStamp]:
        return {
            (s.fiscal_year, s.quarter, s.week_of_quarter): s for s in self.week_stamps()
        }

    def week_start(self, absolute_week: int) -> date:
        if not self.has_dates:
            raise ConfigurationError(
                "calendar has no start_date column, weeks cannot be mapped to days",
                module="core",
                field="start_date",
            )
        return self.quarters[0].start_date + timedelta(days=7 * (absolute_week - 1))

    def covered_years(self) -> range:
        first_day = self.week_start(1)
        last_day = self.week_start(self.n_weeks) + timedelta(days=6)
        return range(first_day.year, last_day.year + 1)

    def head(self, n_years: int) -> "FiscalCalendar":
        years = sorted({q.fiscal_year for q in self.quarters})
        if len(years) < n_years:
            raise ConfigurationError(
                f"calendar covers {len(years)} fiscal years, {n_years} requested",
                module="core",
                field="n_years",
            )
        keep = set(years[:n_years])
        return self.model_copy(
            update={"quarters": tuple(q for q in self.quarters if q.fiscal_year in keep)}
        )


class WeeklySeries(BaseModel):
    model_config = ConfigDict(frozen=True)

    line_of_business: str = Field(..., description="Series identifier, e.g. DT.")
    weeks: tuple[WeekStamp, ...]
    values: tuple[float, ...]

    @model_validator(mode="after")
    def check_points(self):
        if len(self.weeks) != len(self.values):
            raise ValueError("weeks and values differ in length")
        if not self.weeks:
            raise ValueError(f"series {self.line_of_business} is empty")
        for previous, current in zip(self.weeks, self.weeks[1:]):
            if current.absolute_week != previous.absolute_week + 1:
                raise ValueError(
                    f"series {self.line_of_business} has a gap after week {previous.absolute_week}"
                )
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError(f"series {self.line_of_business} holds non-finite values")
        return self

    def __len__(self) -> int:
        return len(self.values)

    def to_series(self) -> pd.Series:
        return pd.Series(
            self.values,
            index=pd.Index([w.absolute_week for w in self.weeks], name="week"),
            name=self.line_of_business,
            dtype=float,
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([w.model_dump() for w in self.weeks])
        frame["value"] = self.values
        return frame

    def scaled(self, factor: float) -> "WeeklySeries":
        return self.model_copy(update={"values": tuple(v * factor for v in self.values)})
