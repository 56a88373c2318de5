import math
import pandas as pd
from pydantic import BaseModel, Field, field_validator
from app.core.schemas import FiscalCalendar, StrictModel, WeeklySeries

# Hockey-stick in-quarter selling pattern, mean 1 over 13 weeks.
DEFAULT_PROFILE = [
    0.7, 0.72, 0.75, 0.78, 0.82, 0.86, 0.9, 0.95, 1.0, 1.08, 1.2, 1.45, 1.79,
]


class SynthConfig(StrictModel):
    seed: int | None = Field(
        default=None, description="Generator seed, the global seed when unset."
    )
    n_years: int = Field(default=12, ge=1, description="Fiscal years to generate.")
    lobs: list[str] = Field(
        default=["DT", "MB", "SVR"], min_length=1, description="Lines of business."
    )
    trend_per_quarter: float = Field(
        default=0.01, description="Multiplicative growth per quarter."
    )
    season_amplitudes: list[float] = Field(
        default=[0.95, 1.0, 1.04, 1.1], min_length=4, max_length=4
    )
    in_quarter_profile: list[float] = Field(
        default=DEFAULT_PROFILE, min_length=13, max_length=13
    )
    cny_dip: float = Field(default=0.3, ge=0, le=1)
    booking_signal_strength: float = Field(default=0.8, ge=0, le=1)
    noise_sigma: float = Field(default=0.05, gt=0)
    base_level: float = Field(default=1000.0, gt=0)
    gdp_sensitivity: float = Field(
        default=0.01, description="Log sales response per point of world GDP growth."
    )
    max_booking_lead: int = Field(default=16, ge=1)

    @field_validator("lobs")
    def unique_lobs(cls, value):
        if len(set(value)) != len(value):
            raise ValueError("lobs must be unique")
        return value

    @field_validator("season_amplitudes")
    def positive_amplitudes(cls, value):
        if not all(math.isfinite(v) and v > 0 for v in value):
            raise ValueError("season amplitudes must be finite and positive")
        return value

    @field_validator("in_quarter_profile")
    def profile_mean_one(cls, value):
        if not all(math.isfinite(v) and v > 0 for v in value):
            raise ValueError("in-quarter profile weights must be finite and positive")
        if abs(sum(value) - 13) > 1e-9:
            raise ValueError(f"in-quarter profile sums to {sum(value)}, expected 13")
        return value


class OutlookSnapshot(BaseModel):
    indicator: str
    as_of_quarter_seq: int = Field(..., ge=1)
    target_quarter_seq: int = Field(..., ge=1)
    value: float


class SynthBundle(BaseModel):
    calendar: FiscalCalendar
    sales: dict[str, WeeklySeries] = Field(..., description="Keyed by lob.")
    bookings: dict[str, WeeklySeries] = Field(
        ..., description="Keyed by <lob>_backlog_<lead>."
    )
    asp: dict[str, WeeklySeries] = Field(..., description="Keyed by <lob>_asp.")
    outlook: list[OutlookSnapshot]

    def outlook_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [s.model_dump() for s in self.outlook],
            columns=list(OutlookSnapshot.model_fields),
        )
