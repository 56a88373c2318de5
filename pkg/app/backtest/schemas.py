from typing import Literal
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from app.collinearity.schemas import CollinearityConfig
from app.core.schemas import StrictModel
from app.ensemble.schemas import SearchConfig
from app.enums import CellStatusEnum, MethodEnum
from app.exceptions import ContractViolation
from app.features.schemas import FeatureTable

REPORT_FORMAT_VERSION = 1


class WindowPlan(BaseModel):
    """
    One moving-window experiment. Blocks hold origin weeks. A training row
    also needs its response before val_start and a validation row its
    response before test_week, so no row reads the target or later.
    """

    model_config = ConfigDict(frozen=True)

    train_weeks: int = Field(default=104, ge=1)
    val_weeks: int = Field(default=52, ge=1)
    test_week: int = Field(..., ge=1, description="Absolute week of the target.")
    lead_time: int = Field(..., ge=1)
    train_start: int
    train_end: int
    val_start: int
    val_end: int

    @model_validator(mode="after")
    def check_blocks(self):
        if self.train_end - self.train_start + 1 != self.train_weeks:
            raise ContractViolation(
                "training block length differs from train_weeks",
                module="backtest",
                field="train_end",
            )
        if self.val_start != self.train_end + 1 or self.val_end - self.val_start + 1 != self.val_weeks:
            raise ContractViolation(
                "validation block must directly follow the training block",
                module="backtest",
                field="val_start",
            )
        if self.train_start <= self.test_week <= self.val_end:
            raise ContractViolation(
                f"test week {self.test_week} lies inside the training or validation block",
                module="backtest",
                field="test_week",
            )
        if self.test_week < self.train_start:
            raise ContractViolation(
                f"test week {self.test_week} precedes the training block",
                module="backtest",
                field="test_week",
            )
        return self

    @property
    def window_id(self) -> str:
        return f"w{self.test_week:04d}_j{self.lead_time:02d}"

    @property
    def test_origin(self) -> int:
        return self.test_week - self.lead_time

    def train_rows(self, table: FeatureTable) -> FeatureTable:
        origin = table.weeks
        return table.take(
            (origin >= self.train_start)
            & (origin <= self.train_end)
            & (table.response_weeks < self.val_start)
        )

    def val_rows(self, table: FeatureTable) -> FeatureTable:
        origin = table.weeks
        return table.take(
            (origin >= self.val_start)
            & (origin <= self.val_end)
            & (table.response_weeks < self.test_week)
        )

    def test_rows(self, table: FeatureTable) -> FeatureTable:
        return table.take(table.weeks == self.test_origin)


class BacktestConfig(StrictModel):
    methods: list[MethodEnum] = Field(default=list(MethodEnum))
    leads: list[int] = Field(default=[1, 5, 16], min_length=1)
    lobs: list[str] | None = None
    test_span: tuple[int, int] | None = Field(
        default=None, description="First and last test week, the final n_test_weeks when unset."
    )
    n_test_weeks: int = Field(default=52, ge=1)
    train_weeks: int = Field(default=104, ge=1)
    val_weeks: int = Field(default=52, ge=1)
    search: SearchConfig = Field(default_factory=lambda: SearchConfig(cap=500))
    collinearity: CollinearityConfig = Field(default_factory=CollinearityConfig)


class BacktestCell(BaseModel):
    lob: str
    method: MethodEnum
    test_week: int
    lead_time: int
    window_id: str
    mape: float | None = None
    prediction: float | None = None
    actual: float | None = None
    M: int | None = None
    n_variables: int | None = None
    status: CellStatusEnum = CellStatusEnum.OK
    error: str | None = None


class BacktestReport(BaseModel):
    format_version: Literal[1] = REPORT_FORMAT_VERSION
    seed: int
    cells: list[BacktestCell]

    @property
    def lobs(self) -> list[str]:
        return sorted({c.lob for c in self.cells})

    @property
    def methods(self) -> list[MethodEnum]:
        present = {c.method for c in self.cells}
        return [m for m in MethodEnum if m in present]

    @property
    def ok_cells(self) -> list[BacktestCell]:
        return [c for c in self.cells if c.status == CellStatusEnum.OK]

    def mapes(self, lob: str, method: MethodEnum) -> np.ndarray:
        return np.array(
            [c.mape for c in self.ok_cells if c.lob == lob and c.method == method]
        )
