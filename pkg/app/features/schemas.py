import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from app.core.schemas import StrictModel
from app.exceptions import ContractViolation, DomainError

DEFAULT_LAGS = [1, 2, 3, 4, 13]


class FeatureColumns(BaseModel):
    """
    Named columns indexed by origin week, with the categorical ones and their
    declared cardinality listed separately.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    frame: pd.DataFrame
    categorical: dict[str, int] = Field(default_factory=dict)


class FeatureTable(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    frame: pd.DataFrame = Field(..., description="Rows indexed by origin week.")
    numeric: list[str]
    categorical: dict[str, int] = Field(
        default_factory=dict, description="Categorical column -> cardinality."
    )
    response: str = Field(..., description="Column holding y at origin + lead_time.")
    lead_time: int = Field(..., ge=1)

    @model_validator(mode="after")
    def check_columns(self):
        names = [*self.numeric, *self.categorical, self.response]
        if len(set(names)) != len(names):
            duplicated = sorted({n for n in names if names.count(n) > 1})
            raise ContractViolation(
                f"column names are not unique: {duplicated}",
                module="features",
                field=duplicated[0],
            )
        missing = [n for n in names if n not in self.frame.columns]
        if missing:
            raise ContractViolation(
                f"table is missing columns {missing}", module="features", field=missing[0]
            )
        if self.frame[names].isna().to_numpy().any():
            column = self.frame[names].columns[self.frame[names].isna().any()][0]
            raise ContractViolation(
                "feature table holds missing values", module="features", field=column
            )
        if not (self.frame[self.response] > 0).all():
            raise DomainError(
                "response must be strictly positive",
                module="features",
                field=self.response,
            )
        for name, cardinality in self.categorical.items():
            values = self.frame[name]
            if values.min() < 1 or values.max() > cardinality:
                raise ContractViolation(
                    f"categorical column outside 1..{cardinality}",
                    module="features",
                    field=name,
                )
        return self

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def variables(self) -> list[str]:
        return [*self.numeric, *self.categorical]

    @property
    def weeks(self) -> np.ndarray:
        return self.frame.index.to_numpy()

    @property
    def response_weeks(self) -> np.ndarray:
        return self.weeks + self.lead_time

    @property
    def y(self) -> np.ndarray:
        return self.frame[self.response].to_numpy(dtype=float)

    def require(self, columns: list[str]) -> None:
        missing = [c for c in columns if c not in self.variables]
        if missing:
            raise ContractViolation(
                f"table has no variable {missing[0]}", module="features", field=missing[0]
            )

    def design(self, columns: list[str], one_hot: bool = False) -> pd.DataFrame:
        """
        Columns in the given order. With one_hot, categorical columns are
        expanded into indicators over their full declared level set, first
        level dropped, so every window yields the same design columns.
        """
        self.require(columns)
        frame = self.frame[columns].astype(float)
        if not one_hot:
            return frame

        parts = []
        for column in columns:
            if column not in self.categorical:
                parts.append(frame[[column]])
                continue
            levels = pd.Categorical(
                self.frame[column].astype(int),
                categories=range(1, self.categorical[column] + 1),
            )
            dummies = pd.get_dummies(levels, prefix=column, drop_first=True, dtype=float)
            dummies.index = self.frame.index
            parts.append(dummies)
        return pd.concat(parts, axis=1) if parts else frame

    def take(self, mask) -> "FeatureTable":
        return self.model_copy(update={"frame": self.frame.loc[mask]})

    def select(self, columns: list[str]) -> "FeatureTable":
        self.require(columns)
        keep = set(columns)
        return FeatureTable(
            frame=self.frame[[*columns, self.response]],
            numeric=[c for c in self.numeric if c in keep],
            categorical={k: v for k, v in self.categorical.items() if k in keep},
            response=self.response,
            lead_time=self.lead_time,
        )

    def with_values(self, column: str, values) -> "FeatureTable":
        self.require([column])
        frame = self.frame.copy()
        frame[column] = np.asarray(values)
        return self.model_copy(update={"frame": frame})

    def sidecar(self) -> dict:
        return {
            "numeric": self.numeric,
            "categorical": self.categorical,
            "response": self.response,
            "lead_time": self.lead_time,
        }


class FeatureConfig(StrictModel):
    lobs: list[str] | None = Field(
        default=None, description="Lines of business to model, all when unset."
    )
    leads: list[int] = Field(default=list(range(1, 17)), min_length=1)
    lags: list[int] = Field(default=DEFAULT_LAGS, min_length=1)
    asp_lags: list[int] = Field(default=[1])
    include_outlook: bool = True
    include_cny: bool = True
