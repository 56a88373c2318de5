import hashlib
import json
import math
from typing import Annotated, Literal, Union
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from app.core.schemas import StrictModel
from app.enums import LearnerKindEnum
from app.exceptions import ConfigurationError

MODEL_FORMAT_VERSION = 1

DEFAULT_HYPERPARAMS = {
    LearnerKindEnum.MLR: {},
    LearnerKindEnum.ARIMAX: {"exogenous": True, "max_p": 3, "max_d": 1, "max_q": 3},
    LearnerKindEnum.RF: {
        "n_trees": 500,
        "min_leaf": 5,
        "sample_fraction": 1.0,
        "bootstrap": True,
    },
    LearnerKindEnum.GBT: {
        "learning_rate": 0.01,
        "n_trees": 1000,
        "max_depth": 3,
        "min_leaf": 5,
        "lambda": 1.0,
    },
}


class ModelSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: LearnerKindEnum
    variables: tuple[str, ...] = Field(default=(), description="Predictor columns.")
    arima_order: tuple[int, int, int] | None = Field(
        default=None, description="(p, d, q), selected by AIC when unset."
    )
    hyperparams: dict[str, bool | int | float] = Field(default_factory=dict)
    lead_time: int = Field(default=1, ge=1)
    seed: int = Field(default=0, description="Not part of spec_hash.")

    @model_validator(mode="before")
    @classmethod
    def complete_hyperparams(cls, data):
        if not isinstance(data, dict) or "kind" not in data:
            return data
        kind = LearnerKindEnum(data["kind"])
        given = dict(data.get("hyperparams") or {})
        defaults = dict(DEFAULT_HYPERPARAMS[kind])
        if kind == LearnerKindEnum.RF:
            defaults["mtry"] = max(1, math.ceil(len(data.get("variables") or ()) / 3))

        unknown = sorted(set(given) - set(defaults))
        if unknown:
            raise ConfigurationError(
                f"{kind.value} has no hyperparameter {unknown[0]}",
                module="learners",
                field=unknown[0],
            )
        return {**data, "hyperparams": {**defaults, **given}}

    @model_validator(mode="after")
    def check_ranges(self):
        if self.arima_order is not None:
            p, d, q = self.arima_order
            if not (0 <= p <= 3 and 0 <= d <= 1 and 0 <= q <= 3):
                raise ConfigurationError(
                    f"ARIMA order {self.arima_order} is outside p,q <= 3, d <= 1",
                    module="learners",
                    field="arima_order",
                )
        params = self.hyperparams
        match self.kind:
            case LearnerKindEnum.RF:
                if params["n_trees"] < 1 or not 1 <= params["mtry"] <= max(1, len(self.variables)):
                    raise ConfigurationError(
                        "random forest needs n_trees >= 1 and 1 <= mtry <= #variables",
                        module="learners",
                        field="mtry",
                    )
                if not 0 < params["sample_fraction"] <= 1:
                    raise ConfigurationError(
                        "sample_fraction must lie in (0, 1]",
                        module="learners",
                        field="sample_fraction",
                    )
            case LearnerKindEnum.GBT:
                if not 0 < params["learning_rate"] <= 1 or params["n_trees"] < 1:
                    raise ConfigurationError(
                        "boosting needs learning_rate in (0, 1] and n_trees >= 1",
                        module="learners",
                        field="learning_rate",
                    )
                if params["lambda"] < 0:
                    raise ConfigurationError(
                        "lambda must be nonnegative", module="learners", field="lambda"
                    )
        return self

    @property
    def spec_hash(self) -> str:
        payload = self.model_dump(mode="json", exclude={"seed"})
        encoded = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(encoded).hexdigest()[:16]


class TreeNodes(BaseModel):
    """
    One regression tree as parallel node arrays. Leaves carry split_var,
    left and right of -1. A row goes left when x[split_var] <= threshold,
    with x rounded to float32 first, as the tree builder does.
    """

    split_var: list[int]
    threshold: list[float]
    left: list[int]
    right: list[int]
    leaf_value: list[float]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float32).astype(np.float64)
        split_var = np.asarray(self.split_var)
        threshold = np.asarray(self.threshold)
        left, right = np.asarray(self.left), np.asarray(self.right)

        node = np.zeros(X.shape[0], dtype=int)
        active = split_var[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            current = node[rows]
            goes_left = X[rows, split_var[current]] <= threshold[current]
            node[rows] = np.where(goes_left, left[current], right[current])
            active = split_var[node] >= 0
        return np.asarray(self.leaf_value)[node]


class LinearParameters(BaseModel):
    kind: Literal["linear"] = "linear"
    columns: list[str] = Field(..., description="Design columns after one-hot expansion.")
    coefficients: list[float] = Field(..., description="Intercept first.")


class ArimaxParameters(BaseModel):
    kind: Literal["arimax"] = "arimax"
    columns: list[str]
    coefficients: list[float] = Field(..., description="Regression stage, intercept first.")
    order: tuple[int, int, int]
    ar: list[float]
    ma: list[float]
    sigma2: float
    last_week: int = Field(..., description="Last training origin week.")
    last_w: list[float] = Field(..., description="Last p values of the differenced errors.")
    last_e: list[float] = Field(..., description="Last q innovations.")
    last_u: float = Field(..., description="Last regression residual.")


class ForestParameters(BaseModel):
    kind: Literal["forest"] = "forest"
    trees: list[TreeNodes]


class BoostParameters(BaseModel):
    kind: Literal["boost"] = "boost"
    base: float
    learning_rate: float
    trees: list[TreeNodes]


Parameters = Annotated[
    Union[LinearParameters, ArimaxParameters, ForestParameters, BoostParameters],
    Field(discriminator="kind"),
]


class FitDiagnostics(BaseModel):
    loglik: float | None = None
    rss: float
    aic: float | None = None
    n_obs: int


class TrainedModel(BaseModel):
    format_version: Literal[1] = MODEL_FORMAT_VERSION
    spec: ModelSpec
    parameters: Parameters
    train_window_id: str = ""
    fit_diagnostics: FitDiagnostics


class LearnerConfig(StrictModel):
    """Per-kind hyperparameter overrides used by the search."""

    MLR: dict[str, bool | int | float] = Field(default_factory=dict)
    ARIMAX: dict[str, bool | int | float] = Field(default_factory=dict)
    RF: dict[str, bool | int | float] = Field(default_factory=dict)
    GBT: dict[str, bool | int | float] = Field(default_factory=dict)

    def for_kind(self, kind: LearnerKindEnum) -> dict:
        return getattr(self, kind.value)
