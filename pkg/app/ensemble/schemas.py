import hashlib
from typing import Literal
import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from app.core.schemas import StrictModel
from app.enums import CellStatusEnum, LearnerKindEnum
from app.learners.schemas import LearnerConfig, ModelSpec, TrainedModel

ENSEMBLE_FORMAT_VERSION = 1


class SubsetGeneration(StrictModel):
    k_min: int = Field(default=1, ge=1)
    k_max: int | None = Field(
        default=None, description="Largest subset size, all variables when unset."
    )
    cap: int = Field(default=2000, ge=1, description="Most candidates per search.")
    seed: int = 0
    always_include: list[str] = Field(default_factory=list)


class CandidateSet(BaseModel):
    specs: list[ModelSpec]
    generation: SubsetGeneration

    def __len__(self) -> int:
        return len(self.specs)


class RankedCandidate(BaseModel):
    # Failed candidates carry an infinite MAPE.
    model_config = ConfigDict(ser_json_inf_nan="constants")

    spec: ModelSpec = Field(..., description="Spec as fitted, ARIMA order included.")
    mape: float
    status: CellStatusEnum = CellStatusEnum.OK
    error: str | None = None
    model: TrainedModel | None = Field(
        default=None, exclude=True, description="Fitted model, kept for the best candidates only."
    )


class CandidateRanking(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    ranked: list[RankedCandidate] = Field(..., description="Survivors, ascending MAPE.")
    failed: list[RankedCandidate] = Field(default_factory=list)

    @property
    def mapes(self) -> np.ndarray:
        return np.array([c.mape for c in self.ranked])


class ChangePoint(BaseModel):
    M: int = Field(..., ge=1)
    threshold: float
    survivors: int = Field(..., description="Curve length after the threshold cut.")
    breakpoints: list[int] = Field(default_factory=list)
    penalty: float | None = None
    fallback: bool = False


class EnsembleMember(BaseModel):
    model: TrainedModel
    validation_mape: float


class EnsembleModel(BaseModel):
    format_version: Literal[1] = ENSEMBLE_FORMAT_VERSION
    kind: LearnerKindEnum
    members: list[EnsembleMember]
    M: int = Field(..., ge=1)
    mape0: float = Field(..., description="Validation MAPE of the averaged prediction.")

    @property
    def ensemble_id(self) -> str:
        hashes = "/".join(m.model.spec.spec_hash for m in self.members)
        return hashlib.sha256(f"{self.kind.value}/{hashes}".encode()).hexdigest()[:16]

    @property
    def variables(self) -> list[str]:
        return sorted({v for m in self.members for v in m.model.spec.variables})


class SearchConfig(StrictModel):
    k_min: int = Field(default=1, ge=1)
    k_max: int | None = None
    cap: int = Field(default=2000, ge=1)
    always_include: list[str] = Field(default_factory=list)
    mape_threshold: float | None = Field(
        default=None, description="Absolute cut, threshold_factor x best when unset."
    )
    threshold_factor: float = Field(default=2.0, gt=0)
    min_models: int = Field(
        default=5, ge=1, description="Ensemble size when no change point is found."
    )
    retain_models: int = Field(
        default=100,
        ge=0,
        description="Best fitted candidates kept from scoring, deeper ensemble members are refit.",
    )
    learners: LearnerConfig = Field(default_factory=LearnerConfig)


class SearchResult(BaseModel):
    ensemble: EnsembleModel
    ranking: CandidateRanking
    change_point: ChangePoint
