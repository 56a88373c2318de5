import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from app.core.schemas import StrictModel


class Embedding(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    coordinates: np.ndarray = Field(..., description="One row per point.")
    eigenvalues: np.ndarray = Field(..., description="All eigenvalues, descending.")
    negative_eigen_mass: float = Field(
        ..., description="Share of absolute eigenvalue mass dropped as negative."
    )


class ClusteringResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    variables: list[str]
    embedding: np.ndarray
    assignments: dict[str, int] = Field(..., description="Variable -> cluster id.")
    k: int = Field(..., ge=1)
    variance_ratio: float = Field(..., ge=0, le=1)
    representatives: dict[int, str] = Field(
        default_factory=dict, description="Cluster id -> kept variable."
    )

    def members(self, cluster: int) -> list[str]:
        return sorted(v for v, c in self.assignments.items() if c == cluster)


class CollinearityReport(BaseModel):
    # Perfectly collinear columns carry an infinite VIF.
    model_config = ConfigDict(ser_json_inf_nan="constants")

    clusters: dict[int, list[str]]
    representatives: dict[int, str]
    variance_ratio: float
    k: int
    vif_before: dict[str, float]
    vif_after: dict[str, float]
    negative_eigen_mass: float
    dropped_constant: list[str] = Field(default_factory=list)
    kept_categorical: list[str] = Field(default_factory=list)

    @property
    def max_vif_before(self) -> float:
        return max(self.vif_before.values(), default=1.0)

    @property
    def max_vif_after(self) -> float:
        return max(self.vif_after.values(), default=1.0)


class CollinearityConfig(StrictModel):
    target_ratio: float = Field(default=0.8, gt=0, le=1)
