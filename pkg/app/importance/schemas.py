from pydantic import BaseModel, Field
from app.core.schemas import StrictModel


class VariableImportance(BaseModel):
    variable: str
    mean_delta: float = Field(..., description="Mean permuted loss minus the baseline.")
    std: float = Field(..., description="Population std of the permuted losses.")
    iterations: int = Field(..., ge=1)
    members_refit: int = Field(..., description="Members whose spec uses the variable.")
    running_mean: list[float] = Field(
        default_factory=list, description="Mean permuted loss after each iteration."
    )


class ImportanceReport(BaseModel):
    ensemble_id: str
    loss: str = "mape"
    baseline: float = Field(..., description="Loss of the unpermuted ensemble.")
    iterations: int
    variables: list[VariableImportance] = Field(
        ..., description="Ranked by mean_delta, descending."
    )


class ImportanceConfig(StrictModel):
    iterations: int = Field(default=100, ge=1)
    top_k: int = Field(default=5, ge=1)
    variables: list[str] | None = Field(
        default=None, description="Variables to permute, every table variable when unset."
    )
