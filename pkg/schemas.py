from pydantic import BaseModel, Field, field_validator, model_validator
from typing import Any, Dict, List, Optional


# Training log
class EpochRecord(BaseModel):
    epoch: int = Field(..., ge=1)
    loss: float
    train_acc: Optional[float] = None
    T_drift: float = Field(..., ge=0)
    wall_time: float = Field(..., ge=0)


# Calibration
class CalibrationBin(BaseModel):
    lower: float
    upper: float
    confidence: float = Field(..., ge=0, le=1, description="Mean confidence, 0 for empty bins")
    accuracy: float = Field(..., ge=0, le=1, description="Empirical accuracy, 0 for empty bins")
    count: int = Field(..., ge=0)


class EvalReport(BaseModel):
    accuracy: float = Field(..., ge=0, le=1)
    ece: float = Field(..., ge=0, le=1)
    mce: float = Field(..., ge=0, le=1)
    n_eval: int = Field(..., ge=0)
    bins: List[CalibrationBin]
    per_class_accuracy: List[Optional[float]]
    config: Dict[str, Any] = Field(default_factory=dict)
    seed: int

    @model_validator(mode="after")
    def validate_bin_counts(self):
        if sum(b.count for b in self.bins) != self.n_eval:
            raise ValueError("bin counts must add up to n_eval")
        return self


# Cross-validation
class FoldResult(BaseModel):
    fold: int = Field(..., ge=0)
    n_train: int
    n_test: int
    accuracy: float
    ece: float


class XvalReport(BaseModel):
    folds: List[FoldResult]
    accuracy_mean: float
    accuracy_std: float
    ece_mean: float
    ece_std: float
    seed: int


# Ablation
class AblationRow(BaseModel):
    variant: str
    use_complementarity: bool
    use_transition: bool
    accuracies: List[float]
    mean: float
    std: float

    @field_validator("accuracies")
    @classmethod
    def validate_accuracies(cls, v):
        if not v:
            raise ValueError("at least one seed is required")
        return v


class AblationReport(BaseModel):
    seeds: List[int]
    rows: List[AblationRow]
