"""
Report Schemas — evaluation, comparison, forgetting and norm-drift reports.
"""

from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

ORIG, ADDED = "orig", "added"
TRIANGLE_TOLERANCE = 1e-9


# ------- Evaluation -------

class DirectionScore(BaseModel):
    direction: str
    source: str
    target: str
    tier: str
    group: str = Field(..., pattern=r"^(orig|added)$")
    bleu: float = Field(..., ge=0.0, le=100.0)
    chrfpp: float = Field(..., ge=0.0, le=100.0)
    segments: int

    model_config = {"from_attributes": True}


class Aggregate(BaseModel):
    bleu: float
    chrfpp: float
    directions: int


class EvalReport(BaseModel):
    """
    Per-direction scores plus unweighted-mean aggregates:
    all, orig, added, tier:<tier>, eng-x, x-eng.
    """

    checkpoint_id: str
    step: int
    directions: List[DirectionScore]
    aggregates: Dict[str, Aggregate]

    def score(self, direction: str) -> DirectionScore:
        for d in self.directions:
            if d.direction == direction:
                return d
        raise KeyError(direction)


class CurvePoint(BaseModel):
    updates: int
    bleu: float


class SavingsReport(BaseModel):
    fraction: float
    baseline_final_bleu: float
    target_bleu: float
    baseline_updates: int
    grown_updates: Optional[int] = None
    budget_ratio: Optional[float] = None


# ------- Comparison -------

class AggregateDelta(BaseModel):
    baseline: Optional[float]
    candidate: Optional[float]
    delta: Optional[float]


class DirectionDelta(BaseModel):
    direction: str
    group: str
    baseline_bleu: float
    candidate_bleu: float
    delta: float


class ComparisonReport(BaseModel):
    bleu: Dict[str, AggregateDelta]
    chrfpp: Dict[str, AggregateDelta]
    directions: List[DirectionDelta]
    mean_delta: float
    delta_standard_error: float


# ------- Probes -------

class ForgettingRow(BaseModel):
    direction: str
    tier: str
    seed_bleu: float
    substituted_bleu: float
    drop: float


class ForgettingReport(BaseModel):
    rows: List[ForgettingRow]
    tier_drop: Dict[str, float]
    mean_drop: float


class NormDriftRow(BaseModel):
    stack: str
    layer: int
    matrix: str
    d_M1_M: float = Field(..., ge=0.0)
    d_M2_M: float = Field(..., ge=0.0)
    d_M1_M2: float = Field(..., ge=0.0)

    @model_validator(mode="after")
    def _triangle(self) -> "NormDriftRow":
        bound = self.d_M1_M + self.d_M2_M
        if self.d_M1_M2 > bound + TRIANGLE_TOLERANCE * max(1.0, bound):
            raise ValueError(
                f"{self.stack}.{self.layer}.{self.matrix}: ‖M1−M2‖={self.d_M1_M2} exceeds "
                f"‖M1−M‖+‖M2−M‖={bound}"
            )
        return self


class NormDriftReport(BaseModel):
    rows: List[NormDriftRow]

    def mean(self, column: str) -> float:
        values = [getattr(r, column) for r in self.rows]
        return sum(values) / len(values) if values else 0.0
