"""
Training Schemas — optimizer, schedule, sampling and group settings of one phase.
"""

import enum
from typing import Dict, Optional

from pydantic import BaseModel, Field


class LrSchedule(str, enum.Enum):
    INVERSE_SQRT = "inverse_sqrt"
    CONSTANT = "constant"


class GammaSchedule(BaseModel):
    """γ ramps linearly from start to end over ramp_steps (None = the phase budget)."""

    start: float = Field(1.0, gt=0.0)
    end: float = Field(1.0, gt=0.0)
    ramp_steps: Optional[int] = Field(None, ge=0)

    @classmethod
    def constant(cls, gamma: float) -> "GammaSchedule":
        return cls(start=gamma, end=gamma, ramp_steps=0)

    def as_tuple(self, default_ramp: int):
        ramp = default_ramp if self.ramp_steps is None else self.ramp_steps
        return self.start, self.end, ramp


class TrainConfig(BaseModel):
    peak_lr: float = Field(0.003, gt=0.0)
    warmup_steps: int = Field(200, ge=1)
    total_steps: int = Field(1000, ge=1)
    lr_schedule: LrSchedule = LrSchedule.INVERSE_SQRT
    reset_scheduler: bool = False
    batch_tokens: int = Field(512, ge=1)
    temperature: float = Field(1.0, ge=1.0)
    alpha: Dict[str, float] = Field(default_factory=dict)
    label_smoothing: float = Field(0.1, ge=0.0, lt=1.0)
    seed: int = 0
    val_every: int = Field(100, ge=1)
    val_pairs: int = Field(20, ge=1)
    snapshot_every: int = Field(0, ge=0)
    clip_norm: float = Field(1.0, gt=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.98, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-9, gt=0.0)
    gamma_old: GammaSchedule = Field(default_factory=GammaSchedule)
    gamma_new: GammaSchedule = Field(default_factory=GammaSchedule)
    # Fisher-threshold groups replace the surgery partition when set
    fisher_threshold: Optional[float] = Field(None, ge=0.0)
    fisher_gamma: float = Field(0.1, gt=0.0)
