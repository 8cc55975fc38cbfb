"""
Schedule Service — learning-rate and γ schedules.
"""

import math

from app.exceptions import ConfigError

INVERSE_SQRT = "inverse_sqrt"
CONSTANT = "constant"


def lr_at(step: int, peak: float, warmup: int, schedule: str = INVERSE_SQRT) -> float:
    """
    Inverse square root with linear warmup:
        peak · min(step / warmup, sqrt(warmup / step))
    `constant` returns peak at every step.
    """
    if step < 1:
        raise ConfigError(f"lr_at: step must be >= 1, got {step}")
    if warmup < 1:
        raise ConfigError(f"lr_at: warmup must be >= 1, got {warmup}")
    if schedule == CONSTANT:
        return peak
    if schedule != INVERSE_SQRT:
        raise ConfigError(f"unknown lr schedule {schedule!r}")
    return peak * min(step / warmup, math.sqrt(warmup / step))


def gamma_at(gamma_start: float, gamma_end: float, ramp_steps: int, continual_step: int) -> float:
    """Linear γ_start → γ_end over ramp_steps, clamped at γ_end afterwards."""
    if continual_step < 0:
        raise ConfigError(f"gamma_at: continual_step must be >= 0, got {continual_step}")
    if ramp_steps <= 0 or continual_step >= ramp_steps:
        return gamma_end
    frac = continual_step / ramp_steps
    return gamma_start + (gamma_end - gamma_start) * frac
