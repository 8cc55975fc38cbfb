"""
Parameter Group Model — element subsets of the parameter map with a γ schedule.

A group selects elements through one boolean mask per tensor name, so one
tensor can be split between groups (the old block of a widened FFN matrix
in one group, its new block in another). The effective learning rate of
an element is base_lr · γ of the group it belongs to.
"""

from typing import Dict, Iterable, List, Mapping, Optional

import numpy as np

from app.exceptions import ConfigError
from app.models.tensor import Tensor
from app.services.schedule import gamma_at


class ParamGroup:
    """Named element selector with γ(step) = linear ramp γ_start → γ_end, then constant."""

    def __init__(
        self,
        name: str,
        masks: Dict[str, np.ndarray],
        gamma_start: float = 1.0,
        gamma_end: Optional[float] = None,
        ramp_steps: int = 0,
    ):
        gamma_end = gamma_start if gamma_end is None else gamma_end
        if gamma_start <= 0 or gamma_end <= 0:
            raise ConfigError(f"group {name}: γ values must be > 0, got ({gamma_start}, {gamma_end})")
        if ramp_steps < 0:
            raise ConfigError(f"group {name}: ramp_steps must be >= 0, got {ramp_steps}")
        self.name = name
        self.masks = {k: np.asarray(v, dtype=bool) for k, v in masks.items()}
        self.gamma_start = float(gamma_start)
        self.gamma_end = float(gamma_end)
        self.ramp_steps = int(ramp_steps)

    @property
    def element_count(self) -> int:
        return int(sum(m.sum() for m in self.masks.values()))

    def gamma_at(self, continual_step: int) -> float:
        return gamma_at(self.gamma_start, self.gamma_end, self.ramp_steps, continual_step)

    def __repr__(self) -> str:
        return (
            f"ParamGroup({self.name!r}, elements={self.element_count}, "
            f"γ={self.gamma_start}→{self.gamma_end} over {self.ramp_steps})"
        )


def single_group(params: Mapping[str, Tensor], name: str = "all", gamma: float = 1.0) -> List[ParamGroup]:
    """Every element in one constant-γ group."""
    return [ParamGroup(name, {k: np.ones(t.shape, dtype=bool) for k, t in params.items()}, gamma)]


def split_groups(
    params: Mapping[str, Tensor],
    new_masks: Mapping[str, np.ndarray],
    old_schedule: Iterable[float],
    new_schedule: Iterable[float],
) -> List[ParamGroup]:
    """
    "old"/"new" groups from per-tensor new-element masks (tensors absent
    from new_masks are entirely old). Schedules are (γ_start, γ_end, ramp).
    """
    old_masks, fresh_masks = {}, {}
    for name, t in params.items():
        new = np.asarray(new_masks.get(name, np.zeros(t.shape, dtype=bool)), dtype=bool)
        if new.shape != t.shape:
            raise ConfigError(f"new-element mask for {name} has shape {new.shape}, tensor {t.shape}")
        old_masks[name] = ~new
        fresh_masks[name] = new
    g_old = tuple(old_schedule)
    g_new = tuple(new_schedule)
    return [
        ParamGroup("old", old_masks, *g_old),
        ParamGroup("new", fresh_masks, *g_new),
    ]


def validate_partition(groups: List[ParamGroup], params: Mapping[str, Tensor]) -> None:
    """Every trainable element in exactly one group."""
    for name, t in params.items():
        cover = np.zeros(t.shape, dtype=np.int64)
        for g in groups:
            if name in g.masks:
                if g.masks[name].shape != t.shape:
                    raise ConfigError(f"group {g.name}: mask for {name} has wrong shape")
                cover += g.masks[name]
        if (cover != 1).any():
            raise ConfigError(
                f"groups do not partition {name}: {int((cover == 0).sum())} uncovered, "
                f"{int((cover > 1).sum())} multiply covered elements"
            )
    for g in groups:
        unknown = set(g.masks) - set(params)
        if unknown:
            raise ConfigError(f"group {g.name} names unknown tensors {sorted(unknown)}")


def effective_scales(groups: List[ParamGroup], params: Mapping[str, Tensor], continual_step: int) -> Dict[str, np.ndarray]:
    """Per-element γ arrays for one step."""
    scales = {name: np.zeros(t.shape) for name, t in params.items()}
    for g in groups:
        gamma = g.gamma_at(continual_step)
        for name, mask in g.masks.items():
            scales[name] = scales[name] + gamma * mask
    return scales
