"""
Optimizer Service — Adam with per-element learning-rate scaling and global-norm clipping.

Update (per element, PyTorch formulation):
    m ← β1·m + (1−β1)·g
    v ← β2·v + (1−β2)·g²
    p ← p − (lr_elem / (1−β1^t)) · m / (√v / √(1−β2^t) + eps)

lr_elem = base_lr · γ(group of the element). t counts the updates a
tensor's moments have seen; tensors with fresh or zeroed moments start
from t = 0.
"""

import logging
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from app.exceptions import NonFiniteGradientError
from app.models.param_group import ParamGroup, effective_scales
from app.models.tensor import Tensor

logger = logging.getLogger(__name__)

CLIP_EPS = 1e-6


class AdamState:
    """Moment buffers and per-tensor update counters."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        moments: Optional[Mapping[str, Tuple[np.ndarray, np.ndarray]]] = None,
        step: int = 0,
        beta1: float = 0.9,
        beta2: float = 0.98,
        eps: float = 1e-9,
    ):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t: Dict[str, int] = {}
        moments = moments or {}
        for name, p in params.items():
            if name in moments and (moments[name][0].any() or moments[name][1].any()):
                self.m[name] = moments[name][0].copy()
                self.v[name] = moments[name][1].copy()
                self.t[name] = step
            else:
                self.m[name] = np.zeros(p.shape)
                self.v[name] = np.zeros(p.shape)
                self.t[name] = 0

    def moments(self) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
        return {name: (self.m[name], self.v[name]) for name in sorted(self.m)}


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def check_finite(grads: Mapping[str, np.ndarray], step: int) -> None:
    bad = sorted(name for name, g in grads.items() if not np.all(np.isfinite(g)))
    if bad:
        raise NonFiniteGradientError(step, bad)


def clip_grads(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """Scale gradients in place to global norm <= max_norm; returns the pre-clip norm."""
    norm = global_norm(grads)
    if norm > max_norm:
        factor = max_norm / (norm + CLIP_EPS)
        for name in grads:
            grads[name] = grads[name] * factor
    return norm


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    base_lr: float,
    groups: Optional[List[ParamGroup]] = None,
    continual_step: int = 0,
    step: int = 0,
) -> None:
    """
    One Adam update in place. Without groups every element uses base_lr;
    with groups each element's lr is base_lr · γ of its group at
    continual_step. Non-finite gradients abort before anything changes.
    """
    check_finite(grads, step)
    scales = effective_scales(groups, params, continual_step) if groups else None
    b1, b2, eps = state.beta1, state.beta2, state.eps

    for name in sorted(params):
        g = grads.get(name)
        if g is None:
            continue
        p = params[name]
        state.t[name] += 1
        t = state.t[name]
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        lr = base_lr if scales is None else base_lr * scales[name]
        step_size = lr / (1.0 - b1 ** t)
        denom = np.sqrt(state.v[name]) / np.sqrt(1.0 - b2 ** t) + eps
        p.data = p.data - step_size * state.m[name] / denom
