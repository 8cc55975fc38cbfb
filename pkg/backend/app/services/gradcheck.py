"""
Gradient Check — finite-difference oracle for the autodiff tape.

Relative error per coordinate:
    |autodiff - central difference| / (|central difference| + 1e-8)

Checks report, they never raise.
"""

from typing import Callable, Dict, Iterable, Optional, Tuple

import numpy as np

from app.models.tensor import Tape, Tensor

RELATIVE_FLOOR = 1e-8


def _relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / (abs(numeric) + RELATIVE_FLOOR)


def _central_difference(f: Callable[[], Tensor], flat: np.ndarray, i: int, step: float) -> float:
    original = flat[i]
    flat[i] = original + step
    plus = f().item()
    flat[i] = original - step
    minus = f().item()
    flat[i] = original
    return (plus - minus) / (2.0 * step)


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    step: float = 1e-6,
    coords: Optional[Iterable[int]] = None,
) -> float:
    """
    Max relative error between the tape gradient of scalar f at x and
    central differences. `coords` restricts the check to flat indices.
    """
    x.requires_grad = True
    x.grad = None
    with Tape() as tape:
        out = f(x)
    if out.requires_grad:
        tape.backward(out)
    analytic = x.grad.reshape(-1) if x.grad is not None else np.zeros(x.size)

    flat = x.data.reshape(-1)
    indices = range(x.size) if coords is None else coords
    worst = 0.0
    for i in indices:
        numeric = _central_difference(lambda: f(x), flat, i, step)
        worst = max(worst, _relative_error(float(analytic[i]), numeric))
    return worst


def grad_check_params(
    loss_fn: Callable[[], Tensor],
    params: Dict[str, Tensor],
    step: float = 1e-5,
    coords_per_tensor: Optional[int] = None,
    seed: int = 0,
) -> Tuple[float, Dict[str, float]]:
    """
    Gradient check of a scalar loss over every tensor of a parameter map
    with a single backward pass.

    coords_per_tensor samples that many flat indices per tensor (all when
    None). Returns (max error, per-tensor max error).
    """
    for p in params.values():
        p.requires_grad = True
        p.grad = None
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)

    rng = np.random.default_rng(seed)
    per_tensor: Dict[str, float] = {}
    for name in sorted(params):
        p = params[name]
        analytic = p.grad.reshape(-1) if p.grad is not None else np.zeros(p.size)
        flat = p.data.reshape(-1)
        if coords_per_tensor is None or coords_per_tensor >= p.size:
            indices = range(p.size)
        else:
            indices = rng.choice(p.size, size=coords_per_tensor, replace=False)
        worst = 0.0
        for i in indices:
            numeric = _central_difference(loss_fn, flat, int(i), step)
            worst = max(worst, _relative_error(float(analytic[i]), numeric))
        per_tensor[name] = worst
    return (max(per_tensor.values()) if per_tensor else 0.0), per_tensor
