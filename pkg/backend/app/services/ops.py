"""
Ops Service — differentiable tensor operations.

Every function takes Tensors, computes the forward value with numpy and
records its adjoint rule on the active tape. Shapes are explicit: the only
implicit broadcast is adding a bias row along the last axis.

Operations:
- matmul, linear, add, add_constant, scale, mul_constant, dropout
- relu, softmax, log_softmax, layer_norm
- embedding_lookup, gather_last
- concat, slice_axis, reshape, transpose, sum_all
- label_smoothed_nll
"""

from typing import Optional, Sequence, Tuple

import numpy as np

from app.exceptions import AxisError, ConfigError, DimensionError, VocabError
from app.models.tensor import DTYPE, Tensor, record


def _norm_axis(axis: int, ndim: int, op: str) -> int:
    if not -ndim <= axis < ndim:
        raise AxisError(f"{op}: axis {axis} out of range for {ndim}-d tensor")
    return axis % ndim


def _swap_last(arr: np.ndarray) -> np.ndarray:
    return np.swapaxes(arr, -1, -2)


# ------- Linear algebra -------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product over the last two axes.

    a: (..., m, k); b: (k, n) shared across leading axes, or (..., k, n)
    with identical leading axes.
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError("matmul", a.shape, b.shape)
    if b.ndim > 2 and (a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2]):
        raise DimensionError("matmul", a.shape, b.shape)

    out = Tensor.from_op(np.matmul(a.data, b.data), (a, b))

    def backward(g):
        ga = np.matmul(g, _swap_last(b.data)) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                k, n = b.shape
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            else:
                gb = np.matmul(_swap_last(a.data), g)
        return ga, gb

    return record("matmul", (a, b), out, backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x @ weight.T + bias with weight stored as (out_features, in_features)."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise DimensionError("linear", x.shape, weight.shape)
    if bias is not None and bias.shape != (weight.shape[0],):
        raise DimensionError("linear.bias", weight.shape, bias.shape)

    data = x.data @ weight.data.T
    if bias is not None:
        data = data + bias.data
    inputs = (x, weight) if bias is None else (x, weight, bias)
    out = Tensor.from_op(data, inputs)

    def backward(g):
        g2 = g.reshape(-1, weight.shape[0])
        gx = g @ weight.data if x.requires_grad else None
        gw = g2.T @ x.data.reshape(-1, weight.shape[1]) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        gb = g2.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return record("linear", inputs, out, backward)


# ------- Elementwise -------

def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of equal shapes, or a bias row added along the last axis."""
    if a.shape == b.shape:
        bias_row = False
    elif b.ndim == 1 and a.ndim >= 1 and b.shape[0] == a.shape[-1]:
        bias_row = True
    else:
        raise DimensionError("add", a.shape, b.shape)

    out = Tensor.from_op(a.data + b.data, (a, b))

    def backward(g):
        gb = g.reshape(-1, b.shape[0]).sum(axis=0) if bias_row else g
        return g, gb

    return record("add", (a, b), out, backward)


def add_constant(x: Tensor, constant: np.ndarray) -> Tensor:
    """Add a non-differentiable array (e.g. an attention mask) broadcast onto x."""
    constant = np.asarray(constant, dtype=DTYPE)
    try:
        data = x.data + constant
    except ValueError:
        raise DimensionError("add_constant", x.shape, constant.shape)
    if data.shape != x.shape:
        raise DimensionError("add_constant", x.shape, constant.shape)
    out = Tensor.from_op(data, (x,))
    return record("add_constant", (x,), out, lambda g: (g,))


def scale(x: Tensor, factor: float) -> Tensor:
    out = Tensor.from_op(x.data * factor, (x,))
    return record("scale", (x,), out, lambda g: (g * factor,))


def mul_constant(x: Tensor, constant: np.ndarray) -> Tensor:
    """Multiply by a non-differentiable array of the same shape."""
    constant = np.asarray(constant, dtype=DTYPE)
    if constant.shape != x.shape:
        raise DimensionError("mul_constant", x.shape, constant.shape)
    out = Tensor.from_op(x.data * constant, (x,))
    return record("mul_constant", (x,), out, lambda g: (g * constant,))


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout; identity when rate is 0 or no rng is given (eval mode)."""
    if rng is None or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(DTYPE) / (1.0 - rate)
    return mul_constant(x, keep)


def relu(x: Tensor) -> Tensor:
    mask = (x.data > 0).astype(DTYPE)
    out = Tensor.from_op(x.data * mask, (x,))
    return record("relu", (x,), out, lambda g: (g * mask,))


# ------- Normalization -------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _norm_axis(axis, x.ndim, "softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor.from_op(y, (x,))

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return record("softmax", (x,), out, backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _norm_axis(axis, x.ndim, "log_softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - logz
    out = Tensor.from_op(y, (x,))

    def backward(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return record("log_softmax", (x,), out, backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply gain and bias."""
    if eps <= 0:
        raise ConfigError(f"layer_norm: eps must be > 0, got {eps}")
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError("layer_norm", x.shape, gain.shape if gain.shape != (d,) else bias.shape)

    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = Tensor.from_op(xhat * gain.data + bias.data, (x, gain, bias))

    def backward(g):
        gxhat = g * gain.data
        gx = inv_std * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        g2 = g.reshape(-1, d)
        ggain = (g2 * xhat.reshape(-1, d)).sum(axis=0)
        gbias = g2.sum(axis=0)
        return gx, ggain, gbias

    return record("layer_norm", (x, gain, bias), out, backward)


# ------- Indexing -------

def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Rows of `table` at integer `ids`; gradients accumulate into looked-up rows."""
    ids = np.asarray(ids, dtype=np.int64)
    vocab_size = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        bad = int(ids.max()) if ids.max() >= vocab_size else int(ids.min())
        raise VocabError(f"embedding_lookup: id {bad} out of range for vocabulary of size {vocab_size}")
    out = Tensor.from_op(table.data[ids], (table,))

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return record("embedding_lookup", (table,), out, backward)


def gather_last(x: Tensor, index) -> Tensor:
    """out[...] = x[..., index[...]], one entry picked along the last axis."""
    index = np.asarray(index, dtype=np.int64)
    if index.shape != x.shape[:-1]:
        raise DimensionError("gather_last", x.shape, index.shape)
    picked = np.take_along_axis(x.data, index[..., None], axis=-1)[..., 0]
    out = Tensor.from_op(picked, (x,))

    def backward(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, index[..., None], g[..., None], axis=-1)
        return (gx,)

    return record("gather_last", (x,), out, backward)


# ------- Shape -------

def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise DimensionError("concat", ())
    axis = _norm_axis(axis, tensors[0].ndim, "concat")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
            t.shape[i] != ref[i] for i in range(len(ref)) if i != axis
        ):
            raise DimensionError("concat", ref, t.shape)

    out = Tensor.from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return record("concat", tensors, out, backward)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    axis = _norm_axis(axis, x.ndim, "slice_axis")
    if not 0 <= start <= stop <= x.shape[axis]:
        raise DimensionError("slice_axis", x.shape, (start, stop))
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = Tensor.from_op(x.data[index], (x,))

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[index] = g
        return (gx,)

    return record("slice_axis", (x,), out, backward)


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise DimensionError("reshape", x.shape, shape)
    out = Tensor.from_op(data, (x,))
    return record("reshape", (x,), out, lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Tuple[int, ...]) -> Tensor:
    if sorted(axes) != list(range(x.ndim)):
        raise AxisError(f"transpose: axes {axes} invalid for {x.ndim}-d tensor")
    inverse = tuple(np.argsort(axes))
    out = Tensor.from_op(np.transpose(x.data, axes), (x,))
    return record("transpose", (x,), out, lambda g: (np.transpose(g, inverse),))


def sum_all(x: Tensor) -> Tensor:
    out = Tensor.from_op(np.array(x.data.sum()), (x,))
    return record("sum_all", (x,), out, lambda g: (np.full(x.shape, float(g)),))


# ------- Losses -------

def label_smoothed_nll(
    logits: Tensor,
    targets,
    epsilon: float,
    pad_id: int,
    reduction: str = "mean",
) -> Tensor:
    """
    Label-smoothed negative log-likelihood over non-pad targets.

    Per token: (1 - eps) * NLL(target) + eps * mean_v NLL(v).
    reduction="mean" divides by the non-pad token count, "sum" does not.
    An all-pad batch yields exactly 0 with a zero gradient.
    """
    if not 0.0 <= epsilon < 1.0:
        raise ConfigError(f"label smoothing epsilon must be in [0, 1), got {epsilon}")
    if logits.ndim != 2:
        raise DimensionError("label_smoothed_nll", logits.shape)
    targets = np.asarray(targets, dtype=np.int64)
    n, vocab = logits.shape
    if targets.shape != (n,):
        raise DimensionError("label_smoothed_nll", logits.shape, targets.shape)
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise VocabError(f"label_smoothed_nll: target id out of range for vocabulary of size {vocab}")

    keep = targets != pad_id
    count = int(keep.sum())
    if count == 0:
        out = Tensor.from_op(np.array(0.0), (logits,))
        return record("label_smoothed_nll", (logits,), out, lambda g: (np.zeros_like(logits.data),))

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    rows = np.nonzero(keep)[0]
    nll_target = -logp[rows, targets[rows]]
    nll_uniform = -logp[rows].mean(axis=1)
    per_token = (1.0 - epsilon) * nll_target + epsilon * nll_uniform
    total = per_token.sum()
    norm = float(count) if reduction == "mean" else 1.0
    out = Tensor.from_op(np.array(total / norm), (logits,))

    def backward(g):
        probs = np.exp(logp[rows])
        smooth = np.full((rows.size, vocab), epsilon / vocab)
        smooth[np.arange(rows.size), targets[rows]] += 1.0 - epsilon
        gl = np.zeros_like(logits.data)
        gl[rows] = (probs - smooth) * (float(g) / norm)
        return (gl,)

    return record("label_smoothed_nll", (logits,), out, backward)
