"""
Tensor Model — dense float64 arrays with a reverse-mode computation tape.

A Tensor wraps a row-major numpy array. Trainable tensors (requires_grad)
receive a same-shape `grad` buffer when a tape is replayed.

Recording model:
- Operations in app.services.ops append a Node to the innermost active Tape
  of the current thread, but only when at least one input requires grad.
- Tape.backward replays the recorded nodes in reverse execution order,
  which is a reverse topological order, so each node's output adjoint is
  complete before it is propagated.
- Tapes are thread-local: evaluation threads running without a tape never
  record into a training thread's tape.
"""

import threading
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

DTYPE = np.float64

_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def current_tape() -> Optional["Tape"]:
    """Innermost active tape on this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Dense n-dimensional float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "is_leaf")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(np.array(data, dtype=DTYPE))
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.is_leaf = True

    @classmethod
    def from_op(cls, data: np.ndarray, inputs: Sequence["Tensor"]) -> "Tensor":
        """Wrap an op result without copying; marks the tensor non-leaf."""
        out = cls.__new__(cls)
        out.data = np.ascontiguousarray(data, dtype=DTYPE)
        out.grad = None
        out.requires_grad = any(t.requires_grad for t in inputs)
        out.is_leaf = False
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Node:
    """One executed operation: inputs, output and the adjoint rule."""

    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(
        self,
        op: str,
        inputs: Tuple[Tensor, ...],
        output: Tensor,
        backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
    ):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """
    Ordered record of executed operations.

    Usage:
        with Tape() as tape:
            loss = forward(...)
        tape.backward(loss)
    """

    def __init__(self):
        self.nodes: List[Node] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def backward(self, output: Tensor, grad_output: Optional[np.ndarray] = None) -> None:
        """
        Replay adjoints from `output` and accumulate into leaf `.grad` buffers.

        grad_output defaults to ones (d output / d output). The tape itself
        is not consumed, so several backward passes with different seeds
        may be run over one forward pass.
        """
        if grad_output is None:
            seed = np.ones_like(output.data)
        else:
            seed = np.asarray(grad_output, dtype=DTYPE)
            if seed.shape != output.shape:
                raise ValueError(
                    f"grad_output shape {seed.shape} does not match output shape {output.shape}"
                )

        adjoints = {id(output): seed}
        leaves = {}
        if output.is_leaf and output.requires_grad:
            leaves[id(output)] = output

        for node in reversed(self.nodes):
            grad = adjoints.pop(id(node.output), None)
            if grad is None:
                continue
            input_grads = node.backward(grad)
            for tensor, g in zip(node.inputs, input_grads):
                if g is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in adjoints:
                    adjoints[key] = adjoints[key] + g
                else:
                    adjoints[key] = g
                if tensor.is_leaf:
                    leaves[key] = tensor

        for key, tensor in leaves.items():
            grad = adjoints.get(key)
            if grad is None:
                continue
            if tensor.grad is None:
                tensor.grad = np.array(grad, dtype=DTYPE).reshape(tensor.shape)
            else:
                tensor.grad = tensor.grad + grad


def record(op: str, inputs: Tuple[Tensor, ...], output: Tensor, backward) -> Tensor:
    """Append a node to the active tape when the output needs gradients."""
    tape = current_tape()
    if tape is not None and output.requires_grad:
        tape.record(Node(op, inputs, output, backward))
    return output
