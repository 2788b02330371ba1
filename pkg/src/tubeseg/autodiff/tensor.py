"""Dense float64 tensors with tape-based reverse-mode differentiation.

A ``Tape`` records every differentiable primitive in execution order, which
keeps the node list topologically sorted by construction. ``Tape.backward``
walks the list once in reverse and accumulates gradients into every tensor
that requires them. Tensors are immutable after creation except for gradient
accumulation; tapes are single-threaded but independent tapes may run in
parallel threads.
"""

from __future__ import annotations

import threading

import numpy as np

from ..errors import ContractError

_state = threading.local()


def _tape_stack() -> list:
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = []
        _state.stack = stack
    return stack


def current_tape():
    """The innermost active tape of this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A dense multi-dimensional float64 array, optionally differentiable."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """A view of the same values that never receives gradients."""
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; the actual primitives live in ops.py.
    def __add__(self, other):
        from . import ops

        return ops.add(self, ops.as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, ops.as_tensor(other))

    def __rsub__(self, other):
        from . import ops

        return ops.sub(ops.as_tensor(other), self)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, ops.as_tensor(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops

        return ops.div(self, ops.as_tensor(other))

    def __rtruediv__(self, other):
        from . import ops

        return ops.div(ops.as_tensor(other), self)

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)


class _Node:
    __slots__ = ("name", "inputs", "output", "backward_fn")

    def __init__(self, name, inputs, output, backward_fn):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Append-only record of primitives, in topological (execution) order."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _tape_stack().pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self._nodes)

    def record(self, name, inputs, output, backward_fn) -> None:
        self._nodes.append(_Node(name, inputs, output, backward_fn))
        self._produced.add(id(output))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``grad`` of every reachable tensor.

        Each recorded node is visited exactly once, in reverse order. Detached
        tensors and tensors with requires_grad=False receive nothing.
        """
        if loss.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if not loss.requires_grad:
            raise ContractError("loss does not require grad (no differentiable path)")
        if id(loss) not in self._produced:
            # A bare leaf used directly as the loss is still differentiable.
            loss.grad = _accumulate(loss.grad, np.ones_like(loss.data))
            return
        loss.grad = _accumulate(loss.grad, np.ones_like(loss.data))
        for node in reversed(self._nodes):
            out_grad = node.output.grad
            if out_grad is None:
                continue
            grads = node.backward_fn(out_grad)
            for tensor, grad in zip(node.inputs, grads):
                if grad is None or not tensor.requires_grad:
                    continue
                tensor.grad = _accumulate(tensor.grad, grad)
            # Each tensor has exactly one producing node, so its gradient is
            # fully consumed here; dropping it keeps leaf grads authoritative.
            node.output.grad = None


def _accumulate(existing, update):
    if existing is None:
        return np.array(update, dtype=np.float64, copy=True)
    return existing + update
