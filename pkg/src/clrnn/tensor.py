"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every operation that receives a tensor with ``requires_grad`` records its
inputs and a backward closure on the output.  ``Tensor.backward`` orders the
recorded graph topologically (the tape) and replays the closures in reverse,
accumulating gradients into leaf tensors.
"""

from __future__ import annotations

import contextlib
import os
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

DTYPE = np.float64

# Finite-value assertions after every forward/backward step.  Off by default
# because they cost a full pass over each array.
DEBUG = bool(os.environ.get("CLRNN_DEBUG"))

_grad_enabled = True


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(RuntimeError):
    """An operation was called outside its documented preconditions."""


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (inference, optimizer updates)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {what}")


class Tensor:
    """n-dimensional real array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "retain_grad")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
        _parents: tuple["Tensor", ...] = (),
        _backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None,
    ):
        arr = np.asarray(data, dtype=DTYPE)
        if arr.ndim > 0 and 0 in arr.shape and requires_grad:
            raise DimensionError(f"trainable tensor with empty extent {arr.shape}")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward
        self.retain_grad = False

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self):
        return mean(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    # -- reverse mode --------------------------------------------------
    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Populate ``grad`` on every leaf that this tensor depends on.

        Gradients accumulate across calls; call ``zero_grad`` on the leaves
        to reset them.
        """
        if grad is None:
            if self.size != 1:
                raise ContractError(f"backward() without a seed gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=DTYPE)
            if grad.shape != self.shape:
                raise DimensionError(f"seed gradient {grad.shape} does not match tensor {self.shape}")
        if not self.requires_grad:
            return

        tape = build_tape(self)
        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(tape):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if DEBUG:
                _check_finite(g, f"gradient of {node!r}")
            if node.is_leaf or node.retain_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def build_tape(root: Tensor) -> list[Tensor]:
    """Topologically ordered list of recorded nodes reachable from ``root``.

    Parents always precede children.  Traversal order is fixed by the order
    operands were passed to each op, so gradient accumulation is reproducible.
    """
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    if DEBUG:
        _check_finite(data, "forward output")
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` over the leading axes that broadcasting added."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    return grad


def _is_suffix(short: tuple[int, ...], long: tuple[int, ...]) -> bool:
    return len(short) <= len(long) and tuple(long[len(long) - len(short):]) == tuple(short)


# ---------------------------------------------------------------------------
# elementwise and broadcasting arithmetic


def add(a, b) -> Tensor:
    """Elementwise sum; the smaller operand's shape must be a suffix of the other's."""
    a, b = as_tensor(a), as_tensor(b)
    if not (_is_suffix(b.shape, a.shape) or _is_suffix(a.shape, b.shape)):
        raise DimensionError(f"cannot broadcast {a.shape} with {b.shape}")
    out = a.data + b.data
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _result(out, (a, b), backward)


add_broadcast = add


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    """Elementwise product with the same suffix broadcasting rule as ``add``."""
    a, b = as_tensor(a), as_tensor(b)
    if not (_is_suffix(b.shape, a.shape) or _is_suffix(a.shape, b.shape)):
        raise DimensionError(f"cannot broadcast {a.shape} with {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _result(ad * bd, (a, b), backward)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)
    return _result(out, (a,), lambda g: (g * (out > 0),))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product ``a @ b`` where ``b`` is 2-D and ``a`` has any number of leading axes.

    Leading axes of ``a`` are treated as extra rows, so a ``(B, n, k)`` input
    times a ``(k, m)`` weight is one ``(B*n, k) @ (k, m)`` product.
    """
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    if ad.ndim > 2:
        # one large GEMM is much faster than numpy's per-batch loop
        out = (ad.reshape(-1, ad.shape[-1]) @ bd).reshape(ad.shape[:-1] + (bd.shape[1],))
    else:
        out = ad @ bd

    def backward(g):
        ga = (g.reshape(-1, g.shape[-1]) @ bd.T).reshape(ad.shape) if g.ndim > 2 else g @ bd.T
        if ad.ndim == 1:
            gb = np.outer(ad, g)
        else:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _result(out, (a, b), backward)


# ---------------------------------------------------------------------------
# reductions and shape manipulation


def tsum(a: Tensor, axis=None) -> Tensor:
    shape = a.shape
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _result(out, (a,), backward)


def mean(a: Tensor) -> Tensor:
    n = a.size
    shape = a.shape
    return _result(a.data.mean(), (a,), lambda g: (np.full(shape, g / n),))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def getitem(a: Tensor, index) -> Tensor:
    """Basic or advanced indexing; gradient scatters back into a zero array."""
    shape = a.shape
    out = a.data[index]

    def backward(g):
        full = np.zeros(shape, dtype=DTYPE)
        np.add.at(full, index, g)
        return (full,)

    return _result(np.array(out, dtype=DTYPE), (a,), backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _result(out, tuple(tensors), backward)


def shift_time(a: Tensor, steps: int = 1) -> Tensor:
    """Delay a ``(..., n, C)`` sequence by ``steps`` positions, zero-filling the front."""
    n = a.shape[-2]
    steps = min(steps, n)
    out = np.zeros_like(a.data)
    out[..., steps:, :] = a.data[..., : n - steps, :]

    def backward(g):
        gx = np.zeros_like(g)
        gx[..., : n - steps, :] = g[..., steps:, :]
        return (gx,)

    return _result(out, (a,), backward)


# ---------------------------------------------------------------------------
# probabilities and losses


def log_softmax(a: Tensor) -> Tensor:
    """Numerically stable log-softmax over the last axis."""
    if a.shape[-1] < 1:
        raise DimensionError("log_softmax over an empty axis")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=-1, keepdims=True),)

    return _result(out, (a,), backward)


def cross_entropy(log_probs: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under ``log_probs``.

    ``log_probs`` has shape ``(..., C)`` and ``targets`` the matching leading
    shape.  Out-of-range targets raise ``IndexError``.
    """
    targets = np.asarray(targets)
    if not np.issubdtype(targets.dtype, np.integer):
        raise TypeError("targets must be integer class indices")
    c = log_probs.shape[-1]
    if targets.shape != log_probs.shape[:-1]:
        raise DimensionError(f"targets {targets.shape} do not match log-probs {log_probs.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= c):
        raise IndexError(f"target index outside [0, {c})")
    flat = log_probs.data.reshape(-1, c)
    t = targets.reshape(-1)
    rows = np.arange(t.size)
    n = t.size
    out = -flat[rows, t].sum() / n

    def backward(g):
        grad = np.zeros_like(flat)
        grad[rows, t] = -g / n
        return (grad.reshape(log_probs.shape),)

    return _result(np.asarray(out), (log_probs,), backward)


# ---------------------------------------------------------------------------
# layer kernels


def embedding(tokens, table: Tensor) -> Tensor:
    """Gather rows of ``table`` for integer ``tokens`` of any shape."""
    tokens = np.asarray(tokens)
    if not np.issubdtype(tokens.dtype, np.integer):
        raise TypeError("token ids must be integers")
    vocab = table.shape[0]
    if tokens.size and (tokens.min() < 0 or tokens.max() >= vocab):
        raise IndexError(f"token id outside vocabulary of size {vocab}")
    out = table.data[tokens]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, tokens.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return _result(out, (table,), backward)


def causal_conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor], dilation: int) -> Tensor:
    """Dilated causal convolution over the time axis of ``x`` (``(..., n, C_in)``).

    ``weight`` has shape ``(k, C_in, C_out)``; tap ``j`` reads the input
    ``(k - 1 - j) * dilation`` steps in the past, so the last tap is the
    current step.  The sequence is zero-padded on the left by
    ``(k - 1) * dilation`` so output length equals input length.
    """
    if x.ndim < 2:
        raise DimensionError(f"conv input needs (..., time, channels), got {x.shape}")
    n, c_in = x.shape[-2], x.shape[-1]
    if n == 0:
        raise ContractError("empty sequence")
    if weight.ndim != 3 or weight.shape[1] != c_in:
        raise DimensionError(f"conv weight {weight.shape} does not fit input channels {c_in}")
    k, _, c_out = weight.shape
    pad = (k - 1) * dilation
    lead = x.shape[:-2]
    widths = [(0, 0)] * len(lead) + [(pad, 0), (0, 0)]
    xp = np.pad(x.data, widths)
    cols = np.concatenate([xp[..., j * dilation : j * dilation + n, :] for j in range(k)], axis=-1)
    w2 = weight.data.reshape(k * c_in, c_out)
    out = (cols.reshape(-1, k * c_in) @ w2).reshape(lead + (n, c_out))
    if bias is not None:
        out += bias.data

    def backward(g):
        g2 = g.reshape(-1, c_out)
        gw = (cols.reshape(-1, k * c_in).T @ g2).reshape(weight.shape)
        gcols = g @ w2.T
        gxp = np.zeros_like(xp)
        for j in range(k):
            gxp[..., j * dilation : j * dilation + n, :] += gcols[..., j * c_in : (j + 1) * c_in]
        gx = gxp[..., pad:, :]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, backward)


def dropout(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)``; identity in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ContractError("training-mode dropout needs an RNG stream")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _result(x.data * keep, (x,), lambda g: (g * keep,))


def parameters_finite(tensors: Iterable[Tensor]) -> bool:
    return all(np.all(np.isfinite(t.data)) for t in tensors)
