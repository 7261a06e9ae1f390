"""RNN cell evaluated over a whole sequence at once, plus the step-by-step recurrence.

``parallel_rnn_forward`` takes hidden states that were computed ahead of
time, so each output row depends only on its own ``(x[t], h[t])`` pair.
``serial_recurrent_forward`` is the classic recurrence kept as a timing and
accuracy baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import Module, uniform_param, zeros_param
from .tensor import ContractError, DimensionError, Tensor


@dataclass
class RNNCellParams:
    W_ih: Tensor
    W_hh: Tensor
    b_ih: Tensor
    b_hh: Tensor

    def __post_init__(self):
        e, h = self.W_ih.shape
        if self.W_hh.shape != (h, h) or self.b_ih.shape != (h,) or self.b_hh.shape != (h,):
            raise DimensionError(
                f"inconsistent cell shapes W_ih={self.W_ih.shape} W_hh={self.W_hh.shape} "
                f"b_ih={self.b_ih.shape} b_hh={self.b_hh.shape}"
            )

    @property
    def input_size(self) -> int:
        return self.W_ih.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.W_hh.shape[0]


class RNNCell(Module):
    """Trainable holder for one set of cell parameters."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(hidden_size)
        self.W_ih = uniform_param(rng, (input_size, hidden_size), bound)
        self.W_hh = uniform_param(rng, (hidden_size, hidden_size), bound)
        self.b_ih = zeros_param((hidden_size,))
        self.b_hh = zeros_param((hidden_size,))

    @property
    def params(self) -> RNNCellParams:
        return RNNCellParams(self.W_ih, self.W_hh, self.b_ih, self.b_hh)


def rnncell_preactivation(x: Tensor, h: Tensor, p: RNNCellParams) -> Tensor:
    """``x W_ih + b_ih + h W_hh + b_hh``; with identity weights and zero biases this is ``x + h``."""
    x, h = T.as_tensor(x), T.as_tensor(h)
    if x.shape[-1] != p.input_size or h.shape[-1] != p.hidden_size:
        raise DimensionError(f"cell expects widths ({p.input_size}, {p.hidden_size}), got {x.shape} and {h.shape}")
    return T.add(T.add(T.matmul(x, p.W_ih), p.b_ih), T.add(T.matmul(h, p.W_hh), p.b_hh))


def _cell(x: Tensor, h: Tensor, p: RNNCellParams) -> Tensor:
    return T.tanh(rnncell_preactivation(x, h, p))


def rnncell_step(x_i: Tensor, h_i: Tensor, p: RNNCellParams) -> Tensor:
    """tanh(x W_ih + b_ih + h W_hh + b_hh) for a single position (or a batch of them)."""
    return _cell(T.as_tensor(x_i), T.as_tensor(h_i), p)


def parallel_rnn_forward(x: Tensor, h: Tensor, p: RNNCellParams) -> Tensor:
    """Apply the cell to every ``(x[t], h[t])`` pair of a ``(..., n, *)`` sequence in one batched pass."""
    x, h = T.as_tensor(x), T.as_tensor(h)
    if x.ndim < 2 or h.ndim < 2 or x.shape[:-1] != h.shape[:-1]:
        raise ContractError(f"x {x.shape} and h {h.shape} must share leading and time extents")
    return _cell(x, h, p)


def serial_recurrent_forward(x: Tensor, h0, p: RNNCellParams) -> Tensor:
    """Classic recurrence ``h[t+1] = o[t] = cell(x[t], h[t])`` over a ``(..., n, E)`` input.

    Returns the stacked outputs ``(..., n, H)``.
    """
    x = T.as_tensor(x)
    n = x.shape[-2]
    state = T.as_tensor(h0)  # (H,) broadcasts against the (..., H) step outputs
    outs = []
    for t in range(n):
        state = _cell(x[..., t, :], state, p)
        outs.append(state)
    return T.stack(outs, axis=-2)
