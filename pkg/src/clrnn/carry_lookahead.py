"""Carry-lookahead module: stacked dilated causal conv blocks that precompute hidden states.

Every position of the output is computed independently of the others, so the
whole hidden-state sequence is produced in one pass instead of a recurrence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .layers import CausalConv1d, CausalConvSpec, Module, receptive_field
from .tensor import ContractError, Tensor

SHIFT_MODES = ("exclusive", "inclusive")


@dataclass
class CLModuleConfig:
    """Shape of the conv stack.

    ``channels[i]`` is the output width of layer ``i``; the last entry is the
    hidden width handed to the parallel RNN.  Layer ``i`` uses dilation
    ``dilation_multiple ** i``.  ``shift_mode="exclusive"`` delays the output
    one step so ``h[t]`` sees only ``x[<t]``; ``"inclusive"`` lets it see
    ``x[<=t]``.
    """

    num_layers: int = 8
    kernel_size: int = 7
    dilation_multiple: int = 2
    channels: list[int] = field(default_factory=lambda: [1] * 8)
    dropout: float = 0.0
    shift_mode: str = "exclusive"

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be positive")
        if self.kernel_size < 1:
            raise ValueError("kernel_size must be positive")
        if self.dilation_multiple < 2:
            raise ValueError("dilation_multiple must be >= 2")
        if len(self.channels) != self.num_layers or any(c < 1 for c in self.channels):
            raise ValueError(f"channels must list {self.num_layers} positive widths, got {self.channels}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.shift_mode not in SHIFT_MODES:
            raise ValueError(f"shift_mode must be one of {SHIFT_MODES}")

    @classmethod
    def uniform(cls, num_layers: int, kernel_size: int, channels: int, hidden: Optional[int] = None, **kw):
        widths = [channels] * num_layers
        if hidden is not None:
            widths[-1] = hidden
        return cls(num_layers=num_layers, kernel_size=kernel_size, channels=widths, **kw)

    @property
    def hidden(self) -> int:
        return self.channels[-1]

    def dilation(self, layer: int) -> int:
        return self.dilation_multiple**layer

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.num_layers, self.kernel_size, self.dilation_multiple)


class CarryLookaheadModule(Module):
    def __init__(self, cfg: CLModuleConfig, in_channels: int, rng: np.random.Generator):
        self.cfg = cfg
        self.convs = []
        width = in_channels
        for i, out in enumerate(cfg.channels):
            spec = CausalConvSpec(cfg.kernel_size, cfg.dilation(i), width, out)
            self.convs.append(CausalConv1d(spec, rng))
            width = out

    def __call__(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        if x.shape[-2] == 0:
            raise ContractError("empty sequence")
        h = x
        for conv in self.convs:
            h = T.relu(conv(h))
            h = T.dropout(h, self.cfg.dropout, self.training, rng)
        if self.cfg.shift_mode == "exclusive":
            h = T.shift_time(h, 1)
        return h


def cl_forward(x: Tensor, module: CarryLookaheadModule, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Map a ``(..., n, E)`` sequence to ``(..., n, H)`` precomputed hidden states."""
    return module(x, rng)


def cl_receptive_probe(cfg: CLModuleConfig, t: int, length: Optional[int] = None, in_channels: int = 1) -> Optional[int]:
    """Earliest input index with nonzero influence on ``h[t]``, or ``None`` if none.

    Uses an all-ones-weight, zero-bias instance on an all-ones input so every
    ReLU is active and gradient support equals structural support.
    """
    n = t + 1 if length is None else length
    if not 0 <= t < n:
        raise ValueError(f"position {t} outside sequence of length {n}")
    probe_cfg = CLModuleConfig(
        num_layers=cfg.num_layers,
        kernel_size=cfg.kernel_size,
        dilation_multiple=cfg.dilation_multiple,
        channels=list(cfg.channels),
        dropout=0.0,
        shift_mode=cfg.shift_mode,
    )
    module = CarryLookaheadModule(probe_cfg, in_channels, np.random.default_rng(0)).eval()
    for conv in module.convs:
        conv.weight.data[...] = 1.0
        conv.bias.data[...] = 0.0
    x = Tensor(np.ones((n, in_channels)), requires_grad=True)
    h = module(x)
    h[t].sum().backward()
    if x.grad is None:
        return None
    support = np.flatnonzero(np.any(x.grad != 0.0, axis=-1))
    return int(support[0]) if support.size else None
