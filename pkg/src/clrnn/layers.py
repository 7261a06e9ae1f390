"""Neural building blocks on top of :mod:`clrnn.tensor`."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from . import tensor as T
from .tensor import DimensionError, Tensor


class Module:
    """Minimal parameter container.

    Parameters are ``Tensor`` attributes with ``requires_grad``; submodules are
    ``Module`` attributes or lists of them.  Attribute insertion order fixes
    parameter order, which fixes checkpoint layout and optimizer traversal.
    """

    training = False  # train() switches dropout on

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, list):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def uniform_param(rng: np.random.Generator, shape, bound: float) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def zeros_param(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


# ---------------------------------------------------------------------------
# functional forms


def embedding_forward(tokens, table: Tensor) -> Tensor:
    return T.embedding(tokens, table)


def linear_forward(x: Tensor, W: Tensor, b: Optional[Tensor]) -> Tensor:
    out = T.matmul(x, W)
    return out if b is None else T.add(out, b)


def dropout(x: Tensor, rate: float, training: bool, rng) -> Tensor:
    return T.dropout(x, rate, training, rng)


@dataclass(frozen=True)
class CausalConvSpec:
    kernel_size: int
    dilation: int
    in_channels: int
    out_channels: int

    def __post_init__(self):
        for field_name in ("kernel_size", "dilation", "in_channels", "out_channels"):
            if getattr(self, field_name) < 1:
                raise ValueError(f"{field_name} must be positive")

    @property
    def left_padding(self) -> int:
        return (self.kernel_size - 1) * self.dilation


def causal_conv1d(x: Tensor, spec: CausalConvSpec, W: Tensor, b: Optional[Tensor]) -> Tensor:
    expected = (spec.kernel_size, spec.in_channels, spec.out_channels)
    if W.shape != expected:
        raise DimensionError(f"conv weight has shape {W.shape}, expected {expected}")
    return T.causal_conv1d(x, W, b, spec.dilation)


def receptive_field(layers: int, kernel_size: int, dilation_multiple: int) -> int:
    """Receptive field of ``layers`` stacked causal convs with dilations m**0 .. m**(l-1).

    Equals ``(k - 1) / (m - 1) * (m**l - 1) + 1``.
    """
    if layers < 1 or kernel_size < 1:
        raise ValueError("layers and kernel_size must be positive")
    if dilation_multiple == 1:
        raise ValueError("dilation multiple 1 is unsupported (formula is singular at m=1)")
    if dilation_multiple < 1:
        raise ValueError("dilation multiple must be >= 2")
    num = (kernel_size - 1) * (dilation_multiple**layers - 1)
    assert num % (dilation_multiple - 1) == 0
    return num // (dilation_multiple - 1) + 1


# ---------------------------------------------------------------------------
# stateful layers


class Embedding(Module):
    def __init__(self, vocab: int, dim: int, rng: np.random.Generator):
        self.weight = uniform_param(rng, (vocab, dim), 0.1)

    def __call__(self, tokens) -> Tensor:
        return embedding_forward(tokens, self.weight)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.weight = uniform_param(rng, (in_features, out_features), 1.0 / math.sqrt(in_features))
        self.bias = zeros_param((out_features,))

    def __call__(self, x: Tensor) -> Tensor:
        return linear_forward(x, self.weight, self.bias)


class CausalConv1d(Module):
    def __init__(self, spec: CausalConvSpec, rng: np.random.Generator):
        self.spec = spec
        fan_in = spec.kernel_size * spec.in_channels
        self.weight = uniform_param(rng, (spec.kernel_size, spec.in_channels, spec.out_channels), 1.0 / math.sqrt(fan_in))
        self.bias = zeros_param((spec.out_channels,))

    def __call__(self, x: Tensor) -> Tensor:
        return causal_conv1d(x, self.spec, self.weight, self.bias)
