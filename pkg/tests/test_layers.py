import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clrnn.layers import (
    CausalConv1d,
    CausalConvSpec,
    Embedding,
    Linear,
    causal_conv1d,
    linear_forward,
    receptive_field,
)
from clrnn.tensor import DimensionError, Tensor


def brute_force_receptive_field(layers, k, m):
    """Earliest reachable offset, walking the dilated taps layer by layer."""
    reach = {0}
    for i in range(layers):
        d = m**i
        reach = {r + j * d for r in reach for j in range(k)}
    return max(reach) + 1


@given(st.integers(1, 6), st.integers(1, 8), st.integers(2, 4))
def test_receptive_field_formula_matches_brute_force(layers, k, m):
    assert receptive_field(layers, k, m) == brute_force_receptive_field(layers, k, m)


def test_receptive_field_known_values():
    assert receptive_field(8, 7, 2) == 6 * 255 + 1
    assert receptive_field(3, 3, 2) == 15


def test_receptive_field_rejects_unit_multiple():
    with pytest.raises(ValueError):
        receptive_field(3, 2, 1)


def test_spec_padding_and_validation():
    assert CausalConvSpec(7, 4, 1, 1).left_padding == 24
    with pytest.raises(ValueError):
        CausalConvSpec(0, 1, 1, 1)


def test_conv_rejects_wrong_weight_shape(rng):
    spec = CausalConvSpec(3, 1, 2, 4)
    with pytest.raises(DimensionError):
        causal_conv1d(Tensor(rng.standard_normal((5, 2))), spec, Tensor(np.zeros((3, 4, 2))), None)


def test_layer_initialization_ranges(rng):
    conv = CausalConv1d(CausalConvSpec(7, 1, 3, 5), rng)
    assert np.abs(conv.weight.data).max() <= 1 / np.sqrt(21)
    assert not conv.bias.data.any()
    lin = Linear(16, 4, rng)
    assert np.abs(lin.weight.data).max() <= 0.25
    assert np.abs(Embedding(10, 3, rng).weight.data).max() <= 0.1


def test_linear_forward_matches_numpy(rng):
    x, w, b = rng.standard_normal((2, 5, 3)), rng.standard_normal((3, 4)), rng.standard_normal(4)
    np.testing.assert_allclose(linear_forward(Tensor(x), Tensor(w), Tensor(b)).data, x @ w + b, rtol=1e-13)


def test_named_parameters_are_stable_and_complete(rng):
    lin = Linear(3, 2, rng)
    assert [n for n, _ in lin.named_parameters()] == ["weight", "bias"]
    assert lin.num_parameters() == 8
