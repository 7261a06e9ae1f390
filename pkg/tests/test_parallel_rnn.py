import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clrnn.parallel_rnn import RNNCell, RNNCellParams, parallel_rnn_forward, rnncell_step, serial_recurrent_forward
from clrnn.tensor import ContractError, DimensionError, Tensor


def numpy_cell(x, h, W_ih, W_hh, b_ih, b_hh):
    return np.tanh(x @ W_ih + b_ih + h @ W_hh + b_hh)


def test_step_matches_formula(rng):
    cell = RNNCell(3, 5, rng)
    for p in cell.parameters():
        p.data[...] = rng.standard_normal(p.shape)
    x, h = rng.standard_normal(3), rng.standard_normal(5)
    p = cell.params
    expected = numpy_cell(x, h, p.W_ih.data, p.W_hh.data, p.b_ih.data, p.b_hh.data)
    np.testing.assert_allclose(rnncell_step(Tensor(x), Tensor(h), p).data, expected, rtol=1e-14)


def test_params_validate_shapes():
    with pytest.raises(DimensionError):
        RNNCellParams(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 4))), Tensor(np.zeros(3)), Tensor(np.zeros(3)))


def test_parallel_rejects_mismatched_lengths(rng):
    cell = RNNCell(2, 3, rng)
    with pytest.raises(ContractError):
        parallel_rnn_forward(Tensor(np.zeros((4, 2))), Tensor(np.zeros((5, 3))), cell.params)


def test_serial_accepts_batched_initial_state(rng):
    cell = RNNCell(2, 3, rng)
    x = rng.standard_normal((4, 6, 2))
    h0 = rng.standard_normal((4, 3))
    out = serial_recurrent_forward(Tensor(x), Tensor(h0), cell.params).data
    p = cell.params
    h = h0
    for t in range(6):
        h = numpy_cell(x[:, t], h, p.W_ih.data, p.W_hh.data, p.b_ih.data, p.b_hh.data)
        np.testing.assert_allclose(out[:, t], h, rtol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(1, 4), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_parallel_reproduces_serial_given_true_states(n, e, hdim, seed):
    rng = np.random.default_rng(seed)
    cell = RNNCell(e, hdim, rng)
    x = rng.standard_normal((2, n, e))
    o = serial_recurrent_forward(Tensor(x), np.zeros(hdim), cell.params).data
    states = np.concatenate([np.zeros((2, 1, hdim)), o[:, :-1]], axis=1)
    par = parallel_rnn_forward(Tensor(x), Tensor(states), cell.params).data
    assert np.abs(par - o).max() < 1e-12


def identity_cell(width):
    eye = np.eye(width)
    return RNNCellParams(Tensor(eye.copy()), Tensor(eye.copy()), Tensor(np.zeros(width)), Tensor(np.zeros(width)))


def test_identity_parameters_give_residual_preactivation(rng):
    from clrnn.parallel_rnn import rnncell_preactivation

    x, h = rng.standard_normal((7, 4)), rng.standard_normal((7, 4))
    np.testing.assert_array_equal(rnncell_preactivation(Tensor(x), Tensor(h), identity_cell(4)).data, x + h)


def test_trivial_cell_cases(rng):
    zero = RNNCellParams(*(Tensor(np.zeros(s)) for s in ((3, 2), (2, 2), (2,), (2,))))
    assert not parallel_rnn_forward(Tensor(rng.standard_normal((5, 3))), Tensor(rng.standard_normal((5, 2))), zero).data.any()
    assert not serial_recurrent_forward(Tensor(rng.standard_normal((5, 3))), np.zeros(2), zero).data.any()
    p = identity_cell(3)
    p.W_hh.data[...] = 0.0
    x = np.full(3, 1e-4)
    np.testing.assert_allclose(rnncell_step(Tensor(x), Tensor(np.zeros(3)), p).data, np.tanh(x), rtol=1e-15)


def test_single_step_recurrence_is_one_cell_step(rng):
    cell = RNNCell(2, 3, rng)
    x, h0 = rng.standard_normal((1, 2)), rng.standard_normal(3)
    np.testing.assert_array_equal(serial_recurrent_forward(Tensor(x), Tensor(h0), cell.params).data[0],
                                  rnncell_step(Tensor(x[0]), Tensor(h0), cell.params).data)


def test_rows_are_independent(rng):
    cell = RNNCell(2, 3, rng)
    n = 6
    for t in range(n):
        x = Tensor(rng.standard_normal((n, 2)), requires_grad=True)
        h = Tensor(rng.standard_normal((n, 3)), requires_grad=True)
        parallel_rnn_forward(x, h, cell.params)[t].sum().backward()
        others = np.arange(n) != t
        assert not x.grad[others].any() and not h.grad[others].any()
        assert x.grad[t].any() and h.grad[t].any()
