import numpy as np
import pytest

from clrnn import tensor as T
from clrnn.gradcheck import finite_diff_check, relative_error, standard_suite
from clrnn.tensor import Tensor


def test_relative_error_edge_cases():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.ones(3), np.zeros(3)) == 1.0


def test_passes_on_correct_gradient(rng):
    w = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
    x = Tensor(rng.standard_normal((4, 3)))
    report = finite_diff_check(lambda: T.tsum(T.tanh(T.matmul(x, w))), {"w": w})
    assert report.passed and set(report.per_param) == {"w"}


def test_detects_a_broken_backward(rng, monkeypatch):
    """Mutation check: a tanh backward missing its (1 - y^2) factor must be caught."""

    def bad_tanh(a):
        out = np.tanh(a.data)
        return T._result(out, (a,), lambda g: (g,))

    monkeypatch.setattr(T, "tanh", bad_tanh)
    w = Tensor(rng.standard_normal(5), requires_grad=True)
    report = finite_diff_check(lambda: T.tsum(T.tanh(T.mul(w, 2.0))), [w])
    assert not report.passed
    assert report.max_rel_error > 0.01


def test_suite_fails_when_conv_backward_is_wrong(monkeypatch):
    original = T.causal_conv1d

    def skewed(x, weight, bias, dilation):
        out = original(x, weight, bias, dilation)
        inner = out._backward

        def backward(g):
            grads = list(inner(g))
            grads[1] = grads[1] * 1.01
            return tuple(grads)

        out._backward = backward
        return out

    monkeypatch.setattr(T, "causal_conv1d", skewed)
    failed = {r.name for r in standard_suite() if not r.report.passed}
    assert "causal_conv1d" in failed


def test_step_must_be_positive(rng):
    w = Tensor(rng.standard_normal(2), requires_grad=True)
    with pytest.raises(ValueError):
        finite_diff_check(lambda: T.tsum(w), [w], step=0.0)
