"""Central finite-difference validation of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .tensor import Tensor, no_grad


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Normwise relative error ``||a - n|| / max(||a||, ||n||)``; zero when both vanish."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def numeric_gradient(f: Callable[[], Tensor], param: Tensor, step: float) -> np.ndarray:
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f().item()
            flat[i] = orig - step
            down = f().item()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
    return grad


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Union[Sequence[Tensor], Mapping[str, Tensor]],
    step: float = 1e-5,
    tol: float = 1e-6,
) -> GradCheckReport:
    """Compare backward-pass gradients of scalar ``f()`` with central differences.

    ``f`` must be deterministic (no training-mode dropout) and is re-evaluated
    twice per coordinate.  Existing ``grad`` slots on ``params`` are cleared.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if not isinstance(params, Mapping):
        params = {f"p{i}": p for i, p in enumerate(params)}
    for p in params.values():
        p.zero_grad()
    f().backward()
    per_param = {}
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        per_param[name] = relative_error(analytic, numeric_gradient(f, p, step))
    worst = max(per_param.values()) if per_param else 0.0
    return GradCheckReport(max_rel_error=worst, tol=tol, per_param=per_param)


# ---------------------------------------------------------------------------
# the standard suite run by ``clrnn gradcheck`` and the test-suite


@dataclass
class SuiteResult:
    name: str
    report: GradCheckReport


def _away_from_zero(rng: np.random.Generator, shape, margin: float = 0.1) -> np.ndarray:
    x = rng.uniform(margin, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def standard_suite(
    seed: int = 0, step: float = 1e-5, kernel_tol: float = 1e-6, model_tol: float = 1e-4
) -> list[SuiteResult]:
    """Check every differentiable op, each layer, and a full model on an 8-step input.

    Each op output is contracted with a fixed random tensor so that every
    output element contributes to the scalar under test.
    """
    from . import tensor as T
    from .carry_lookahead import CarryLookaheadModule, CLModuleConfig
    from .layers import CausalConv1d, CausalConvSpec, Embedding, Linear, dropout
    from .model import CLRNNConfig, EmbeddingConfig, build_model
    from .parallel_rnn import RNNCell, parallel_rnn_forward, rnncell_step, serial_recurrent_forward

    rng = np.random.default_rng(seed)

    def leaf(*shape, away=False):
        data = _away_from_zero(rng, shape) if away else rng.standard_normal(shape)
        return Tensor(data, requires_grad=True)

    def contracted(fn):
        out_shape = fn().shape
        weights = Tensor(rng.standard_normal(out_shape))
        return lambda: T.tsum(T.mul(fn(), weights))

    results: list[SuiteResult] = []

    def check(name, fn, params, tol=kernel_tol, contract=True):
        f = contracted(fn) if contract else fn
        results.append(SuiteResult(name, finite_diff_check(f, params, step, tol)))

    a, b, v = leaf(3, 4), leaf(3, 4), leaf(4)
    check("add", lambda: T.add(a, b), {"a": a, "b": b})
    check("add_broadcast", lambda: T.add(a, v), {"a": a, "v": v})
    check("mul", lambda: T.mul(a, b), {"a": a, "b": b})
    check("neg", lambda: T.neg(a), {"a": a})
    check("tanh", lambda: T.tanh(a), {"a": a})
    r = leaf(3, 4, away=True)
    check("relu", lambda: T.relu(r), {"x": r})
    m1, m2, m3 = leaf(2, 3, 4), leaf(4, 5), leaf(3, 4)
    check("matmul", lambda: T.matmul(m1, m2), {"a": m1, "b": m2})
    check("matmul_2d", lambda: T.matmul(m3, m2), {"a": m3, "b": m2})
    check("sum_axis", lambda: T.tsum(m1, axis=1), {"a": m1})
    check("mean", lambda: T.mean(a), {"a": a}, contract=False)
    check("reshape", lambda: T.reshape(m1, (6, 4)), {"a": m1})
    check("getitem", lambda: m1[:, -1, 1:3], {"a": m1})
    check("stack", lambda: T.stack([a, b], axis=1), {"a": a, "b": b})
    s = leaf(2, 5, 3)
    check("shift_time", lambda: T.shift_time(s), {"x": s})
    check("log_softmax", lambda: T.log_softmax(a), {"a": a})
    logits = leaf(2, 5, 6)
    targets = rng.integers(0, 6, size=(2, 5))
    check("cross_entropy", lambda: T.cross_entropy(T.log_softmax(logits), targets), {"logits": logits}, contract=False)
    table = leaf(7, 3)
    tokens = rng.integers(0, 7, size=(2, 5))
    check("embedding", lambda: T.embedding(tokens, table), {"table": table})
    cx, cw, cb = leaf(2, 9, 3), leaf(3, 3, 4), leaf(4)
    check("causal_conv1d", lambda: T.causal_conv1d(cx, cw, cb, 2), {"x": cx, "weight": cw, "bias": cb})
    dx = leaf(4, 6)
    check("dropout", lambda: dropout(dx, 0.3, True, np.random.default_rng(seed + 1)), {"x": dx})

    lin = Linear(4, 3, rng)
    lin.bias.data[...] = rng.standard_normal(3)
    lx = leaf(2, 4)
    check("Linear", lambda: lin(lx), {"x": lx, **dict(lin.named_parameters())})
    emb = Embedding(6, 3, rng)
    check("Embedding", lambda: emb(tokens % 6), dict(emb.named_parameters()))
    conv = CausalConv1d(CausalConvSpec(3, 4, 2, 3), rng)
    conv.bias.data[...] = rng.standard_normal(3)
    vx = leaf(2, 10, 2)
    check("CausalConv1d", lambda: conv(vx), {"x": vx, **dict(conv.named_parameters())})

    cell = RNNCell(3, 4, rng)
    for p in cell.parameters():
        p.data[...] = rng.uniform(-0.5, 0.5, size=p.shape)
    px, ph = leaf(2, 6, 3), leaf(2, 6, 4)
    cell_params = dict(cell.named_parameters())
    check("rnncell_step", lambda: rnncell_step(px[:, 0, :], ph[:, 0, :], cell.params), {"x": px, "h": ph, **cell_params})
    check("parallel_rnn_forward", lambda: parallel_rnn_forward(px, ph, cell.params), {"x": px, "h": ph, **cell_params})
    check("serial_recurrent_forward", lambda: serial_recurrent_forward(px, np.zeros(4), cell.params), {"x": px, **cell_params})

    cl = CarryLookaheadModule(CLModuleConfig.uniform(3, 2, 3, hidden=4), 2, rng)
    for p in cl.parameters():
        p.data[...] = _away_from_zero(rng, p.shape)
    check("CarryLookaheadModule", lambda: cl(vx), {"x": vx, **dict(cl.named_parameters())}, tol=model_tol)

    cls_model = build_model(CLRNNConfig(cl=CLModuleConfig.uniform(3, 2, 3), num_classes=4, head_mode="full", seq_len=8), rng)
    # zero biases would put ReLUs fed by zero padding exactly on their kink
    for p in cls_model.parameters():
        p.data[...] = _away_from_zero(rng, p.shape, 0.05)
    toy = rng.standard_normal((2, 8, 1))
    labels = rng.integers(0, 4, size=2)
    check("CLRNN classifier (8 steps)", lambda: T.cross_entropy(cls_model(toy), labels),
          dict(cls_model.named_parameters()), tol=model_tol, contract=False)
    lm = build_model(CLRNNConfig(cl=CLModuleConfig.uniform(2, 3, 4), num_classes=5,
                                 embedding=EmbeddingConfig(5, 3), head_mode="position"), rng)
    for p in lm.parameters():
        p.data[...] = _away_from_zero(rng, p.shape, 0.05)
    toks = rng.integers(0, 5, size=(2, 8))
    check("CLRNN language model (8 steps)", lambda: T.cross_entropy(lm(toks[:, :-1]), toks[:, 1:]),
          dict(lm.named_parameters()), tol=model_tol, contract=False)
    return results
