import numpy as np
import pytest

from clrnn.carry_lookahead import CLModuleConfig
from clrnn.model import (
    BaselineConfig,
    CheckpointError,
    CLRNNConfig,
    ConfigError,
    EmbeddingConfig,
    build_model,
    load_checkpoint,
    model_record,
    read_checkpoint,
    save_checkpoint,
    mnist_cl_rnn_1,
    mnist_cl_rnn_784,
)
from clrnn.tensor import DimensionError, Tensor


def small_cfg(**kw):
    base = dict(cl=CLModuleConfig.uniform(2, 3, 4), num_classes=3, head_mode="full", seq_len=6)
    return CLRNNConfig(**{**base, **kw})


def test_mnist_preset_parameter_counts_itemized():
    # conv stack: 8 layers x (7 weights + 1 bias); cell 1->1: 4; fc 784->10: 7850
    assert build_model(mnist_cl_rnn_1(), 0).num_parameters() == 8 * 8 + 4 + 7850
    # cell 784->784: 2 * 784^2 + 2 * 784
    assert build_model(mnist_cl_rnn_784(), 0).num_parameters() == 8 * 8 + 2 * 784**2 + 2 * 784 + 7850


@pytest.mark.parametrize("head,shape", [("full", (5, 3)), ("last", (5, 3))])
def test_classifier_outputs_log_probabilities(rng, head, shape):
    model = build_model(small_cfg(head_mode=head), rng)
    out = model(rng.standard_normal((5, 6, 1)))
    assert out.shape == shape
    np.testing.assert_allclose(np.exp(out.data).sum(-1), 1.0, rtol=1e-12)


def test_language_model_shapes_and_unbatched_input(rng):
    cfg = small_cfg(embedding=EmbeddingConfig(7, 3), num_classes=7, head_mode="position", seq_len=None)
    model = build_model(cfg, rng)
    tokens = rng.integers(0, 7, size=(2, 9))
    assert model(tokens).shape == (2, 9, 7)
    np.testing.assert_allclose(model(tokens[0]).data, model(tokens).data[0], rtol=1e-13)


def test_sequence_cell_mode(rng):
    model = build_model(small_cfg(cell_mode="sequence"), rng)
    assert model.cell.params.input_size == 6 and model.cell.params.hidden_size == 24
    assert model(rng.standard_normal((2, 6, 1))).shape == (2, 3)


def test_full_head_rejects_other_lengths(rng):
    model = build_model(small_cfg(), rng)
    with pytest.raises(DimensionError):
        model(rng.standard_normal((2, 7, 1)))


@pytest.mark.parametrize("bad", [dict(head_mode="full", seq_len=None), dict(head_mode="mean"),
                                 dict(residual="shortcut"), dict(cell_mode="sequence", head_mode="position")])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        small_cfg(**bad)


def test_shortcut_ablation_builds_without_cell(rng):
    cfg = small_cfg(cl=CLModuleConfig.uniform(2, 3, 1), residual="shortcut", output_relu=True)
    model = build_model(cfg, rng)
    assert not hasattr(model, "cell")
    assert model(rng.standard_normal((2, 6, 1))).shape == (2, 3)


def test_same_seed_same_weights():
    a, b = build_model(small_cfg(), 5), build_model(small_cfg(), 5)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb and np.array_equal(pa.data, pb.data)


def test_checkpoint_round_trip_is_bit_exact(tmp_path, rng):
    model = build_model(small_cfg(), rng)
    for p in model.parameters():
        p.data[...] = rng.standard_normal(p.shape) * 1e-300  # subnormals survive too
    save_checkpoint(tmp_path / "m.ckpt", model, model_record(model, epoch=3))
    loaded, record = load_checkpoint(tmp_path / "m.ckpt")
    assert record["epoch"] == 3
    for (n, p), (m, q) in zip(model.named_parameters(), loaded.named_parameters()):
        assert n == m and p.data.tobytes() == q.data.tobytes()
    x = rng.standard_normal((2, 6, 1))
    assert model(x).data.tobytes() == loaded(x).data.tobytes()


def test_baseline_checkpoint_round_trip(tmp_path, rng):
    model = build_model(BaselineConfig(hidden=4, num_classes=2, seq_len=5), rng)
    save_checkpoint(tmp_path / "b.ckpt", model, model_record(model))
    loaded, record = load_checkpoint(tmp_path / "b.ckpt")
    assert record["kind"] == "serial-rnn"
    x = rng.standard_normal((3, 5, 1))
    np.testing.assert_array_equal(model(x).data, loaded(x).data)


def test_truncated_or_foreign_checkpoints_fail(tmp_path, rng):
    model = build_model(small_cfg(), rng)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, model_record(model))
    raw = path.read_bytes()
    (tmp_path / "cut.ckpt").write_bytes(raw[:-9])
    with pytest.raises(CheckpointError, match="truncated"):
        read_checkpoint(tmp_path / "cut.ckpt")
    (tmp_path / "junk.ckpt").write_bytes(b"NOTACKPT" + raw[8:])
    with pytest.raises(CheckpointError, match="magic"):
        read_checkpoint(tmp_path / "junk.ckpt")


def test_language_model_logits_ignore_future_tokens(rng):
    cfg = small_cfg(embedding=EmbeddingConfig(6, 3), num_classes=6, head_mode="position", seq_len=None)
    model = build_model(cfg, rng)
    tokens = rng.integers(0, 6, size=10)
    base = model(tokens).data
    for t in range(9):
        changed = tokens.copy()
        changed[t + 1 :] = (changed[t + 1 :] + 1) % 6
        np.testing.assert_array_equal(model(changed).data[: t + 1], base[: t + 1])


def test_forward_is_deterministic(rng):
    model = build_model(small_cfg(), 0)
    x = rng.standard_normal((3, 6, 1))
    assert model(x).data.tobytes() == model(x).data.tobytes()
