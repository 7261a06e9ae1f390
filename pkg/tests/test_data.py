import gzip
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from clrnn.data import (
    MNIST_FILES,
    DataError,
    IdxFormatError,
    batch_iter,
    build_char_corpus,
    classification_batches,
    decode_idx,
    encode_idx,
    image_to_sequence,
    lm_windows,
    load_sequential_mnist,
    parse_idx,
    synthetic_copy_task,
    write_idx,
    write_manifest,
)

idx_dtypes = st.sampled_from([np.uint8, np.int8, np.int16, np.int32, np.float32, np.float64])


@settings(max_examples=50)
@given(idx_dtypes.flatmap(lambda dt: hnp.arrays(dt, hnp.array_shapes(min_dims=1, max_dims=4, min_side=0, max_side=5))))
def test_idx_round_trip(arr):
    back = decode_idx(encode_idx(arr))
    assert back.shape == arr.shape
    assert back.tobytes() == arr.astype(back.dtype).tobytes()


def test_idx_header_layout():
    raw = encode_idx(np.arange(6, dtype=np.uint8).reshape(2, 3))
    assert raw[:4] == b"\x00\x00\x08\x02"
    assert int.from_bytes(raw[4:8], "big") == 2 and int.from_bytes(raw[8:12], "big") == 3


@pytest.mark.parametrize("raw,offset", [(b"\x01\x00\x08\x01" + b"\x00\x00\x00\x01", 0),
                                        (b"\x00\x00\x07\x01" + b"\x00\x00\x00\x01", 0),
                                        (b"\x00\x00\x08\x01" + b"\x00\x00\x00\x05" + b"ab", 10)])
def test_idx_errors_carry_offsets(raw, offset):
    with pytest.raises(IdxFormatError) as err:
        decode_idx(raw)
    assert err.value.offset == offset


def test_parse_gzipped(tmp_path):
    arr = np.arange(12, dtype=np.uint8).reshape(3, 4)
    (tmp_path / "a.idx.gz").write_bytes(gzip.compress(encode_idx(arr)))
    np.testing.assert_array_equal(parse_idx(tmp_path / "a.idx.gz"), arr)


def test_image_to_sequence_block_means():
    img = np.arange(784, dtype=np.uint8).reshape(28, 28)
    assert image_to_sequence(img).shape == (784, 1)
    seq = image_to_sequence(img, 2)
    assert seq.shape == (196, 1)
    assert seq[0, 0] == pytest.approx((0 + 1 + 28 + 29) / 4 / 255)
    with pytest.raises(ValueError):
        image_to_sequence(img, 3)


def fake_mnist(tmp_path, n_train=40, n_test=20):
    rng = np.random.default_rng(0)
    for split, n in (("train", n_train), ("test", n_test)):
        img, lab = MNIST_FILES[split]
        write_idx(tmp_path / img, rng.integers(0, 256, size=(n, 28, 28), dtype=np.uint8))
        write_idx(tmp_path / lab, rng.integers(0, 10, size=n, dtype=np.uint8))
    return tmp_path


def test_sequential_mnist_splits_are_disjoint_and_seeded(tmp_path):
    d = fake_mnist(tmp_path)
    a = load_sequential_mnist(d, train_size=25, valid_size=10, test_size=5, stride=4, seed=1)
    b = load_sequential_mnist(d, train_size=25, valid_size=10, test_size=5, stride=4, seed=1)
    assert [len(a[s]) for s in ("train", "valid", "test")] == [25, 10, 5]
    assert a["train"].inputs.shape == (25, 49, 1)
    np.testing.assert_array_equal(a["train"].inputs, b["train"].inputs)
    train_rows = {r.tobytes() for r in a["train"].inputs}
    assert not any(r.tobytes() in train_rows for r in a["valid"].inputs)
    with pytest.raises(DataError):
        load_sequential_mnist(d, train_size=35, valid_size=10)


def test_missing_mnist_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_sequential_mnist(tmp_path)


def test_classification_batches_cover_every_item(rng):
    ds = synthetic_copy_task(10, 2, rng, count=70)
    seen = np.concatenate([b.targets for b in classification_batches(ds, 32, rng)])
    assert len(seen) == 70 and sorted(seen.tolist()) == sorted(ds.targets.tolist())


def test_copy_task_label_is_delayed_sign(rng):
    ds = synthetic_copy_task(12, 5, rng, count=50)
    np.testing.assert_array_equal(ds.targets, ds.inputs[:, 6, 0] > 0)
    with pytest.raises(DataError):
        synthetic_copy_task(5, 5, rng)


def test_char_corpus_vocab_and_round_trip():
    corpus = build_char_corpus(b"hello world" * 20, splits=(0.8, 0.1, 0.1))
    assert corpus.vocab == tuple(sorted(set(b"helo wrd")))
    assert corpus.decode(corpus.encode("hold")) == b"hold"
    assert len(corpus.train) + len(corpus.valid) + len(corpus.test) == 220
    with pytest.raises(DataError):
        corpus.encode("z")
    with pytest.raises(DataError):
        build_char_corpus(b"abc", splits=(0.5, 0.5, 0.5))


@given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 200))
def test_lm_windows_advance_by_valid_length(seq_len, valid_len, extra):
    valid_len = min(valid_len, seq_len)
    tokens = np.arange(seq_len + 1 + extra)
    starts = lm_windows(tokens, seq_len, valid_len)
    assert starts[0] == 0 and np.all(np.diff(starts) == valid_len)
    assert starts[-1] + seq_len + 1 <= len(tokens)


def test_lm_windows_reject_short_corpus():
    with pytest.raises(DataError):
        lm_windows(np.arange(10), 10, 5)


def test_batch_targets_are_next_tokens():
    tokens = np.arange(100)
    for batch in batch_iter(tokens, 8, 4, 5):
        np.testing.assert_array_equal(batch.targets, batch.inputs + 1)
        assert batch.valid_length == 4


def test_manifest_records_hashes(tmp_path):
    f = tmp_path / "x.bin"
    f.write_bytes(b"abc")
    write_manifest(tmp_path / "m.json", [f], {"train": 1})
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["files"][0]["sha256"] == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    assert doc["splits"] == {"train": 1}


def test_same_seed_same_batch_stream():
    tokens = np.arange(500) % 17

    def stream(seed):
        return [b.inputs.tobytes() for b in batch_iter(tokens, 20, 10, 8, np.random.default_rng(seed))]

    assert stream(4) == stream(4)
    assert stream(4) != stream(5)
