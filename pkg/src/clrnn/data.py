"""Dataset ingestion: IDX (MNIST) files, character corpora, and a synthetic copy task."""

from __future__ import annotations

import gzip
import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np

DATA_DIR_ENV = "CLRNN_DATA_DIR"

IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
IDX_CODES = {v.str.lstrip("<>|"): k for k, v in IDX_TYPES.items()}

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class DataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# IDX


def _read_bytes(path: Union[str, Path]) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def decode_idx(raw: bytes) -> np.ndarray:
    if len(raw) < 4:
        raise IdxFormatError("file shorter than the magic number", len(raw))
    zero, type_code, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0 or type_code not in IDX_TYPES:
        raise IdxFormatError(f"bad magic number 0x{int.from_bytes(raw[:4], 'big'):08x}", 0)
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise IdxFormatError("truncated dimension header", len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    dtype = IDX_TYPES[type_code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    payload = len(raw) - header_end
    if payload < expected:
        raise IdxFormatError(f"truncated payload: need {expected} bytes, found {payload}", len(raw))
    if payload > expected:
        raise IdxFormatError(f"{payload - expected} trailing bytes after payload", header_end + expected)
    arr = np.frombuffer(raw, dtype=dtype, count=expected // dtype.itemsize, offset=header_end)
    return arr.reshape(dims).astype(dtype.newbyteorder("="))


def parse_idx(path: Union[str, Path]) -> np.ndarray:
    """Decode a (optionally gzipped) big-endian IDX file into an array of its stated shape."""
    return decode_idx(_read_bytes(path))


def encode_idx(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    key = arr.dtype.str.lstrip("<>|=")
    if key not in IDX_CODES:
        raise ValueError(f"dtype {arr.dtype} has no IDX type code")
    code = IDX_CODES[key]
    header = struct.pack(">HBB", 0, code, arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    return header + arr.astype(IDX_TYPES[code]).tobytes()


def write_idx(path: Union[str, Path], arr: np.ndarray) -> None:
    Path(path).write_bytes(encode_idx(arr))


# ---------------------------------------------------------------------------
# datasets


@dataclass
class SequenceDataset:
    """Fixed-length classification items or a token stream for language modelling.

    For ``kind="classification"``, ``inputs`` is ``(N, n, C)`` and ``targets``
    ``(N,)``.  For ``kind="language-model"``, ``inputs`` is a 1-D token stream
    and targets are implied (next token).
    """

    inputs: np.ndarray
    targets: Optional[np.ndarray]
    kind: str = "classification"
    num_classes: Optional[int] = None
    vocab: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.kind == "classification":
            if self.targets is None or len(self.targets) != len(self.inputs):
                raise DataError("classification dataset needs one target per item")
            if self.num_classes is not None and len(self.targets):
                if self.targets.min() < 0 or self.targets.max() >= self.num_classes:
                    raise DataError("classification target outside [0, num_classes)")

    def __len__(self) -> int:
        return len(self.inputs)


@dataclass
class SequenceBatch:
    inputs: np.ndarray
    targets: np.ndarray
    valid_length: int


def image_to_sequence(img: np.ndarray, stride: Optional[int] = None) -> np.ndarray:
    """28x28 byte image -> ``(n, 1)`` float sequence in [0, 1], row-major.

    ``stride`` averages ``stride x stride`` pixel blocks first, giving a
    ``(28 / stride) ** 2`` long sequence.
    """
    img = np.asarray(img, dtype=np.float64) / 255.0
    if stride not in (None, 1, 2, 4):
        raise ValueError(f"stride must be 1, 2 or 4, got {stride}")
    if stride and stride > 1:
        h, w = img.shape
        img = img.reshape(h // stride, stride, w // stride, stride).mean(axis=(1, 3))
    return img.reshape(-1, 1)


def _find_mnist_file(data_dir: Path, stem: str) -> Path:
    for candidate in (data_dir / stem, data_dir / (stem + ".gz")):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"MNIST file {stem}[.gz] not found in {data_dir}")


def mnist_paths(data_dir: Union[str, Path]) -> dict[str, Path]:
    data_dir = Path(data_dir)
    out = {}
    for split, (img, lab) in MNIST_FILES.items():
        out[f"{split}_images"] = _find_mnist_file(data_dir, img)
        out[f"{split}_labels"] = _find_mnist_file(data_dir, lab)
    return out


def load_mnist_split(data_dir: Union[str, Path], split: str) -> tuple[np.ndarray, np.ndarray]:
    paths = mnist_paths(data_dir)
    images = parse_idx(paths[f"{split}_images"])
    labels = parse_idx(paths[f"{split}_labels"])
    if images.ndim != 3 or labels.ndim != 1 or len(images) != len(labels):
        raise DataError(f"{split}: image/label files disagree ({images.shape} vs {labels.shape})")
    return images, labels


def load_sequential_mnist(
    data_dir: Union[str, Path],
    train_size: Optional[int] = 2000,
    valid_size: int = 500,
    test_size: Optional[int] = 500,
    stride: Optional[int] = 2,
    seed: int = 0,
) -> dict[str, SequenceDataset]:
    """Train / valid / test sequence datasets from an MNIST directory.

    Validation items are drawn from the training file, disjoint from the
    training subset; the test subset comes from the t10k file.  Subsets are
    chosen by a seeded permutation.
    """
    rng = np.random.default_rng(seed)
    tr_img, tr_lab = load_mnist_split(data_dir, "train")
    te_img, te_lab = load_mnist_split(data_dir, "test")
    perm = rng.permutation(len(tr_img))
    n_train = len(tr_img) - valid_size if train_size is None else train_size
    if n_train + valid_size > len(tr_img):
        raise DataError(f"need {n_train + valid_size} training images, file has {len(tr_img)}")
    idx_train, idx_valid = perm[:n_train], perm[n_train : n_train + valid_size]
    idx_test = rng.permutation(len(te_img))[: test_size or len(te_img)]

    def make(images, labels, idx):
        seqs = np.stack([image_to_sequence(images[i], stride) for i in idx]) if len(idx) else np.zeros((0, 1, 1))
        return SequenceDataset(seqs, labels[idx].astype(np.int64), num_classes=10)

    return {
        "train": make(tr_img, tr_lab, idx_train),
        "valid": make(tr_img, tr_lab, idx_valid),
        "test": make(te_img, te_lab, idx_test),
    }


def classification_batches(
    ds: SequenceDataset, batch_size: int, rng: Optional[np.random.Generator] = None
) -> Iterator[SequenceBatch]:
    order = rng.permutation(len(ds)) if rng is not None else np.arange(len(ds))
    n = ds.inputs.shape[1]
    for start in range(0, len(ds), batch_size):
        idx = order[start : start + batch_size]
        yield SequenceBatch(ds.inputs[idx], ds.targets[idx], n)


def synthetic_copy_task(n: int, delay: int, rng: np.random.Generator, count: int = 512) -> SequenceDataset:
    """Random +-1 sequences labelled by the sign at position ``n - 1 - delay``.

    Only a model that sees ``delay`` steps back from the last position can
    solve it; ``delay=0`` echoes the final input.
    """
    if not 0 <= delay < n:
        raise DataError(f"delay {delay} must lie in [0, {n})")
    x = rng.choice([-1.0, 1.0], size=(count, n, 1))
    y = (x[:, n - 1 - delay, 0] > 0).astype(np.int64)
    return SequenceDataset(x, y, num_classes=2)


# ---------------------------------------------------------------------------
# character corpora


@dataclass
class CharCorpus:
    vocab: tuple[int, ...]
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    splits: tuple[float, float, float] = (0.9, 0.05, 0.05)
    _index: dict[int, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index = {c: i for i, c in enumerate(self.vocab)}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def encode(self, text: Union[bytes, str]) -> np.ndarray:
        raw = text.encode() if isinstance(text, str) else text
        try:
            return np.array([self._index[b] for b in raw], dtype=np.int64)
        except KeyError as err:
            raise DataError(f"byte {err.args[0]} not in vocabulary") from None

    def decode(self, ids) -> bytes:
        return bytes(self.vocab[i] for i in np.asarray(ids).tolist())


def build_char_corpus(text: Union[bytes, str], splits: Sequence[float] = (0.9, 0.05, 0.05)) -> CharCorpus:
    """Byte-level vocabulary (sorted distinct bytes) and contiguous train/valid/test splits."""
    raw = text.encode() if isinstance(text, str) else bytes(text)
    if not raw:
        raise DataError("empty text")
    if len(splits) != 3 or any(s < 0 for s in splits) or not np.isclose(sum(splits), 1.0):
        raise DataError(f"splits must be three non-negative fractions summing to 1, got {splits}")
    vocab = tuple(sorted(set(raw)))
    lookup = np.zeros(256, dtype=np.int64)
    lookup[list(vocab)] = np.arange(len(vocab))
    ids = lookup[np.frombuffer(raw, dtype=np.uint8)]
    n = len(ids)
    a = int(n * splits[0])
    b = a + int(n * splits[1])
    return CharCorpus(vocab, ids[:a], ids[a:b], ids[b:], tuple(splits))


def lm_windows(tokens: np.ndarray, seq_len: int, valid_len: int) -> np.ndarray:
    """Start offsets of ``seq_len`` windows advancing by ``valid_len``.

    Consecutive windows overlap by ``seq_len - valid_len`` tokens, so every
    scored suffix is preceded by that much history.
    """
    if not 1 <= valid_len <= seq_len:
        raise DataError(f"valid_len must lie in [1, seq_len], got {valid_len}")
    if len(tokens) < seq_len + 1:
        raise DataError(f"corpus of {len(tokens)} tokens is shorter than seq_len + 1 = {seq_len + 1}")
    return np.arange(0, len(tokens) - seq_len, valid_len)


def batch_iter(
    tokens: np.ndarray,
    seq_len: int,
    valid_len: int,
    batch_size: int,
    rng: Optional[np.random.Generator] = None,
) -> Iterator[SequenceBatch]:
    """Language-model batches; targets are inputs shifted by one token.

    Window order is shuffled when ``rng`` is given.
    """
    tokens = np.asarray(tokens)
    starts = lm_windows(tokens, seq_len, valid_len)
    if rng is not None:
        starts = rng.permutation(starts)
    offsets = np.arange(seq_len)
    for i in range(0, len(starts), batch_size):
        s = starts[i : i + batch_size, None] + offsets
        yield SequenceBatch(tokens[s], tokens[s + 1], valid_len)


# ---------------------------------------------------------------------------
# provenance


def sha256_file(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: Union[str, Path], files: Sequence[Union[str, Path]], splits: dict) -> dict:
    manifest = {
        "files": [{"path": str(Path(f).resolve()), "sha256": sha256_file(f), "bytes": os.path.getsize(f)} for f in files],
        "splits": splits,
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def default_data_dir() -> Optional[Path]:
    value = os.environ.get(DATA_DIR_ENV)
    return Path(value) if value else None
