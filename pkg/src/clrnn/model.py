"""Full CL-RNN: optional embedding -> carry-lookahead module -> parallel RNN -> linear head.

Also holds the classic step-by-step RNN classifier used as a baseline, the
two Sequential-MNIST architectures as presets, and the checkpoint format.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from . import tensor as T
from .carry_lookahead import CarryLookaheadModule, CLModuleConfig
from .layers import Embedding, Linear, Module
from .parallel_rnn import RNNCell, parallel_rnn_forward, serial_recurrent_forward
from .tensor import DimensionError, Tensor

HEAD_MODES = ("last", "full", "position")
CELL_MODES = ("position", "sequence")


class ConfigError(ValueError):
    pass


@dataclass
class EmbeddingConfig:
    vocab: int
    dim: int


@dataclass
class CLRNNConfig:
    """Model hyperparameters.

    head_mode:
        ``last``: classify from the final time position only.
        ``full``: flatten the whole output sequence (time-major) into one
        classifier input; needs a fixed ``seq_len``.
        ``position``: shared linear head at every position (language models).
    cell_mode:
        ``position``: one cell step per time position (width E -> H).
        ``sequence``: the fixed-length sequence is viewed as a single vector
        of width ``seq_len * E`` feeding a cell of width ``seq_len * H``.
    """

    cl: CLModuleConfig = field(default_factory=CLModuleConfig)
    num_classes: int = 10
    input_dim: int = 1
    embedding: Optional[EmbeddingConfig] = None
    head_mode: str = "full"
    cell_mode: str = "position"
    seq_len: Optional[int] = None
    # ablation hooks; only the defaults are exercised by the training presets
    residual: str = "rnn"
    output_relu: bool = False
    output_dropout: float = 0.0

    def __post_init__(self):
        if isinstance(self.cl, dict):
            self.cl = CLModuleConfig(**self.cl)
        if isinstance(self.embedding, dict):
            self.embedding = EmbeddingConfig(**self.embedding)
        self.validate()

    @property
    def hidden(self) -> int:
        return self.cl.hidden

    @property
    def in_width(self) -> int:
        return self.embedding.dim if self.embedding else self.input_dim

    def validate(self) -> None:
        if self.head_mode not in HEAD_MODES:
            raise ConfigError(f"head_mode: expected one of {HEAD_MODES}, got {self.head_mode!r}")
        if self.cell_mode not in CELL_MODES:
            raise ConfigError(f"cell_mode: expected one of {CELL_MODES}, got {self.cell_mode!r}")
        if self.residual not in ("rnn", "shortcut"):
            raise ConfigError(f"residual: expected 'rnn' or 'shortcut', got {self.residual!r}")
        if self.num_classes < 1 or self.input_dim < 1:
            raise ConfigError("num_classes and input_dim must be positive")
        needs_len = self.head_mode == "full" or self.cell_mode == "sequence"
        if needs_len and not self.seq_len:
            raise ConfigError("seq_len: a fixed sequence length is required for head_mode='full' or cell_mode='sequence'")
        if self.cell_mode == "sequence" and self.head_mode == "position":
            raise ConfigError("cell_mode='sequence' produces one vector; head_mode='position' is meaningless")
        if self.residual == "shortcut" and (self.in_width != self.hidden or self.cell_mode != "position"):
            raise ConfigError("residual='shortcut' needs input width == hidden width and per-position cells")
        if not 0.0 <= self.output_dropout < 1.0:
            raise ConfigError("output_dropout must lie in [0, 1)")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CLRNNConfig":
        return cls(**d)


def _head_width(cfg_head: str, seq_len: Optional[int], width: int) -> int:
    return seq_len * width if cfg_head == "full" else width


class _HeadMixin:
    head: Linear
    head_mode: str
    seq_len: Optional[int]

    def _apply_head(self, o: Tensor) -> Tensor:
        if self.head_mode == "last":
            feats = o[:, -1, :]
        elif self.head_mode == "full":
            if o.shape[1] * o.shape[2] != self.head.weight.shape[0]:
                raise DimensionError(f"full head expects {self.head.weight.shape[0]} features, got sequence {o.shape[1:]}")
            feats = o.reshape(o.shape[0], o.shape[1] * o.shape[2])
        else:
            feats = o
        return T.log_softmax(self.head(feats))


def _prepare_inputs(inputs, embedding: Optional[Embedding]) -> tuple[Tensor, bool]:
    if embedding is not None:
        tokens = np.asarray(inputs)
        unbatched = tokens.ndim == 1
        if unbatched:
            tokens = tokens[None]
        return embedding(tokens), unbatched
    x = T.as_tensor(inputs)
    unbatched = x.ndim == 2
    if unbatched:
        x = x.reshape((1,) + x.shape)
    return x, unbatched


class CLRNN(Module, _HeadMixin):
    def __init__(self, cfg: CLRNNConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.head_mode = cfg.head_mode
        self.seq_len = cfg.seq_len
        self.embedding = Embedding(cfg.embedding.vocab, cfg.embedding.dim, rng) if cfg.embedding else None
        self.cl = CarryLookaheadModule(cfg.cl, cfg.in_width, rng)
        out_width = cfg.hidden
        if cfg.residual == "rnn":
            if cfg.cell_mode == "sequence":
                self.cell = RNNCell(cfg.seq_len * cfg.in_width, cfg.seq_len * cfg.hidden, rng)
                out_width = cfg.seq_len * cfg.hidden
            else:
                self.cell = RNNCell(cfg.in_width, cfg.hidden, rng)
        head_seq = 1 if cfg.cell_mode == "sequence" else cfg.seq_len
        self.head = Linear(_head_width(cfg.head_mode, head_seq, out_width), cfg.num_classes, rng)

    def __call__(self, inputs, rng: Optional[np.random.Generator] = None) -> Tensor:
        """Log-probabilities: ``(B, classes)`` for last/full heads, ``(B, n, V)`` for position heads.

        Unbatched inputs (token vector, or ``(n, E)`` array) return unbatched results.
        """
        x, unbatched = _prepare_inputs(inputs, self.embedding)
        b, n = x.shape[0], x.shape[1]
        if self.cfg.seq_len and (self.cfg.head_mode == "full" or self.cfg.cell_mode == "sequence") and n != self.cfg.seq_len:
            raise DimensionError(f"model built for length {self.cfg.seq_len}, got {n}")
        h = self.cl(x, rng)
        if self.cfg.residual == "shortcut":
            o = T.add(x, h)
        else:
            if self.cfg.cell_mode == "sequence":
                x = x.reshape(b, 1, n * x.shape[2])
                h = h.reshape(b, 1, n * h.shape[2])
            o = parallel_rnn_forward(x, h, self.cell.params)
        if self.cfg.output_relu:
            o = T.relu(o)
        o = T.dropout(o, self.cfg.output_dropout, self.training, rng)
        out = self._apply_head(o)
        return out[0] if unbatched else out


@dataclass
class BaselineConfig:
    """Classic recurrent classifier / language model driven by the serial recurrence."""

    hidden: int = 64
    num_classes: int = 10
    input_dim: int = 1
    embedding: Optional[EmbeddingConfig] = None
    head_mode: str = "last"
    seq_len: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.embedding, dict):
            self.embedding = EmbeddingConfig(**self.embedding)
        if self.head_mode not in HEAD_MODES:
            raise ConfigError(f"head_mode: expected one of {HEAD_MODES}, got {self.head_mode!r}")
        if self.head_mode == "full" and not self.seq_len:
            raise ConfigError("seq_len: required for head_mode='full'")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


class SerialRNN(Module, _HeadMixin):
    def __init__(self, cfg: BaselineConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.head_mode = cfg.head_mode
        self.seq_len = cfg.seq_len
        self.embedding = Embedding(cfg.embedding.vocab, cfg.embedding.dim, rng) if cfg.embedding else None
        width = cfg.embedding.dim if cfg.embedding else cfg.input_dim
        self.cell = RNNCell(width, cfg.hidden, rng)
        self.head = Linear(_head_width(cfg.head_mode, cfg.seq_len, cfg.hidden), cfg.num_classes, rng)

    def __call__(self, inputs, rng: Optional[np.random.Generator] = None) -> Tensor:
        x, unbatched = _prepare_inputs(inputs, self.embedding)
        o = serial_recurrent_forward(x, np.zeros(self.cfg.hidden), self.cell.params)
        out = self._apply_head(o)
        return out[0] if unbatched else out


def build_model(cfg: Union[CLRNNConfig, BaselineConfig], rng: Union[np.random.Generator, int]) -> Module:
    """Initialize a model; parameter count is available via ``num_parameters()``."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    if isinstance(cfg, BaselineConfig):
        return SerialRNN(cfg, rng)
    cfg.validate()
    return CLRNN(cfg, rng)


def model_forward(model: Module, inputs, rng: Optional[np.random.Generator] = None) -> Tensor:
    return model(inputs, rng)


# ---------------------------------------------------------------------------
# Sequential-MNIST architectures


def mnist_cl_rnn_1(seq_len: int = 784, dropout: float = 0.05) -> CLRNNConfig:
    """8 single-channel dilated convs (k=7, d=1..128), RNNCell(1, 1), 784-d fc head."""
    cl = CLModuleConfig.uniform(8, 7, 1, dropout=dropout)
    return CLRNNConfig(cl=cl, num_classes=10, input_dim=1, head_mode="full", cell_mode="position", seq_len=seq_len)


def mnist_cl_rnn_784(seq_len: int = 784, dropout: float = 0.05) -> CLRNNConfig:
    """Same conv stack, RNNCell(784, 784) over the whole sequence vector, 784-d fc head."""
    cl = CLModuleConfig.uniform(8, 7, 1, dropout=dropout)
    return CLRNNConfig(cl=cl, num_classes=10, input_dim=1, head_mode="full", cell_mode="sequence", seq_len=seq_len)


# ---------------------------------------------------------------------------
# checkpoints
#
# layout (little-endian):
#   magic b"CLRNNCKP" | u32 version | u64 json_len | json config record
#   u32 param_count, then per parameter:
#   u32 name_len | utf-8 name | u32 ndim | u64 * ndim shape | f64 * prod(shape)

CHECKPOINT_MAGIC = b"CLRNNCKP"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: Union[str, Path], model: Module, record: dict[str, Any]) -> None:
    blob = json.dumps(record, sort_keys=True).encode()
    params = list(model.named_parameters())
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(params)))
        for name, p in params:
            enc = name.encode()
            fh.write(struct.pack("<I", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<I", p.ndim))
            fh.write(struct.pack(f"<{p.ndim}Q", *p.shape))
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def read_checkpoint(path: Union[str, Path]) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"truncated checkpoint at byte {pos}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    if take(8) != CHECKPOINT_MAGIC:
        raise CheckpointError("not a CL-RNN checkpoint (bad magic)")
    version, json_len = struct.unpack("<IQ", take(12))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    record = json.loads(take(json_len))
    (count,) = struct.unpack("<I", take(4))
    params = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode()
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        size = int(np.prod(shape, dtype=np.int64))
        params[name] = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    return record, params


def load_parameters(model: Module, params: dict[str, np.ndarray]) -> None:
    own = dict(model.named_parameters())
    if own.keys() != params.keys():
        raise CheckpointError(f"parameter names differ: {sorted(set(own) ^ set(params))}")
    for name, p in own.items():
        if p.shape != params[name].shape:
            raise CheckpointError(f"{name}: shape {params[name].shape} != {p.shape}")
        p.data[...] = params[name]


def model_from_record(record: dict[str, Any]) -> Module:
    kind = record.get("kind", "cl-rnn")
    if kind == "cl-rnn":
        return build_model(CLRNNConfig.from_dict(record["model"]), 0)
    if kind == "serial-rnn":
        return build_model(BaselineConfig(**record["model"]), 0)
    raise CheckpointError(f"unknown model kind {kind!r}")


def load_checkpoint(path: Union[str, Path]) -> tuple[Module, dict[str, Any]]:
    record, params = read_checkpoint(path)
    model = model_from_record(record)
    load_parameters(model, params)
    return model, record


def model_record(model: Module, **extra) -> dict[str, Any]:
    kind = "serial-rnn" if isinstance(model, SerialRNN) else "cl-rnn"
    return {"kind": kind, "model": model.cfg.to_dict(), **extra}
