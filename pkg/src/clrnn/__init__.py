"""Carry-lookahead RNN: dilated causal convolutions precompute every hidden
state, after which a single RNN cell runs over the whole sequence at once."""

__version__ = "0.1.0"

from .adder import BitWord, cla_add, cla_carries, cla_generate_propagate, full_adder, ripple_add
from .bench import BenchConfig, BenchRecord, bench_forward
from .carry_lookahead import CarryLookaheadModule, CLModuleConfig, cl_forward, cl_receptive_probe
from .data import (
    CharCorpus,
    SequenceBatch,
    SequenceDataset,
    batch_iter,
    build_char_corpus,
    image_to_sequence,
    load_sequential_mnist,
    parse_idx,
    synthetic_copy_task,
)
from .gradcheck import GradCheckReport, finite_diff_check
from .layers import CausalConvSpec, Module, causal_conv1d, dropout, embedding_forward, linear_forward, receptive_field
from .model import (
    CLRNN,
    BaselineConfig,
    CLRNNConfig,
    EmbeddingConfig,
    SerialRNN,
    build_model,
    load_checkpoint,
    model_forward,
    save_checkpoint,
)
from .parallel_rnn import RNNCell, RNNCellParams, parallel_rnn_forward, rnncell_step, serial_recurrent_forward
from .tensor import ContractError, DimensionError, Tensor, no_grad
from .training import TrainState, bpc, clip_grad_norm, lr_decay_check, train_epoch, evaluate
