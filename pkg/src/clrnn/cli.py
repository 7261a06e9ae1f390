"""Command-line entry point: ``clrnn {train,eval,bench,gradcheck,adder-demo}``.

Exit status: 0 on success, 1 on a runtime failure, 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional, Sequence, Union, get_args, get_origin, get_type_hints

import numpy as np

from . import __version__
from .adder import carry_trace, exhaustive_sweep, random_sweep
from .bench import BenchConfig, bench_forward, write_report
from .carry_lookahead import CLModuleConfig
from .data import (
    DATA_DIR_ENV,
    build_char_corpus,
    default_data_dir,
    load_sequential_mnist,
    mnist_paths,
    synthetic_copy_task,
    write_manifest,
)
from .gradcheck import standard_suite
from .model import BaselineConfig, CLRNNConfig, ConfigError, EmbeddingConfig, build_model, load_checkpoint
from .training import FitConfig, TaskData, evaluate, fit

log = logging.getLogger("clrnn")

TASKS = ("seq-mnist", "char-lm", "copy-task")


class ConfigFieldError(ConfigError):
    def __init__(self, name: str, message: str):
        super().__init__(f"{name}: {message}")
        self.field = name


@dataclass
class RunConfig:
    """Everything a training run needs.  ``None`` means "use the task default"."""

    task: str = "seq-mnist"
    model: str = "cl-rnn"
    seed: int = 0
    output_dir: Optional[str] = None
    data_dir: Optional[str] = None
    corpus: Optional[str] = None
    # data scale (seq-mnist)
    scale: str = "desk"
    stride: Optional[int] = None
    train_size: Optional[int] = None
    valid_size: Optional[int] = None
    test_size: Optional[int] = None
    # copy-task
    copy_length: int = 32
    copy_delay: int = 8
    copy_items: int = 512
    # language model windows and splits
    seq_len: Optional[int] = None
    valid_len: Optional[int] = None
    splits: Optional[list[float]] = None
    # model
    kernel_size: Optional[int] = None
    num_layers: Optional[int] = None
    dilation_multiple: Optional[int] = None
    channels: Optional[int] = None
    hidden: Optional[int] = None
    dropout: Optional[float] = None
    embed_dim: Optional[int] = None
    head_mode: Optional[str] = None
    cell_mode: Optional[str] = None
    shift_mode: Optional[str] = None
    # training
    epochs: Optional[int] = None
    batch_size: Optional[int] = None
    lr: Optional[float] = None
    optimizer: Optional[str] = None
    clip: Optional[float] = None


# Per-task defaults; copy-task is a small memory probe.
TASK_DEFAULTS: dict[str, dict[str, Any]] = {
    "seq-mnist": dict(
        batch_size=64, epochs=12, lr=2e-3, optimizer="adam", clip=None, kernel_size=7, num_layers=8,
        dilation_multiple=2, channels=1, dropout=0.05, head_mode="full", cell_mode="position", shift_mode="exclusive",
    ),
    "char-lm": dict(
        batch_size=32, epochs=100, lr=4.0, optimizer="sgd", clip=0.15, kernel_size=3, num_layers=3,
        dilation_multiple=2, channels=450, dropout=0.1, embed_dim=100, seq_len=400, valid_len=320,
        head_mode="position", cell_mode="position", shift_mode="exclusive", splits=[0.9, 0.05, 0.05],
    ),
    "copy-task": dict(
        batch_size=32, epochs=20, lr=1e-2, optimizer="adam", clip=None, kernel_size=2, num_layers=5,
        dilation_multiple=2, channels=8, dropout=0.0, head_mode="last", cell_mode="position", shift_mode="exclusive",
    ),
}

# "desk" is a reduced preset (strided images, small subsets); "full" uses every image at full resolution.
MNIST_SCALES = {
    "desk": dict(stride=2, train_size=2000, valid_size=500, test_size=500),
    "full": dict(stride=1, train_size=None, valid_size=5000, test_size=None),
}

CHOICES = {
    "task": TASKS,
    "model": ("cl-rnn", "serial-rnn"),
    "scale": tuple(MNIST_SCALES),
    "optimizer": ("adam", "sgd"),
    "head_mode": ("last", "full", "position"),
    "cell_mode": ("position", "sequence"),
    "shift_mode": ("exclusive", "inclusive"),
    "stride": (1, 2, 4),
}
POSITIVE = {
    "copy_length", "copy_items", "seq_len", "valid_len", "kernel_size", "num_layers", "channels", "hidden",
    "embed_dim", "epochs", "batch_size", "lr", "clip", "train_size", "valid_size", "test_size",
}

_HINTS = get_type_hints(RunConfig)


def _base_type(name: str):
    hint = _HINTS[name]
    if get_origin(hint) is Union:
        hint = next(a for a in get_args(hint) if a is not type(None))
    return hint


def _coerce(name: str, value: Any) -> Any:
    """Check a JSON or command-line value against the field's declared type."""
    if value is None:
        if get_origin(_HINTS[name]) is Union:
            return None
        raise ConfigFieldError(name, "may not be null")
    kind = _base_type(name)
    try:
        if get_origin(kind) is list:
            if isinstance(value, str):
                value = [v for v in value.split(",") if v]
            if not isinstance(value, list):
                raise TypeError
            return [float(v) for v in value]
        if kind is bool:
            if isinstance(value, str) and value.lower() in ("true", "false"):
                return value.lower() == "true"
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if not isinstance(value, str):
            raise TypeError
        return value
    except (TypeError, ValueError):
        raise ConfigFieldError(name, f"expected {getattr(kind, '__name__', kind)}, got {value!r}") from None


def load_config_file(path: Union[str, Path]) -> dict[str, Any]:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as err:
        raise ConfigFieldError("config", f"cannot read {path}: {err.strerror}") from None
    except json.JSONDecodeError as err:
        raise ConfigFieldError("config", f"{path} is not valid JSON ({err})") from None
    if not isinstance(doc, dict):
        raise ConfigFieldError("config", "top level must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigFieldError(unknown[0], "unknown key" + (f" (also {', '.join(unknown[1:])})" if unknown[1:] else ""))
    return doc


def resolve_config(file_values: Optional[dict[str, Any]] = None, overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    """Merge dataclass defaults < task table < config file < command line, then validate."""
    merged: dict[str, Any] = {}
    for source in (file_values or {}, overrides or {}):
        for k, v in source.items():
            merged[k] = _coerce(k, v)
    task = merged.get("task", RunConfig.task)
    if task not in TASKS:
        raise ConfigFieldError("task", f"expected one of {TASKS}, got {task!r}")
    cfg = RunConfig(**merged)
    for k, v in TASK_DEFAULTS[task].items():
        if k not in merged:
            setattr(cfg, k, list(v) if isinstance(v, list) else v)
    if task == "seq-mnist":
        if cfg.scale not in MNIST_SCALES:
            raise ConfigFieldError("scale", f"expected one of {tuple(MNIST_SCALES)}, got {cfg.scale!r}")
        for k, v in MNIST_SCALES[cfg.scale].items():
            if k not in merged:
                setattr(cfg, k, v)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    for name, allowed in CHOICES.items():
        value = getattr(cfg, name)
        if value is not None and value not in allowed:
            raise ConfigFieldError(name, f"expected one of {allowed}, got {value!r}")
    for name in POSITIVE:
        value = getattr(cfg, name)
        if value is not None and value <= 0:
            raise ConfigFieldError(name, f"must be positive, got {value}")
    if cfg.dropout is not None and not 0.0 <= cfg.dropout < 1.0:
        raise ConfigFieldError("dropout", f"must lie in [0, 1), got {cfg.dropout}")
    if cfg.dilation_multiple is not None and cfg.dilation_multiple < 2:
        raise ConfigFieldError("dilation_multiple", f"must be at least 2, got {cfg.dilation_multiple}")
    if cfg.copy_delay < 0 or cfg.copy_delay >= cfg.copy_length:
        raise ConfigFieldError("copy_delay", f"must lie in [0, copy_length), got {cfg.copy_delay}")
    if cfg.task == "char-lm":
        if cfg.valid_len > cfg.seq_len:
            raise ConfigFieldError("valid_len", f"must not exceed seq_len ({cfg.seq_len}), got {cfg.valid_len}")
        if cfg.splits is None or len(cfg.splits) != 3 or abs(sum(cfg.splits) - 1.0) > 1e-9 or min(cfg.splits) < 0:
            raise ConfigFieldError("splits", f"need three non-negative fractions summing to 1, got {cfg.splits}")
        if cfg.head_mode != "position":
            raise ConfigFieldError("head_mode", "char-lm predicts every position; use 'position'")
    elif cfg.head_mode == "position":
        raise ConfigFieldError("head_mode", f"task {cfg.task} is classification; use 'last' or 'full'")


# ---------------------------------------------------------------------------
# building data and models from a RunConfig


def load_task_data(cfg: RunConfig) -> tuple[TaskData, dict[str, Any], list[Path]]:
    """Return the splits, a description of them, and the files they came from."""
    if cfg.task == "seq-mnist":
        data_dir = Path(cfg.data_dir) if cfg.data_dir else default_data_dir()
        if data_dir is None:
            raise ConfigFieldError("data_dir", f"not set; pass --data-dir or export {DATA_DIR_ENV}")
        files = list(mnist_paths(data_dir).values())
        sets = load_sequential_mnist(data_dir, cfg.train_size, cfg.valid_size, cfg.test_size, cfg.stride, cfg.seed)
        data = TaskData("classification", sets["train"], sets["valid"], sets["test"])
        desc = {k: len(v) for k, v in sets.items()} | {"stride": cfg.stride, "scale": cfg.scale, "seq_len": sets["train"].inputs.shape[1]}
        return data, desc, files
    if cfg.task == "char-lm":
        if not cfg.corpus:
            raise ConfigFieldError("corpus", "a text file is required for char-lm")
        path = Path(cfg.corpus)
        corpus = build_char_corpus(path.read_bytes(), tuple(cfg.splits))
        data = TaskData("language-model", corpus.train, corpus.valid, corpus.test, cfg.seq_len, cfg.valid_len, corpus)
        desc = {"train": len(corpus.train), "valid": len(corpus.valid), "test": len(corpus.test),
                "vocab_size": corpus.vocab_size, "splits": list(cfg.splits)}
        return data, desc, [path]
    data_seq = np.random.SeedSequence(cfg.seed).spawn(4)[3]
    rng = np.random.default_rng(data_seq)
    sets = {s: synthetic_copy_task(cfg.copy_length, cfg.copy_delay, rng, cfg.copy_items) for s in ("train", "valid", "test")}
    data = TaskData("classification", sets["train"], sets["valid"], sets["test"])
    return data, {k: len(v) for k, v in sets.items()} | {"delay": cfg.copy_delay, "length": cfg.copy_length}, []


def model_config(cfg: RunConfig, data: TaskData) -> Union[CLRNNConfig, BaselineConfig]:
    if data.kind == "language-model":
        vocab = data.corpus.vocab_size
        embedding, num_classes, input_dim, seq_len = EmbeddingConfig(vocab, cfg.embed_dim), vocab, 1, None
    else:
        embedding, seq_len = None, data.train.inputs.shape[1]
        num_classes, input_dim = data.train.num_classes, data.train.inputs.shape[2]
    if cfg.model == "serial-rnn":
        return BaselineConfig(cfg.hidden or BaselineConfig.hidden, num_classes, input_dim, embedding, cfg.head_mode, seq_len)
    cl = CLModuleConfig.uniform(
        cfg.num_layers, cfg.kernel_size, cfg.channels, hidden=cfg.hidden, dilation_multiple=cfg.dilation_multiple,
        dropout=cfg.dropout, shift_mode=cfg.shift_mode,
    )
    return CLRNNConfig(cl=cl, num_classes=num_classes, input_dim=input_dim, embedding=embedding,
                       head_mode=cfg.head_mode, cell_mode=cfg.cell_mode, seq_len=seq_len)


def init_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[0])


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args: argparse.Namespace) -> int:
    file_values = load_config_file(args.config) if args.config else {}
    cfg = resolve_config(file_values, _overrides(args))
    out = Path(cfg.output_dir or f"runs/{cfg.task}-seed{cfg.seed}")
    data, desc, files = load_task_data(cfg)
    try:
        mcfg = model_config(cfg, data)
    except ValueError as err:
        raise ConfigFieldError("model", str(err)) from None
    model = build_model(mcfg, init_rng(cfg.seed))
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True) + "\n")
    write_manifest(out / "data_manifest.json", files, desc)
    print(f"{cfg.task}: {cfg.model} with {model.num_parameters()} parameters -> {out}")
    if cfg.task == "seq-mnist" and cfg.scale == "desk":
        print("note: desk-scale preset (strided images, subset); not the full-data configuration")
    fit_cfg = FitConfig(cfg.epochs, cfg.batch_size, cfg.lr, cfg.optimizer, cfg.clip, cfg.seed)
    history = fit(model, data, fit_cfg, out, record_extra={"run": dataclasses.asdict(cfg)},
                  on_epoch=lambda row: print(_epoch_line(row), flush=True))
    best, _ = load_checkpoint(out / "best.ckpt")
    scores = evaluate(best, data.batches("test", cfg.batch_size))
    (out / "test_metrics.json").write_text(json.dumps(scores, indent=2, sort_keys=True) + "\n")
    print("test " + " ".join(f"{k}={v:.6g}" for k, v in sorted(scores.items())))
    return 0 if history else 1


def _epoch_line(row: dict) -> str:
    return (f"epoch {row['epoch']:3d}  train {row['train_loss']:.4f}  valid {row['valid_loss']:.4f}  "
            f"{row['metric']} {row['value']:.4f}  lr {row['lr']:g}")


def cmd_eval(args: argparse.Namespace) -> int:
    model, record = load_checkpoint(args.checkpoint)
    run = dict(record.get("run", {}))
    for key in ("data_dir", "corpus"):
        if getattr(args, key):
            run[key] = getattr(args, key)
    cfg = resolve_config({k: v for k, v in run.items() if k in _HINTS})
    data, _, _ = load_task_data(cfg)
    scores = evaluate(model, data.batches(args.split, args.batch_size or cfg.batch_size))
    print(json.dumps({"split": args.split, **scores}, sort_keys=True))
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    lengths = [int(v) for v in args.lengths.split(",")]
    configs = [BenchConfig(n, args.hidden, args.batch, kernel_size=args.kernel_size, num_layers=args.num_layers,
                           channels=args.channels) for n in lengths]
    records = bench_forward(configs, repeats=args.repeats, seed=args.seed)
    report = write_report(args.output, records)
    for r in records:
        print(f"{r.model_kind:10s} n={r.seq_len:5d}  median {r.median_s * 1e3:9.3f} ms  speedup {r.speedup:.2f}")
    print(f"cores: {report['machine']['usable_cpus']}; report -> {args.output}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    results = standard_suite(args.seed, args.step, args.kernel_tol, args.model_tol)
    for r in results:
        status = "ok  " if r.report.passed else "FAIL"
        print(f"{status} {r.name:34s} max rel err {r.report.max_rel_error:.3e} (tol {r.report.tol:g})")
    failed = [r.name for r in results if not r.report.passed]
    print(f"{len(results) - len(failed)}/{len(results)} passed")
    return 1 if failed else 0


def cmd_adder_demo(args: argparse.Namespace) -> int:
    limit = 1 << args.bits
    for name in ("a", "b"):
        if not 0 <= getattr(args, name) < limit:
            raise ConfigFieldError(name, f"must lie in [0, {limit}) for {args.bits} bits")
    rows = carry_trace(args.a, args.b, args.bits, args.c0)
    total = args.a + args.b + args.c0
    print(f"{args.a} + {args.b} + {args.c0} = {total}  ({args.bits}-bit)")
    print(" bit  A  B  G  P  C  S")
    for row in reversed(rows):
        print(f"{row['bit']:4d}" + "".join(f"{row[k]:3d}" for k in "ABGPCS"))
    print(f"carry out {total >> args.bits}")
    status = 0
    if args.exhaustive:
        ok, n = exhaustive_sweep(args.bits)
        print(f"exhaustive sweep ({args.bits}-bit, all a, b, c0): {ok}/{n} matches")
        status |= ok != n
    if args.random:
        ok, n = random_sweep(args.random, 64, args.seed)
        print(f"random sweep (64-bit): {ok}/{n} matches")
        status |= ok != n
    return int(status)


# ---------------------------------------------------------------------------
# argument parsing


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {f.name: getattr(args, f.name) for f in fields(RunConfig) if getattr(args, f.name, None) is not None}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clrnn", description="Carry-lookahead RNN toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a model; writes metrics.csv and checkpoints")
    train.add_argument("--config", help="flat JSON file of run settings")
    for f in fields(RunConfig):
        kind = _base_type(f.name)
        help_text = f"one of {CHOICES[f.name]}" if f.name in CHOICES else None
        if get_origin(kind) is list:
            help_text = "comma-separated numbers"
        # values stay strings here; resolve_config coerces them with field-level errors
        train.add_argument(_flag(f.name), dest=f.name, default=None, metavar=f.name.upper(), help=help_text)
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="print metrics of a checkpoint on one split")
    ev.add_argument("checkpoint")
    ev.add_argument("--split", choices=("train", "valid", "test"), default="test")
    ev.add_argument("--data-dir", dest="data_dir")
    ev.add_argument("--corpus")
    ev.add_argument("--batch-size", dest="batch_size", type=int)
    ev.set_defaults(func=cmd_eval)

    bench = sub.add_parser("bench", help="time serial vs parallel forward passes")
    bench.add_argument("--output", default="bench.json")
    bench.add_argument("--lengths", default="98,196,392,784")
    bench.add_argument("--hidden", type=int, default=128)
    bench.add_argument("--batch", type=int, default=16)
    bench.add_argument("--kernel-size", dest="kernel_size", type=int, default=2)
    bench.add_argument("--num-layers", dest="num_layers", type=int, default=2)
    bench.add_argument("--channels", type=int, default=16)
    bench.add_argument("--repeats", type=int, default=7)
    bench.add_argument("--seed", type=int, default=0)
    bench.set_defaults(func=cmd_bench)

    gc = sub.add_parser("gradcheck", help="finite-difference check of every op and a small model")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--step", type=float, default=1e-5)
    gc.add_argument("--kernel-tol", dest="kernel_tol", type=float, default=1e-6)
    gc.add_argument("--model-tol", dest="model_tol", type=float, default=1e-4)
    gc.set_defaults(func=cmd_gradcheck)

    ad = sub.add_parser("adder-demo", help="carry-lookahead trace and adder sweeps")
    ad.add_argument("--a", type=int, default=11)
    ad.add_argument("--b", type=int, default=6)
    ad.add_argument("--c0", type=int, choices=(0, 1), default=0)
    ad.add_argument("--bits", type=int, default=4)
    ad.add_argument("--exhaustive", action="store_true", help="check every (a, b, c0) at --bits width")
    ad.add_argument("--random", type=int, default=0, metavar="N", help="also check N random 64-bit sums")
    ad.add_argument("--seed", type=int, default=0)
    ad.set_defaults(func=cmd_adder_demo)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001  runtime failures map to exit status 1
        log.debug("failure", exc_info=True)
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
