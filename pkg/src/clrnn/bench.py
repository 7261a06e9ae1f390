"""Forward-pass wall-clock comparison: serial recurrence vs carry-lookahead + parallel cell."""

from __future__ import annotations

import json
import os
import platform
import statistics
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .carry_lookahead import CarryLookaheadModule, CLModuleConfig
from .parallel_rnn import RNNCell, parallel_rnn_forward, serial_recurrent_forward
from .tensor import Tensor, no_grad


@dataclass
class BenchConfig:
    seq_len: int
    hidden: int = 128
    batch: int = 16
    input_dim: int = 1
    kernel_size: int = 2
    num_layers: int = 2
    channels: int = 16


@dataclass
class BenchRecord:
    model_kind: str
    seq_len: int
    hidden: int
    batch: int
    repeats: int
    median_s: float
    mean_s: float
    stddev_s: float
    speedup: float
    parameters: int


def _time(fn: Callable[[], object], repeats: int, warmup: int) -> list[float]:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return times


def bench_forward(
    configs: Sequence[BenchConfig], repeats: int = 7, seed: int = 0, warmup: int = 2
) -> list[BenchRecord]:
    """Time both forward paths on identical inputs for each config.

    Both paths share one RNN cell; the CL-RNN path adds a small conv stack
    whose last layer emits the hidden width.  Records come in pairs
    (serial first); ``speedup`` on the CL-RNN record is serial / parallel
    median time.
    """
    if repeats < 5:
        raise ValueError("repeats must be >= 5")
    rng = np.random.default_rng(seed)
    records = []
    for cfg in configs:
        cell = RNNCell(cfg.input_dim, cfg.hidden, rng)
        widths = [cfg.channels] * (cfg.num_layers - 1) + [cfg.hidden]
        cl_cfg = CLModuleConfig(num_layers=cfg.num_layers, kernel_size=cfg.kernel_size, channels=widths)
        cl = CarryLookaheadModule(cl_cfg, cfg.input_dim, rng).eval()
        x = Tensor(rng.standard_normal((cfg.batch, cfg.seq_len, cfg.input_dim)))
        h0 = np.zeros(cfg.hidden)
        p = cell.params

        def serial():
            return serial_recurrent_forward(x, h0, p)

        def parallel():
            return parallel_rnn_forward(x, cl(x), p)

        with no_grad():
            a, b = serial(), parallel()
            if a.shape != b.shape:
                raise AssertionError(f"output shapes differ: serial {a.shape} vs parallel {b.shape}")
            t_serial = _time(serial, repeats, warmup)
            t_parallel = _time(parallel, repeats, warmup)
        med_s, med_p = statistics.median(t_serial), statistics.median(t_parallel)
        n_cell = cell.num_parameters()
        for kind, ts, speed, n_params in (
            ("serial-rnn", t_serial, 1.0, n_cell),
            ("cl-rnn", t_parallel, med_s / med_p, n_cell + cl.num_parameters()),
        ):
            records.append(
                BenchRecord(kind, cfg.seq_len, cfg.hidden, cfg.batch, repeats, statistics.median(ts),
                            statistics.fmean(ts), statistics.stdev(ts), speed, n_params)
            )
    return records


def machine_descriptor() -> dict:
    info = {
        "cpu_count": os.cpu_count(),
        "usable_cpus": len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count(),
        "platform": platform.platform(),
        "processor": platform.processor(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    try:
        for line in Path("/proc/cpuinfo").read_text().splitlines():
            if line.startswith("model name"):
                info["cpu_model"] = line.split(":", 1)[1].strip()
            elif line.startswith("cpu MHz"):
                info["cpu_mhz"] = float(line.split(":", 1)[1])
                break
    except OSError:
        pass
    return info


def write_report(path: Union[str, Path], records: Sequence[BenchRecord]) -> dict:
    report = {"machine": machine_descriptor(), "records": [asdict(r) for r in records]}
    Path(path).write_text(json.dumps(report, indent=2) + "\n")
    return report


def speedups(records: Sequence[BenchRecord]) -> dict[int, float]:
    return {r.seq_len: r.speedup for r in records if r.model_kind == "cl-rnn"}
