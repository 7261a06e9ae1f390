#!/usr/bin/env python3
"""Write a small MNIST directory in IDX format from mlxtend's bundled 5000-image CSV.

Useful where the full MNIST files cannot be downloaded.  The source is
``mlxtend/data/data/mnist_5k.csv.gz`` (784 pixel columns then the label),
taken from an installed mlxtend or from a downloaded wheel:

    pip download --no-deps -d /tmp/wheels mlxtend
    python scripts/mnist_subset_to_idx.py --wheel /tmp/wheels/mlxtend-*.whl data/mnist

Images are shuffled with a fixed seed; 4000 go to the train files and 1000
to the t10k files.
"""

import argparse
import gzip
import io
import sys
import zipfile
from pathlib import Path

import numpy as np

from clrnn.data import MNIST_FILES, write_idx

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_source(args) -> bytes:
    if args.csv:
        return Path(args.csv).read_bytes()
    if args.wheel:
        with zipfile.ZipFile(args.wheel) as zf:
            return zf.read(MEMBER)
    try:
        import mlxtend  # noqa: F401
    except ImportError:
        sys.exit("pass --csv or --wheel, or install mlxtend")
    return (Path(mlxtend.__file__).parent / "data" / "data" / "mnist_5k.csv.gz").read_bytes()


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir")
    parser.add_argument("--csv", help="path to mnist_5k.csv.gz")
    parser.add_argument("--wheel", help="path to an mlxtend wheel")
    parser.add_argument("--test-count", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    table = np.loadtxt(io.BytesIO(gzip.decompress(read_source(args))), delimiter=",", dtype=np.int64)
    images = table[:, :784].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, 784].astype(np.uint8)
    order = np.random.default_rng(args.seed).permutation(len(images))
    test_idx, train_idx = order[: args.test_count], order[args.test_count :]

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split, idx in (("train", train_idx), ("test", test_idx)):
        img_name, lab_name = MNIST_FILES[split]
        write_idx(out / img_name, images[idx])
        write_idx(out / lab_name, labels[idx])
        print(f"{split}: {len(idx)} images -> {out}")


if __name__ == "__main__":
    main()
