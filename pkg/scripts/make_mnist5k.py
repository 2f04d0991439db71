"""Convert the 5000-image MNIST subset bundled with mlxtend into IDX files.

    pip download --no-deps mlxtend -d /tmp/dl
    python scripts/make_mnist5k.py /tmp/dl/mlxtend-*.whl data/mnist5k

The subset holds 500 images per digit.  A fixed stratified split puts 400 per
class in the training files and 100 per class in the test files.
"""
import argparse
import gzip
import io
import zipfile
from pathlib import Path

import numpy as np

from obcsaa.harness.data import write_idx

CSV_MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("wheel")
    ap.add_argument("out_dir")
    ap.add_argument("--test-per-class", type=int, default=100)
    args = ap.parse_args()

    with zipfile.ZipFile(args.wheel) as zf:
        raw = gzip.decompress(zf.read(CSV_MEMBER))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    pixels = table[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, -1].astype(np.uint8)

    rng = np.random.default_rng(20210101)
    train_idx, test_idx = [], []
    for digit in range(10):
        idx = rng.permutation(np.flatnonzero(labels == digit))
        test_idx.append(idx[: args.test_per_class])
        train_idx.append(idx[args.test_per_class:])
    train_idx = rng.permutation(np.concatenate(train_idx))
    test_idx = rng.permutation(np.concatenate(test_idx))

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for prefix, idx in (("train", train_idx), ("t10k", test_idx)):
        write_idx(out / f"{prefix}-images-idx3-ubyte.gz", pixels[idx])
        write_idx(out / f"{prefix}-labels-idx1-ubyte.gz", labels[idx])
        print(prefix, len(idx))


if __name__ == "__main__":
    main()
