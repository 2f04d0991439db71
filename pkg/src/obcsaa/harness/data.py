"""MNIST IDX files, dataset partitioning and a synthetic Gaussian task."""
import gzip
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, ParameterError
from ..learner import LocalDataset

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
_UBYTE = 0x08


def _read_bytes(path):
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def read_idx(path):
    """Parse a ubyte IDX file into an ndarray of its declared shape."""
    try:
        raw = _read_bytes(path)
    except (OSError, EOFError) as exc:
        raise FormatError(f"{path}: cannot read ({exc})") from exc
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated header (magic)")
    zero, dtype, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0 or dtype != _UBYTE or ndim < 1:
        raise FormatError(f"{path}: bad magic 0x{int.from_bytes(raw[:4], 'big'):08x}")
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise FormatError(f"{path}: truncated header (dimensions)")
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    n = int(np.prod(dims))
    if len(raw) - head < n:
        raise FormatError(f"{path}: truncated data, expected {n} bytes after header, got {len(raw) - head}")
    if len(raw) - head > n:
        raise FormatError(f"{path}: {len(raw) - head - n} trailing bytes after data")
    return np.frombuffer(raw, dtype=np.uint8, offset=head, count=n).reshape(dims)


def idx_bytes(array):
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">HBB", 0, _UBYTE, array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    return header + array.tobytes()


def write_idx(path, array):
    path = Path(path)
    raw = idx_bytes(array)
    if path.suffix == ".gz":
        # fixed mtime and no embedded name keep the bytes reproducible
        with open(path, "wb") as fh, gzip.GzipFile(filename="", mode="wb", fileobj=fh, mtime=0) as gz:
            gz.write(raw)
    else:
        path.write_bytes(raw)


def _magic(path):
    try:
        head = _read_bytes(path)[:4]
    except (OSError, EOFError) as exc:
        raise FormatError(f"{path}: cannot read ({exc})") from exc
    return int.from_bytes(head, "big") if len(head) == 4 else None


def load_mnist_idx(images_path, labels_path, limit=None):
    """Images scaled to [0, 1] and flattened to 784 features, paired with labels."""
    if _magic(images_path) != IMAGES_MAGIC:
        raise FormatError(f"{images_path}: magic is not 0x{IMAGES_MAGIC:08x} (images)")
    if _magic(labels_path) != LABELS_MAGIC:
        raise FormatError(f"{labels_path}: magic is not 0x{LABELS_MAGIC:08x} (labels)")
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.shape[1:] != (28, 28):
        raise FormatError(f"{images_path}: image dims {images.shape[1:]} are not 28x28")
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels")
    if labels.size and labels.max() > 9:
        raise FormatError(f"{labels_path}: label {int(labels.max())} outside 0..9")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return LocalDataset(x, labels.astype(np.int64))


def partition_dataset(data, U, K_bar, seed):
    """Seeded shuffle, then ``K_bar`` consecutive samples per worker (disjoint)."""
    if U < 1 or K_bar < 1:
        raise ParameterError("U and K_bar must be >= 1")
    need = U * K_bar
    if need > len(data):
        raise ParameterError(f"need {need} samples for U={U} x K_bar={K_bar}, have {len(data)}")
    perm = np.random.default_rng(seed).permutation(len(data))[:need]
    return [
        LocalDataset(data.features[idx], data.labels[idx])
        for idx in (perm[i * K_bar:(i + 1) * K_bar] for i in range(U))
    ]


def make_synthetic(features, classes, n_train, n_test, seed, separation=1.0):
    """Gaussian class clusters: x = mu_y + N(0, I), with ||mu_y|| ~ separation * sqrt(2)."""
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((classes, features)) * (separation * np.sqrt(2.0 / features))
    n = n_train + n_test
    y = rng.integers(0, classes, size=n)
    x = means[y] + rng.standard_normal((n, features)) / np.sqrt(features)
    return LocalDataset(x[:n_train], y[:n_train]), LocalDataset(x[n_train:], y[n_train:])
