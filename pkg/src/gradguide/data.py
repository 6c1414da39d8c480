"""Datasets: the synthetic 2D problem, CIFAR-10 / IDX readers, target picking.

Besides the two standard image formats there is a small container format
(``LDS1``) used by the command line to store generated datasets:

    magic "LDS1" | u32 n_splits
    per split: u32 n | u32 dim | u32 num_classes | f64 lo | f64 hi
               | n*dim f64 features (row-major) | n u8 labels

All integers and floats are little-endian.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import ParseError, UsageError
from .rng import make_rng

CIFAR_RECORD = 3073
CIFAR_PIXELS = 3072
IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
_LDS_MAGIC = b"LDS1"


@dataclass(frozen=True)
class LabeledDataset:
    """Examples as rows of ``X`` with integer labels ``y``."""

    X: np.ndarray
    y: np.ndarray
    num_classes: int
    feature_lo: float = 0.0
    feature_hi: float = 1.0

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        y = np.asarray(self.y, dtype=np.int64)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.shape[0] == 0:
            raise UsageError("dataset is empty")
        if y.shape != (X.shape[0],):
            raise UsageError(f"{X.shape[0]} examples but {y.shape} labels")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise UsageError("label out of range")
        if X.min() < self.feature_lo or X.max() > self.feature_hi:
            raise UsageError("feature outside declared bounds")

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]

    def subset(self, idx):
        return LabeledDataset(self.X[idx], self.y[idx], self.num_classes,
                              self.feature_lo, self.feature_hi)


def synthetic_label(point):
    """Class 0 below the line ``x1 + x2 = 10``, class 1 on or above it."""
    return int(point[0] + point[1] >= 10.0)


def gen_synthetic_2d(seed=0, n_train_per_class=1000, n_test_per_class=200, margin=0.4,
                     max_draws=1_000_000):
    """Two balanced classes on ``[0, 10]^2`` split by ``x1 + x2 = 10``.

    Points closer than ``margin`` (measured on ``x1 + x2``) to the line are
    rejected. Draws are made in batches until each class of each split is
    full; class counts are exact.

    Returns
    -------
    (train, test) : tuple of LabeledDataset
    """
    if n_train_per_class <= 0 or n_test_per_class <= 0:
        raise UsageError("per-class counts must be positive")
    if not 0.0 <= margin < 5.0:
        raise UsageError("margin must lie in [0, 5)")
    rng = make_rng(seed)
    quota = n_train_per_class + n_test_per_class
    pools = {0: [], 1: []}
    need = {0: quota, 1: quota}
    draws = 0
    while need[0] or need[1]:
        if draws >= max_draws:
            raise UsageError(f"rejection sampling gave up after {draws} draws (margin {margin})")
        batch = rng.uniform(0.0, 10.0, size=(256, 2))
        draws += 256
        s = batch.sum(axis=1)
        keep = np.abs(s - 10.0) >= margin
        for p, label in zip(batch[keep], (s[keep] >= 10.0).astype(int)):
            if need[label]:
                pools[label].append(p)
                need[label] -= 1

    def split(lo, hi):
        X = np.concatenate([np.array(pools[0][lo:hi]), np.array(pools[1][lo:hi])])
        y = np.repeat([0, 1], hi - lo)
        order = rng.permutation(len(y))
        return LabeledDataset(X[order], y[order], 2, 0.0, 10.0)

    return split(0, n_train_per_class), split(n_train_per_class, quota)


def read_cifar10_bin(path):
    with open(path, "rb") as fh:
        return parse_cifar10_bin(fh.read())


def parse_cifar10_bin(buf):
    """Parse CIFAR-10 binary batch bytes: per record a label byte, then 3072 pixels."""
    if len(buf) == 0:
        raise ParseError("empty CIFAR-10 file", 0)
    if len(buf) % CIFAR_RECORD:
        raise ParseError(f"length {len(buf)} is not a multiple of {CIFAR_RECORD}",
                         len(buf) - len(buf) % CIFAR_RECORD)
    records = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise ParseError(f"record {bad[0]} has label {labels[bad[0]]}", int(bad[0]) * CIFAR_RECORD)
    X = records[:, 1:].astype(np.float64) / 255.0
    return LabeledDataset(X, labels, 10, 0.0, 1.0)


def dump_cifar10_bin(ds):
    """Serialize a ``[0, 1]``-valued dataset to CIFAR-10 bytes (pixels rounded to u8)."""
    if ds.dim != CIFAR_PIXELS or ds.num_classes > 10:
        raise UsageError("dataset is not CIFAR-shaped")
    pixels = np.rint(np.clip(ds.X, 0.0, 1.0) * 255.0).astype(np.uint8)
    out = np.empty((len(ds), CIFAR_RECORD), dtype=np.uint8)
    out[:, 0] = ds.y
    out[:, 1:] = pixels
    return out.tobytes()


def read_idx(images_path, labels_path):
    with open(images_path, "rb") as fh:
        images = fh.read()
    with open(labels_path, "rb") as fh:
        labels = fh.read()
    return parse_idx(images, labels)


def _idx_header(buf, magic, ndim, what):
    if len(buf) < 4 + 4 * ndim:
        raise ParseError(f"{what} file too short for header", 0)
    (found,) = struct.unpack_from(">I", buf, 0)
    if found != magic:
        raise ParseError(f"{what} magic is {found:#010x}, expected {magic:#010x}", 0)
    return struct.unpack_from(">" + "I" * ndim, buf, 4)


def parse_idx(image_bytes, label_bytes):
    """Parse big-endian IDX image (rank 3, u8) and label (rank 1, u8) files."""
    n_img, rows, cols = _idx_header(image_bytes, IDX_IMAGE_MAGIC, 3, "image")
    (n_lab,) = _idx_header(label_bytes, IDX_LABEL_MAGIC, 1, "label")
    if n_img != n_lab:
        raise ParseError(f"count mismatch: {n_img} images vs {n_lab} labels", 4)
    if n_img == 0:
        raise ParseError("image count is zero", 4)
    size = n_img * rows * cols
    if len(image_bytes) != 16 + size:
        raise ParseError(f"image data: expected {size} bytes, found {len(image_bytes) - 16}", 16)
    if len(label_bytes) != 8 + n_lab:
        raise ParseError(f"label data: expected {n_lab} bytes, found {len(label_bytes) - 8}", 8)
    X = np.frombuffer(image_bytes, dtype=np.uint8, offset=16).reshape(n_img, rows * cols)
    y = np.frombuffer(label_bytes, dtype=np.uint8, offset=8).astype(np.int64)
    return LabeledDataset(X.astype(np.float64) / 255.0, y, max(int(y.max()) + 1, 2), 0.0, 1.0)


def dump_idx(ds, rows, cols):
    if rows * cols != ds.dim:
        raise UsageError("rows*cols must equal the feature dimension")
    pixels = np.rint(np.clip(ds.X, 0.0, 1.0) * 255.0).astype(np.uint8)
    images = struct.pack(">IIII", IDX_IMAGE_MAGIC, len(ds), rows, cols) + pixels.tobytes()
    labels = struct.pack(">II", IDX_LABEL_MAGIC, len(ds)) + ds.y.astype(np.uint8).tobytes()
    return images, labels


def dump_datasets(splits):
    """Serialize one or more datasets to ``LDS1`` bytes."""
    parts = [_LDS_MAGIC, struct.pack("<I", len(splits))]
    for ds in splits:
        parts.append(struct.pack("<IIIdd", len(ds), ds.dim, ds.num_classes,
                                 ds.feature_lo, ds.feature_hi))
        parts.append(ds.X.astype("<f8").tobytes())
        parts.append(ds.y.astype(np.uint8).tobytes())
    return b"".join(parts)


def parse_datasets(buf):
    if buf[:4] != _LDS_MAGIC:
        raise ParseError(f"bad magic {bytes(buf[:4])!r}", 0)
    if len(buf) < 8:
        raise ParseError("truncated header", 4)
    (count,) = struct.unpack_from("<I", buf, 4)
    pos = 8
    out = []
    for k in range(count):
        if pos + 28 > len(buf):
            raise ParseError(f"truncated header of split {k}", pos)
        n, dim, ncls, lo, hi = struct.unpack_from("<IIIdd", buf, pos)
        pos += 28
        end = pos + 8 * n * dim + n
        if end > len(buf):
            raise ParseError(f"split {k} truncated", pos)
        X = np.frombuffer(buf, dtype="<f8", count=n * dim, offset=pos).reshape(n, dim)
        y = np.frombuffer(buf, dtype=np.uint8, count=n, offset=pos + 8 * n * dim)
        try:
            out.append(LabeledDataset(X.astype(np.float64), y.astype(np.int64), ncls, lo, hi))
        except UsageError as exc:
            raise ParseError(f"split {k}: {exc}", pos) from None
        pos = end
    if pos != len(buf):
        raise ParseError("trailing bytes", pos)
    return out


def save_datasets(splits, path):
    with open(path, "wb") as fh:
        fh.write(dump_datasets(splits))


def load_datasets(path):
    with open(path, "rb") as fh:
        return parse_datasets(fh.read())


def load_any(path, labels_path=None):
    """Load ``LDS1`` splits, a CIFAR-10 batch, or an IDX pair; always a list."""
    if labels_path is not None:
        return [read_idx(path, labels_path)]
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] == _LDS_MAGIC:
        return parse_datasets(buf)
    return [parse_cifar10_bin(buf)]


def pick_targets(labels, num_classes, rng):
    """Uniform random target per example, never equal to its label."""
    if num_classes < 2:
        raise UsageError("need at least two classes to pick a target")
    rng = make_rng(rng)
    labels = np.asarray(labels, dtype=np.int64)
    offsets = rng.integers(1, num_classes, size=labels.shape[0])
    return (labels + offsets) % num_classes
